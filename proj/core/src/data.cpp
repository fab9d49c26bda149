// Copyright 2026 The pamcl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pamcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdio>

#include "pamcl/errors.hpp"

namespace pamcl {

namespace {

struct ClassStyle {
  float color_a[3];
  float color_b[3];
  float angle;      // grating orientation
  float freq;       // cycles per image
  int shape;        // 0 disk, 1 box, 2 cross, 3 ring
  float shape_size; // fraction of image
};

ClassStyle class_style(uint64_t salt, int class_id, bool siblings, int num_classes) {
  int base_class = class_id;
  bool perturbed = false;
  if (siblings && class_id >= (num_classes + 1) / 2) {
    base_class = class_id - (num_classes + 1) / 2;
    perturbed = true;
  }
  Rng rng(Rng::mix(salt, static_cast<uint64_t>(base_class)));
  ClassStyle s;
  for (int c = 0; c < 3; ++c) s.color_a[c] = static_cast<float>(rng.uniform(0.15, 0.85));
  for (int c = 0; c < 3; ++c) s.color_b[c] = static_cast<float>(rng.uniform(0.15, 0.85));
  s.angle = static_cast<float>(rng.uniform(0.0, M_PI));
  s.freq = static_cast<float>(rng.uniform(1.5, 5.0));
  s.shape = static_cast<int>(rng.uniform_index(4));
  s.shape_size = static_cast<float>(rng.uniform(0.22, 0.38));
  if (perturbed) {
    Rng jitter(Rng::mix(salt ^ 0xabcdefULL, static_cast<uint64_t>(class_id)));
    for (int c = 0; c < 3; ++c)
      s.color_a[c] = std::clamp(
          s.color_a[c] + static_cast<float>(jitter.uniform(-0.06, 0.06)), 0.0f, 1.0f);
    s.angle += static_cast<float>(jitter.uniform(-0.12, 0.12));
    s.freq += static_cast<float>(jitter.uniform(-0.3, 0.3));
  }
  return s;
}

void render_sample(const ClassStyle& s, int size, Rng& rng, float* out) {
  const float phase = static_cast<float>(rng.uniform(0.0, 2.0 * M_PI));
  const float cx = 0.5f + static_cast<float>(rng.uniform(-0.15, 0.15));
  const float cy = 0.5f + static_cast<float>(rng.uniform(-0.15, 0.15));
  const float brightness = static_cast<float>(rng.uniform(0.85, 1.15));
  const float noise_sigma = 0.05f;
  const float ca = std::cos(s.angle), sa = std::sin(s.angle);
  const float r = s.shape_size;

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float u = (static_cast<float>(x) + 0.5f) / static_cast<float>(size);
      const float v = (static_cast<float>(y) + 0.5f) / static_cast<float>(size);
      const float t = u * ca + v * sa;
      const float wave =
          0.5f + 0.5f * std::sin(2.0f * static_cast<float>(M_PI) * s.freq * t + phase);

      const float dx = u - cx, dy = v - cy;
      bool inside = false;
      switch (s.shape) {
        case 0: inside = dx * dx + dy * dy < r * r * 0.25f; break;
        case 1: inside = std::fabs(dx) < r * 0.5f && std::fabs(dy) < r * 0.5f; break;
        case 2:
          inside = (std::fabs(dx) < r * 0.16f && std::fabs(dy) < r * 0.55f) ||
                   (std::fabs(dy) < r * 0.16f && std::fabs(dx) < r * 0.55f);
          break;
        default: {
          const float d2 = dx * dx + dy * dy;
          inside = d2 < r * r * 0.25f && d2 > r * r * 0.09f;
          break;
        }
      }
      for (int c = 0; c < 3; ++c) {
        float val = s.color_a[c] * wave + (1.0f - wave) * 0.5f * s.color_a[c];
        if (inside) val = s.color_b[c];
        val = val * brightness + static_cast<float>(rng.normal(0.0, noise_sigma));
        out[(c * size + y) * size + x] = std::clamp(val, 0.0f, 1.0f);
      }
    }
  }
}

ImageDataset synth_split(const SyntheticSpec& spec, int per_class, uint64_t split_salt,
                         const std::string& id) {
  ImageDataset ds;
  ds.id = id;
  ds.height = ds.width = spec.image_size;
  ds.num_classes = spec.num_classes;
  const int64_t total = static_cast<int64_t>(per_class) * spec.num_classes;
  ds.pixels.resize(static_cast<size_t>(total * 3 * spec.image_size * spec.image_size));
  ds.labels.reserve(static_cast<size_t>(total));
  int64_t i = 0;
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    const ClassStyle style =
        class_style(spec.class_salt, cls, spec.siblings, spec.num_classes);
    for (int n = 0; n < per_class; ++n, ++i) {
      Rng rng(Rng::mix(Rng::mix(spec.sample_seed, split_salt),
                       static_cast<uint64_t>(cls) * 1000003ULL +
                           static_cast<uint64_t>(n)));
      render_sample(style, spec.image_size, rng, ds.pixels.data() + i * ds.sample_numel());
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

}  // namespace

DatasetPair make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.num_classes < 1 || spec.train_per_class < 1 || spec.test_per_class < 1)
    throw ConfigError("synthetic corpus: counts must be positive");
  DatasetPair pair;
  pair.train = synth_split(spec, spec.train_per_class, /*split_salt=*/0, "synthetic");
  pair.test = synth_split(spec, spec.test_per_class, /*split_salt=*/1, "synthetic");
  return pair;
}

namespace {

void read_cifar_file(const std::filesystem::path& path, int label_bytes,
                     ImageDataset& ds) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IngestionError(
        "cannot open " + path.string() +
        "; place the CIFAR binary distribution under the data root "
        "(e.g. <root>/cifar-10-batches-bin/data_batch_1.bin) or point "
        "PAMCL_DATA_ROOT at it, then retry");
  const int64_t record = label_bytes + 3072;
  std::vector<unsigned char> buf(static_cast<size_t>(record));
  while (in.read(reinterpret_cast<char*>(buf.data()), record)) {
    ds.labels.push_back(static_cast<int>(buf[static_cast<size_t>(label_bytes - 1)]));
    const size_t base = ds.pixels.size();
    ds.pixels.resize(base + 3072);
    for (int i = 0; i < 3072; ++i)
      ds.pixels[base + static_cast<size_t>(i)] =
          static_cast<float>(buf[static_cast<size_t>(label_bytes + i)]) / 255.0f;
  }
  if (in.gcount() != 0 && in.gcount() != record)
    throw IngestionError("truncated CIFAR record in " + path.string());
}

}  // namespace

DatasetPair load_cifar10(const std::filesystem::path& data_root) {
  const auto dir = data_root / "cifar-10-batches-bin";
  DatasetPair pair;
  pair.train.id = "cifar10";
  pair.train.num_classes = 10;
  for (int b = 1; b <= 5; ++b)
    read_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, pair.train);
  pair.test.id = "cifar10";
  pair.test.num_classes = 10;
  read_cifar_file(dir / "test_batch.bin", 1, pair.test);
  return pair;
}

DatasetPair load_cifar100(const std::filesystem::path& data_root) {
  const auto dir = data_root / "cifar-100-binary";
  DatasetPair pair;
  pair.train.id = "cifar100";
  pair.train.num_classes = 100;
  read_cifar_file(dir / "train.bin", 2, pair.train);  // coarse byte skipped
  pair.test.id = "cifar100";
  pair.test.num_classes = 100;
  read_cifar_file(dir / "test.bin", 2, pair.test);
  return pair;
}

DatasetPair load_dataset(const std::string& id,
                         const std::filesystem::path& data_root) {
  if (id == "cifar10") return load_cifar10(data_root);
  if (id == "cifar100") return load_cifar100(data_root);

  SyntheticSpec spec;
  if (id == "synth10") {
    spec.num_classes = 10;
    spec.train_per_class = 256;
    spec.test_per_class = 64;
    spec.class_salt = 1001;
  } else if (id == "synth20") {
    spec.num_classes = 20;
    spec.train_per_class = 160;
    spec.test_per_class = 48;
    spec.class_salt = 2002;
    spec.siblings = true;
  } else if (id == "synthpre") {
    spec.num_classes = 24;
    spec.train_per_class = 160;
    spec.test_per_class = 32;
    spec.class_salt = 9001;
  } else if (id.rfind("synth:", 0) == 0) {
    // synth:<classes>x<train>x<test>:<salt>[:siblings]
    int k = 0, tr = 0, te = 0;
    unsigned long long salt = 0;
    char tail[16] = {0};
    const int got = std::sscanf(id.c_str(), "synth:%dx%dx%d:%llu:%15s", &k, &tr,
                                &te, &salt, tail);
    if (got < 4) throw ConfigError("malformed synthetic dataset id: " + id);
    spec.num_classes = k;
    spec.train_per_class = tr;
    spec.test_per_class = te;
    spec.class_salt = salt;
    spec.siblings = got == 5 && std::string(tail) == "siblings";
  } else {
    throw IngestionError("unknown dataset id '" + id +
                         "'; known: cifar10, cifar100, synth10, synth20, "
                         "synthpre, synth:<K>x<train>x<test>:<salt>");
  }
  DatasetPair pair = make_synthetic_corpus(spec);
  pair.train.id = id;
  pair.test.id = id;
  return pair;
}

void channel_stats(const ImageDataset& ds, std::vector<float>& mean,
                   std::vector<float>& stddev) {
  if (ds.size() == 0) throw InputError("channel_stats: empty dataset");
  mean.assign(static_cast<size_t>(ds.channels), 0.0f);
  stddev.assign(static_cast<size_t>(ds.channels), 0.0f);
  const int64_t area = static_cast<int64_t>(ds.height) * ds.width;
  std::vector<double> sum(static_cast<size_t>(ds.channels), 0.0);
  std::vector<double> sq(static_cast<size_t>(ds.channels), 0.0);
  for (int64_t i = 0; i < ds.size(); ++i) {
    const float* p = ds.sample(i);
    for (int c = 0; c < ds.channels; ++c)
      for (int64_t j = 0; j < area; ++j) {
        const double v = p[c * area + j];
        sum[static_cast<size_t>(c)] += v;
        sq[static_cast<size_t>(c)] += v * v;
      }
  }
  const double n = static_cast<double>(ds.size() * area);
  for (int c = 0; c < ds.channels; ++c) {
    const double m = sum[static_cast<size_t>(c)] / n;
    mean[static_cast<size_t>(c)] = static_cast<float>(m);
    stddev[static_cast<size_t>(c)] = static_cast<float>(
        std::sqrt(std::max(1e-8, sq[static_cast<size_t>(c)] / n - m * m)));
  }
}

Tensor make_batch(const ImageDataset& ds, std::span<const int64_t> indices,
                  const std::vector<float>& mean, const std::vector<float>& stddev,
                  Rng* aug_rng) {
  if (indices.empty()) throw InputError("make_batch: empty index set");
  const int64_t c = ds.channels, h = ds.height, w = ds.width;
  Tensor batch({static_cast<int64_t>(indices.size()), c, h, w});
  constexpr int kPad = 4;
  for (size_t bi = 0; bi < indices.size(); ++bi) {
    const float* src = ds.sample(indices[bi]);
    float* dst = batch.ptr() + static_cast<int64_t>(bi) * c * h * w;

    bool flip = false;
    int64_t dy = 0, dx = 0;
    if (aug_rng) {
      flip = aug_rng->bernoulli(0.5);
      dy = static_cast<int64_t>(aug_rng->uniform_index(2 * kPad + 1)) - kPad;
      dx = static_cast<int64_t>(aug_rng->uniform_index(2 * kPad + 1)) - kPad;
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      const float m = mean[static_cast<size_t>(ch)];
      const float inv = 1.0f / stddev[static_cast<size_t>(ch)];
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          int64_t sy = y + dy;
          int64_t sx = flip ? (w - 1 - x) + dx : x + dx;
          float v = 0.0f;  // zero padding outside the crop window
          if (sy >= 0 && sy < h && sx >= 0 && sx < w)
            v = src[(ch * h + sy) * w + sx];
          dst[(ch * h + y) * w + x] = (v - m) * inv;
        }
      }
    }
  }
  return batch;
}

}  // namespace pamcl
