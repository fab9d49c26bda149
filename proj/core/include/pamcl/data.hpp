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

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pamcl/rng.hpp"
#include "pamcl/tensor.hpp"

namespace pamcl {

/// Labeled image corpus held fully in memory (pixels in [0,1], CHW order).
struct ImageDataset {
  std::string id;
  int channels = 3, height = 32, width = 32;
  std::vector<float> pixels;  // size() * C*H*W
  std::vector<int> labels;
  int num_classes = 0;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t sample_numel() const {
    return static_cast<int64_t>(channels) * height * width;
  }
  const float* sample(int64_t i) const { return pixels.data() + i * sample_numel(); }
};

struct DatasetPair {
  ImageDataset train;
  ImageDataset test;
};

/// Procedural 32x32 corpus: every class is a parametric texture (hue pair,
/// oriented grating, shape overlay); samples jitter phase, position,
/// brightness and add pixel noise. `class_salt` picks the class family, so
/// corpora with different salts share no classes. With `siblings`, the
/// second half of the classes are perturbed copies of the first half
/// (near-duplicate tasks for module-reuse studies).
struct SyntheticSpec {
  int num_classes = 10;
  int train_per_class = 256;
  int test_per_class = 64;
  int image_size = 32;
  uint64_t class_salt = 1001;
  uint64_t sample_seed = 77;
  bool siblings = false;
};

DatasetPair make_synthetic_corpus(const SyntheticSpec& spec);

/// Standard CIFAR binary layouts (data_batch_*.bin / train.bin).
DatasetPair load_cifar10(const std::filesystem::path& data_root);
DatasetPair load_cifar100(const std::filesystem::path& data_root);

/// Resolves a dataset id: "cifar10", "cifar100", the built-in synthetic
/// corpora ("synth10", "synth20", "synthpre"), or the parametric form
/// "synth:<classes>x<train>x<test>:<salt>[:siblings]".
DatasetPair load_dataset(const std::string& id,
                         const std::filesystem::path& data_root);

/// Per-channel mean/std over a dataset (pretraining normalization constants).
void channel_stats(const ImageDataset& ds, std::vector<float>& mean,
                   std::vector<float>& stddev);

/// Assembles a normalized batch tensor. With `aug_rng`, applies horizontal
/// flip + pad-4 random crop before normalization.
Tensor make_batch(const ImageDataset& ds, std::span<const int64_t> indices,
                  const std::vector<float>& mean, const std::vector<float>& stddev,
                  Rng* aug_rng = nullptr);

}  // namespace pamcl
