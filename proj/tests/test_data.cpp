#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pamcl/data.hpp"
#include "pamcl/errors.hpp"
#include "testutil.hpp"

using namespace pamcl;
namespace fs = std::filesystem;

TEST_CASE("synthetic corpus: determinism, shapes, label coverage") {
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.train_per_class = 6;
  spec.test_per_class = 3;
  const DatasetPair a = make_synthetic_corpus(spec);
  const DatasetPair b = make_synthetic_corpus(spec);
  CHECK(a.train.pixels == b.train.pixels);  // bit-identical
  CHECK(a.train.size() == 24);
  CHECK(a.test.size() == 12);
  CHECK(a.train.num_classes == 4);

  std::vector<int> counts(4, 0);
  for (int l : a.train.labels) ++counts[static_cast<size_t>(l)];
  for (int c : counts) CHECK(c == 6);

  for (float v : a.train.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // a different class salt yields different classes
  SyntheticSpec other = spec;
  other.class_salt = spec.class_salt + 1;
  const DatasetPair c = make_synthetic_corpus(other);
  CHECK(c.train.pixels != a.train.pixels);

  // train and test samples differ (different split salt)
  CHECK(a.train.pixels != a.test.pixels);
}

TEST_CASE("dataset registry ids") {
  const DatasetPair p = load_dataset("synth:3x4x2:55", "/nonexistent");
  CHECK(p.train.num_classes == 3);
  CHECK(p.train.size() == 12);
  CHECK(p.test.size() == 6);
  CHECK_THROWS_AS(load_dataset("synth:bogus", "/nonexistent"), ConfigError);
  CHECK_THROWS_AS(load_dataset("imagenet", "/nonexistent"), IngestionError);
}

TEST_CASE("channel stats match a brute-force pass") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.train_per_class = 4;
  spec.test_per_class = 1;
  const DatasetPair p = make_synthetic_corpus(spec);
  std::vector<float> mean, stddev;
  channel_stats(p.train, mean, stddev);

  const int64_t area = 32 * 32;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int64_t i = 0; i < p.train.size(); ++i)
      for (int64_t j = 0; j < area; ++j) sum += p.train.sample(i)[c * area + j];
    const double m = sum / static_cast<double>(p.train.size() * area);
    CHECK(mean[static_cast<size_t>(c)] == doctest::Approx(m).epsilon(1e-5));
    CHECK(stddev[static_cast<size_t>(c)] > 0.0f);
  }
}

TEST_CASE("make_batch normalizes and augments deterministically") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.train_per_class = 2;
  spec.test_per_class = 1;
  const DatasetPair p = make_synthetic_corpus(spec);
  const std::vector<float> mean{0.5f, 0.5f, 0.5f}, stddev{0.25f, 0.25f, 0.25f};
  const std::vector<int64_t> idx{0, 3};

  const Tensor plain = make_batch(p.train, idx, mean, stddev);
  CHECK(plain.shape() == std::vector<int64_t>{2, 3, 32, 32});
  // spot-check normalization of the first pixel
  CHECK(plain[0] ==
        doctest::Approx((p.train.sample(0)[0] - 0.5f) / 0.25f).epsilon(1e-6));

  Rng aug1(9), aug2(9), aug3(10);
  const Tensor a1 = make_batch(p.train, idx, mean, stddev, &aug1);
  const Tensor a2 = make_batch(p.train, idx, mean, stddev, &aug2);
  CHECK(a1.equals(a2));  // same augmentation stream
  const Tensor a3 = make_batch(p.train, idx, mean, stddev, &aug3);
  CHECK(!a1.equals(a3));

  CHECK_THROWS_AS(make_batch(p.train, std::span<const int64_t>{}, mean, stddev),
                  InputError);
}

TEST_CASE("cifar-10 binary ingestion on a fabricated file set") {
  const fs::path root = fs::temp_directory_path() / "pamcl_cifar_test";
  const fs::path dir = root / "cifar-10-batches-bin";
  fs::create_directories(dir);

  // two records per training batch file, distinct labels and pixel ramps
  auto write_file = [&](const fs::path& p, int base_label) {
    std::ofstream out(p, std::ios::binary);
    for (int r = 0; r < 2; ++r) {
      out.put(static_cast<char>(base_label + r));
      for (int i = 0; i < 3072; ++i)
        out.put(static_cast<char>((i + r + base_label) % 256));
    }
  };
  for (int b = 1; b <= 5; ++b)
    write_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), b % 9);
  write_file(dir / "test_batch.bin", 3);

  const DatasetPair p = load_cifar10(root);
  CHECK(p.train.size() == 10);
  CHECK(p.test.size() == 2);
  CHECK(p.train.num_classes == 10);
  CHECK(p.train.labels[0] == 1);
  CHECK(p.train.labels[1] == 2);
  // first red-plane byte of record 0 in batch 1 is (0 + 0 + 1) % 256 = 1
  CHECK(p.train.sample(0)[0] == doctest::Approx(1.0f / 255.0f).epsilon(1e-6));

  fs::remove_all(root);
  CHECK_THROWS_WITH_AS(load_cifar10(root), doctest::Contains("PAMCL_DATA_ROOT"),
                       IngestionError);
}

TEST_CASE("cifar-100 binary ingestion skips the coarse label") {
  const fs::path root = fs::temp_directory_path() / "pamcl_cifar100_test";
  const fs::path dir = root / "cifar-100-binary";
  fs::create_directories(dir);
  for (const char* name : {"train.bin", "test.bin"}) {
    std::ofstream out(dir / name, std::ios::binary);
    out.put(static_cast<char>(7));   // coarse, ignored
    out.put(static_cast<char>(42));  // fine
    for (int i = 0; i < 3072; ++i) out.put(static_cast<char>(128));
  }
  const DatasetPair p = load_cifar100(root);
  CHECK(p.train.size() == 1);
  CHECK(p.train.labels[0] == 42);
  CHECK(p.train.num_classes == 100);
  fs::remove_all(root);
}
