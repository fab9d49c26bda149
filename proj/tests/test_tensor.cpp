#include <doctest.h>

#include "pamcl/errors.hpp"
#include "pamcl/rng.hpp"
#include "pamcl/tensor.hpp"

using namespace pamcl;

TEST_CASE("tensor construction and accessors") {
  Tensor t({2, 3, 4, 4});
  CHECK(t.numel() == 96);
  CHECK(t.rank() == 4);
  t.at4(1, 2, 3, 3) = 5.0f;
  CHECK(t[t.numel() - 1] == 5.0f);
  CHECK(t.shape_str() == "[2x3x4x4]");

  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(m.at2(1, 0) == 3.0f);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), InputError);
}

TEST_CASE("tensor equality and diffs") {
  Tensor a = Tensor::from({3}, {1.0f, 2.0f, 3.0f});
  Tensor b = a;
  CHECK(a.equals(b));
  b[1] += 1e-4f;
  CHECK(!a.equals(b));
  CHECK(max_abs_diff(a, b) == doctest::Approx(1e-4).epsilon(1e-3));
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.uniform_index(10) < 10);
  }
  // mix() derives distinct child streams
  CHECK(Rng::mix(1, 0) != Rng::mix(1, 1));
  CHECK(Rng::mix(1, 0) != Rng::mix(2, 0));
}

TEST_CASE("rng shuffle is a permutation") {
  Rng r(3);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto orig = v;
  r.shuffle(v);
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}
