#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "pamcl/errors.hpp"
#include "pamcl/kernels.hpp"
#include "pamcl/model.hpp"
#include "pamcl/pruning.hpp"
#include "testutil.hpp"

using namespace pamcl;
namespace k = pamcl::kernels;

namespace {

AdaptationModule make_test_module(int in_c, int planes, int blocks,
                                  uint64_t seed, bool bottleneck = false,
                                  int expansion = 1) {
  AdaptationModule m;
  int c = in_c;
  for (int i = 0; i < blocks; ++i) {
    m.stage.blocks.push_back(make_block(bottleneck, c, planes, i == 0 ? 2 : 1, expansion));
    c = planes * expansion;
  }
  Rng rng(seed);
  std::vector<Parameter*> ps;
  m.stage.collect_params(ps);
  for (Parameter* p : ps)
    if (p->value.rank() == 4)
      for (int64_t j = 0; j < p->value.numel(); ++j)
        p->value[j] = static_cast<float>(rng.normal(0.0, 0.1));
  m.in_channels = in_c;
  m.out_channels = planes * expansion;
  m.dense_param_count = m.stage.param_count();
  return m;
}

std::vector<size_t> argsort(const std::vector<float>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace

TEST_CASE("channel saliency equals brute-force abs sum") {
  const Tensor w = testutil::random_tensor({8, 4, 3, 3}, 21);
  const SaliencyScores s = channel_saliency(w, "layer");
  REQUIRE(s.scores.size() == 8);
  for (int64_t c = 0; c < 8; ++c) {
    double expect = 0.0;
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t a = 0; a < 3; ++a)
        for (int64_t b = 0; b < 3; ++b) expect += std::fabs(w.at4(c, i, a, b));
    CHECK(s.scores[static_cast<size_t>(c)] ==
          doctest::Approx(expect).epsilon(1e-5));
    CHECK(s.scores[static_cast<size_t>(c)] >= 0.0f);
  }
}

TEST_CASE("saliency zero channel and scale homogeneity") {
  Tensor w = testutil::random_tensor({4, 2, 3, 3}, 22);
  for (int64_t i = 0; i < 2 * 9; ++i) w.ptr()[1 * 2 * 9 + i] = 0.0f;
  const SaliencyScores s = channel_saliency(w);
  CHECK(s.scores[1] == 0.0f);

  Tensor w2 = w;
  for (int64_t i = 0; i < w2.numel(); ++i) w2[i] *= 2.0f;
  const SaliencyScores s2 = channel_saliency(w2);
  for (size_t c = 0; c < 4; ++c)
    CHECK(s2.scores[c] == doctest::Approx(2.0 * s.scores[c]).epsilon(1e-5));
  CHECK(argsort(s.scores) == argsort(s2.scores));

  CHECK_THROWS_AS(channel_saliency(Tensor({0, 2, 3, 3})), InputError);
}

TEST_CASE("plan drops the lowest-saliency channels with index tie-break") {
  // scores [4,1,3,2] at magnitude 0.5 -> drop channels {1,3}
  AdaptationModule m = make_test_module(4, 4, 1, 23);
  Tensor& w = m.stage.blocks[0].conv1.weight.value;
  const float scores[4] = {4.0f, 1.0f, 3.0f, 2.0f};
  const int64_t per = w.dim(1) * w.dim(2) * w.dim(3);
  for (int64_t c = 0; c < 4; ++c)
    for (int64_t i = 0; i < per; ++i)
      w.ptr()[c * per + i] = scores[c] / static_cast<float>(per);

  const PruningPlan plan = build_pruning_plan(m, 0.5f);
  const auto& keep = plan.masks.at("b0.conv1").keep;
  CHECK(keep == std::vector<uint8_t>{1, 0, 1, 0});

  // all channels equal -> ties keep the lower indices
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = 0.25f;
  const PruningPlan tie = build_pruning_plan(m, 0.5f);
  CHECK(tie.masks.at("b0.conv1").keep == std::vector<uint8_t>{1, 1, 0, 0});
}

TEST_CASE("plan validation and determinism") {
  AdaptationModule m = make_test_module(4, 8, 2, 24);
  CHECK_THROWS_AS(build_pruning_plan(m, 1.0f), ConfigError);
  CHECK_THROWS_AS(build_pruning_plan(m, -0.1f), ConfigError);

  const PruningPlan a = build_pruning_plan(m, 0.5f);
  const PruningPlan b = build_pruning_plan(m, 0.5f);
  CHECK(a == b);
  CHECK(a.scope == std::vector<std::string>{"b0.conv1", "b1.conv1"});

  // magnitude 0 keeps everything
  const PruningPlan zero = build_pruning_plan(m, 0.0f);
  for (const auto& id : zero.scope)
    CHECK(zero.kept_channels(id) == 8);

  // extreme magnitude still keeps at least one channel per layer
  const PruningPlan extreme = build_pruning_plan(m, 0.999f);
  for (const auto& id : extreme.scope)
    CHECK(extreme.kept_channels(id) >= 1);
}

TEST_CASE("monotone sparsity: lower magnitude drop sets nest inside higher") {
  AdaptationModule m = make_test_module(6, 10, 2, 25);
  const PruningPlan pa = build_pruning_plan(m, 0.3f);
  const PruningPlan pb = build_pruning_plan(m, 0.7f);
  for (const auto& id : pa.scope) {
    const auto& ka = pa.masks.at(id).keep;
    const auto& kb = pb.masks.at(id).keep;
    for (size_t c = 0; c < ka.size(); ++c)
      if (!ka[c]) CHECK(!kb[c]);  // dropped at 0.3 -> dropped at 0.7
  }
}

TEST_CASE("bottleneck scope covers conv1 and conv2, never block outputs") {
  AdaptationModule m = make_test_module(16, 8, 2, 26, /*bottleneck=*/true, 4);
  const PruningPlan plan = build_pruning_plan(m, 0.5f);
  CHECK(plan.scope == std::vector<std::string>{"b0.conv1", "b0.conv2",
                                               "b1.conv1", "b1.conv2"});
}

TEST_CASE("apply: magnitude-0 plan is an identity on the forward pass") {
  AdaptationModule m = make_test_module(4, 6, 1, 27);
  const Tensor x = testutil::random_tensor({2, 4, 8, 8}, 28);
  const Tensor before = m.forward(x);
  PruningPlan plan = build_pruning_plan(m, 0.0f);
  apply_plan(m, plan);
  const Tensor after = m.forward(x);
  CHECK(before.equals(after));
}

TEST_CASE("apply rejects a plan from a different topology") {
  AdaptationModule m = make_test_module(4, 6, 1, 29);
  AdaptationModule other = make_test_module(4, 6, 2, 30);
  PruningPlan plan = build_pruning_plan(other, 0.5f);
  CHECK_THROWS_AS(apply_plan(m, plan), StructuralError);
}

TEST_CASE("masked forward equals hand-sliced oracle") {
  AdaptationModule m = make_test_module(4, 8, 1, 31);
  AdaptationModule dense = m;
  PruningPlan plan = build_pruning_plan(m, 0.5f);
  apply_plan(m, plan);

  // Oracle: physically rebuild a narrower block from the dense weights by
  // hand, independent of compact().
  const auto kept = plan.kept_indices("b0.conv1");
  Block narrow = make_block(false, 4, 8, 2, 1);
  Block& src = dense.stage.blocks[0];
  Tensor w1({static_cast<int64_t>(kept.size()), 4, 3, 3});
  for (size_t r = 0; r < kept.size(); ++r)
    for (int64_t i = 0; i < 4 * 9; ++i)
      w1.ptr()[static_cast<int64_t>(r) * 4 * 9 + i] =
          src.conv1.weight.value.ptr()[kept[r] * 4 * 9 + i];
  narrow.conv1 = Conv2d::make(4, static_cast<int>(kept.size()), 3, 2, 1);
  narrow.conv1.weight.value = w1;
  narrow.bn1 = BatchNorm2d::make(static_cast<int>(kept.size()));
  for (size_t r = 0; r < kept.size(); ++r) {
    narrow.bn1.gamma.value[static_cast<int64_t>(r)] = src.bn1.gamma.value[kept[r]];
    narrow.bn1.beta.value[static_cast<int64_t>(r)] = src.bn1.beta.value[kept[r]];
    narrow.bn1.running_mean[static_cast<int64_t>(r)] = src.bn1.running_mean[kept[r]];
    narrow.bn1.running_var[static_cast<int64_t>(r)] = src.bn1.running_var[kept[r]];
  }
  Tensor w2({8, static_cast<int64_t>(kept.size()), 3, 3});
  for (int64_t o = 0; o < 8; ++o)
    for (size_t c = 0; c < kept.size(); ++c)
      for (int64_t i = 0; i < 9; ++i)
        w2.ptr()[(o * static_cast<int64_t>(kept.size()) +
                  static_cast<int64_t>(c)) *
                     9 +
                 i] = src.conv2.weight.value.ptr()[(o * 8 + kept[c]) * 9 + i];
  narrow.conv2 = Conv2d::make(static_cast<int>(kept.size()), 8, 3, 1, 1);
  narrow.conv2.weight.value = w2;
  narrow.bn2 = src.bn2;
  narrow.ds_conv = src.ds_conv;
  narrow.ds_bn = src.ds_bn;

  const Tensor x = testutil::random_tensor({3, 4, 8, 8}, 32);
  const Tensor masked_out = m.forward(x);
  const Tensor oracle_out = narrow.forward(x);
  CHECK(max_scaled_diff(masked_out, oracle_out) < 1e-5f);
}

TEST_CASE("masked-zero property: perturbing dropped weights changes nothing") {
  AdaptationModule m = make_test_module(4, 8, 2, 33);
  PruningPlan plan = build_pruning_plan(m, 0.75f);
  apply_plan(m, plan);
  const Tensor x = testutil::random_tensor({2, 4, 8, 8}, 34);
  const Tensor before = m.forward(x);

  Rng rng(35);
  for (size_t b = 0; b < m.stage.blocks.size(); ++b) {
    const auto& keep = plan.masks.at("b" + std::to_string(b) + ".conv1").keep;
    Tensor& w = m.stage.blocks[b].conv1.weight.value;
    const int64_t per = w.dim(1) * w.dim(2) * w.dim(3);
    for (size_t c = 0; c < keep.size(); ++c)
      if (!keep[c])
        for (int64_t i = 0; i < per; ++i)
          w.ptr()[static_cast<int64_t>(c) * per + i] =
              static_cast<float>(rng.normal(0.0, 10.0));
  }
  const Tensor after = m.forward(x);
  CHECK(before.equals(after));  // exact, not approximate
}

TEST_CASE("gradient suppression: a training step keeps masked weights at zero") {
  AdaptationModule m = make_test_module(4, 8, 1, 36);
  PruningPlan plan = build_pruning_plan(m, 0.5f);
  apply_plan(m, plan);
  Linear head = Linear::make(8, 3);
  Rng rng(37);
  for (int64_t i = 0; i < head.weight.value.numel(); ++i)
    head.weight.value[i] = static_cast<float>(rng.normal(0.0, 0.1));

  std::vector<Parameter*> params;
  m.stage.collect_params(params);
  params.push_back(&head.weight);
  params.push_back(&head.bias);
  Adam opt(params, 1e-2f);

  for (int step = 0; step < 3; ++step) {
    opt.zero_grad();
    const Tensor x = testutil::random_tensor({4, 4, 8, 8}, 38 + step);
    std::vector<Block::Cache> caches;
    Tensor fmap = m.stage.forward(x, caches);
    const Tensor pooled = k::gap_forward(fmap);
    Linear::Cache lc;
    Tensor logits = head.forward(pooled, lc);
    Tensor dl;
    k::cross_entropy(logits, {0, 1, 2, 0}, &dl);
    Tensor dpooled = head.backward(dl, lc);
    Tensor dfmap = k::gap_backward(dpooled, fmap.dim(2), fmap.dim(3));
    m.stage.backward(dfmap, caches);
    opt.step();
  }

  const auto& keep = plan.masks.at("b0.conv1").keep;
  Tensor& w = m.stage.blocks[0].conv1.weight.value;
  const int64_t per = w.dim(1) * w.dim(2) * w.dim(3);
  for (size_t c = 0; c < keep.size(); ++c) {
    if (keep[c]) continue;
    for (int64_t i = 0; i < per; ++i)
      CHECK(w.ptr()[static_cast<int64_t>(c) * per + i] == 0.0f);
    CHECK(m.stage.blocks[0].bn1.gamma.value[static_cast<int64_t>(c)] == 0.0f);
    CHECK(m.stage.blocks[0].bn1.beta.value[static_cast<int64_t>(c)] == 0.0f);
  }
}

TEST_CASE("compaction: all-keep mask yields a structurally identical module") {
  AdaptationModule m = make_test_module(4, 6, 2, 39);
  PruningPlan plan = build_pruning_plan(m, 0.0f);
  apply_plan(m, plan);
  const AdaptationModule c = compact(m);
  CHECK(c.compacted);
  CHECK(c.param_count() == m.param_count());
  const Tensor x = testutil::random_tensor({2, 4, 8, 8}, 40);
  CHECK(m.forward(x).equals(c.forward(x)));
}

TEST_CASE("compaction equivalence on random inputs (basic and bottleneck)") {
  for (bool bottleneck : {false, true}) {
    AdaptationModule m = make_test_module(8, 8, 2, 41 + bottleneck,
                                          bottleneck, bottleneck ? 4 : 1);
    PruningPlan plan = build_pruning_plan(m, 0.6f);
    apply_plan(m, plan);
    const AdaptationModule c = compact(m);

    CHECK(c.param_count() < m.dense_param_count);

    for (int trial = 0; trial < 10; ++trial) {
      const Tensor x = testutil::random_tensor({2, 8, 8, 8}, 100 + trial);
      const Tensor ym = m.forward(x);
      const Tensor yc = c.forward(x);
      CHECK(max_scaled_diff(yc, ym) < 1e-5f);
    }
  }
}

TEST_CASE("compact requires a mask and is idempotent") {
  AdaptationModule m = make_test_module(4, 6, 1, 43);
  CHECK_THROWS_AS(compact(m), StateError);
  PruningPlan plan = build_pruning_plan(m, 0.5f);
  apply_plan(m, plan);
  const AdaptationModule once = compact(m);
  const AdaptationModule twice = compact(once);
  CHECK(once.param_count() == twice.param_count());
}

TEST_CASE("plan text record round-trips bit-exactly") {
  AdaptationModule m = make_test_module(6, 12, 2, 44, true, 2);
  PruningPlan plan = build_pruning_plan(m, 0.96f);
  plan.created_at_epoch = 1;
  const std::string text = plan.to_text();
  const PruningPlan back = PruningPlan::from_text(text);
  CHECK(back == plan);
  CHECK(back.to_text() == text);
  CHECK_THROWS_AS(PruningPlan::from_text("garbage"), IngestionError);
}
