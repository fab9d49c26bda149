#include <doctest.h>

#include "pamcl/backbone.hpp"
#include "pamcl/errors.hpp"
#include "testutil.hpp"

using namespace pamcl;

namespace {

// Independent shape walk: per-layer parameter sizes declared by hand from
// the architecture family, not by querying the built network.
int64_t rn50_stage4_expected() {
  // block 0: 1x1 1024->512, 3x3 512->512, 1x1 512->2048, ds 1x1 1024->2048
  int64_t convs = 1024 * 512 + 512 * 512 * 9 + 512 * 2048 + 1024 * 2048;
  // blocks 1,2: 1x1 2048->512, 3x3 512->512, 1x1 512->2048
  convs += 2 * (2048 * 512 + 512 * 512 * 9 + 512 * 2048);
  // BN affine pairs: b0 {512,512,2048,2048(ds)}, b1/b2 {512,512,2048}
  int64_t bn = 2 * (512 + 512 + 2048 + 2048) + 2 * 2 * (512 + 512 + 2048);
  return convs + bn;
}

int64_t rn18_stage4_expected() {
  int64_t convs = 512 * 256 * 9 + 512 * 512 * 9 + 256 * 512  // b0 + ds
                  + 512 * 512 * 9 + 512 * 512 * 9;           // b1
  int64_t bn = 2 * (512 + 512 + 512) + 2 * (512 + 512);
  return convs + bn;
}

}  // namespace

TEST_CASE("variant registry") {
  CHECK(backbone_variant("rn18").stage_blocks == std::array<int, 4>{2, 2, 2, 2});
  CHECK(backbone_variant("rn50").bottleneck);
  CHECK(backbone_variant("tiny").input_size == 32);
  CHECK_THROWS_AS(backbone_variant("rn19"), ConfigError);
}

TEST_CASE("stage-4 template parameter counts match the shape-walk oracle") {
  const Stage s50 = make_stage(backbone_variant("rn50"), 3);
  CHECK(s50.param_count() == rn50_stage4_expected());
  // the spec-level landmark: ~14.96M
  CHECK(s50.param_count() == 14964736);

  const Stage s18 = make_stage(backbone_variant("rn18"), 3);
  CHECK(s18.param_count() == rn18_stage4_expected());
  CHECK(s18.param_count() == 8393728);
}

TEST_CASE("tiny backbone forward shapes") {
  BackboneNet net = build_backbone(backbone_variant("tiny"));
  Rng rng(5);
  init_backbone(net, rng);
  const Tensor x = testutil::random_tensor({2, 3, 32, 32}, 6);
  const Tensor fmap = net.forward(x);
  CHECK(fmap.shape() == std::vector<int64_t>{2, 128, 4, 4});
}

TEST_CASE("backbone state dict round trip is exact") {
  BackboneNet net = build_backbone(backbone_variant("tiny"));
  Rng rng(7);
  init_backbone(net, rng);
  const StateDict d = backbone_state_dict(net);
  CHECK(d.count("conv1.weight") == 1);
  CHECK(d.count("layer4.0.conv2.weight") == 1);
  CHECK(d.count("layer2.0.downsample.0.weight") == 1);

  BackboneNet other = build_backbone(backbone_variant("tiny"));
  load_backbone_state(other, d);
  const StateDict d2 = backbone_state_dict(other);
  for (const auto& [name, t] : d) CHECK(d2.at(name).equals(t));
}

TEST_CASE("loading a checkpoint with a missing or misshapen layer names it") {
  BackboneNet net = build_backbone(backbone_variant("tiny"));
  Rng rng(8);
  init_backbone(net, rng);
  StateDict d = backbone_state_dict(net);
  d.erase("layer3.0.conv1.weight");
  BackboneNet target = build_backbone(backbone_variant("tiny"));
  CHECK_THROWS_WITH_AS(load_backbone_state(target, d),
                       doctest::Contains("layer3.0.conv1.weight"),
                       StructuralError);

  StateDict d2 = backbone_state_dict(net);
  d2["layer2.0.conv2.weight"] = Tensor({1, 2, 3, 3});
  CHECK_THROWS_WITH_AS(load_backbone_state(target, d2),
                       doctest::Contains("layer2.0.conv2.weight"),
                       StructuralError);
}

TEST_CASE("train-mode backbone backward runs and fills gradients") {
  BackboneNet net = build_backbone(backbone_variant("tiny"));
  Rng rng(9);
  init_backbone(net, rng);
  BackboneNet::Cache cache;
  const Tensor x = testutil::random_tensor({3, 3, 32, 32}, 10);
  const Tensor fmap = net.forward(x, cache);
  Tensor dy(fmap.shape());
  dy.fill(1.0f / static_cast<float>(fmap.numel()));
  net.backward(dy, cache);
  std::vector<Parameter*> params;
  net.collect_params(params);
  bool any_nonzero = false;
  for (Parameter* p : params) {
    REQUIRE(p->grad.same_shape(p->value));
    if (max_abs_diff(p->grad, Tensor(p->grad.shape())) > 0) any_nonzero = true;
  }
  CHECK(any_nonzero);
}
