#include <doctest.h>

#include "pamcl/errors.hpp"
#include "pamcl/kernels.hpp"
#include "pamcl/model.hpp"
#include "pamcl/pruning.hpp"
#include "testutil.hpp"

using namespace pamcl;
namespace k = pamcl::kernels;

TEST_CASE("split_backbone: rn18 feature dims and template counts") {
  auto [ext, tmpl] = testutil::random_split("rn18", 50);
  CHECK(ext.out_channels == 256);
  CHECK(tmpl.in_channels == 256);
  CHECK(tmpl.out_channels == 512);  // d = 512 for this family member
  CHECK(tmpl.dense_param_count == 8393728);
  // extractor is not trainable, template is
  std::vector<Parameter*> tp;
  tmpl.stage.collect_params(tp);
  for (Parameter* p : tp) CHECK(p->trainable);
}

TEST_CASE("split_backbone: rn50 template matches the shape-walk value") {
  auto [ext, tmpl] = testutil::random_split("rn50", 51);
  CHECK(tmpl.dense_param_count == 14964736);  // ~14.96M
  CHECK(ext.out_channels == 1024);
}

TEST_CASE("split_backbone rejects malformed weights naming the layer") {
  BackboneNet net = build_backbone(backbone_variant("rn18"));
  Rng rng(52);
  init_backbone(net, rng);
  StateDict d = backbone_state_dict(net);
  d.erase("layer3.1.conv1.weight");
  CHECK_THROWS_WITH_AS(split_backbone(d, "rn18"),
                       doctest::Contains("layer3.1.conv1.weight"),
                       StructuralError);
}

TEST_CASE("extract_features: shape, determinism, finiteness, immutability") {
  auto [ext, tmpl] = testutil::random_split("rn18", 53);
  const Tensor batch = testutil::random_tensor({2, 3, 224, 224}, 54, 0.5);
  const StateDict before = ext.state_dict();

  const Tensor f1 = extract_features(ext, batch);
  CHECK(f1.shape() == std::vector<int64_t>{2, 256, 14, 14});

  const Tensor f2 = extract_features(ext, batch);
  CHECK(f1.equals(f2));  // eval mode is deterministic

  Tensor zero({1, 3, 224, 224});
  CHECK(extract_features(ext, zero).all_finite());

  CHECK_THROWS_AS(extract_features(ext, testutil::random_tensor({1, 3, 32, 32}, 55)),
                  InputError);

  // no parameter or statistic changed
  const StateDict after = ext.state_dict();
  for (const auto& [name, t] : before) CHECK(after.at(name).equals(t));
}

TEST_CASE("tiny extractor end-to-end shape") {
  auto [ext, tmpl] = testutil::random_split("tiny", 56);
  CHECK(ext.out_channels == 64);
  const Tensor f = ext.extract(testutil::random_tensor({5, 3, 32, 32}, 57));
  CHECK(f.shape() == std::vector<int64_t>{5, 64, 8, 8});
}

TEST_CASE("instantiate_module copy semantics") {
  auto [ext, tmpl] = testutil::random_split("tiny", 58);
  AdaptationModule a = instantiate_module(tmpl, InitStrategy::pretrained, nullptr, 0);
  CHECK(a.task_ids == std::vector<int>{0});
  CHECK(!a.frozen);
  // bitwise equality with the template
  StateDict da = stage_state_dict(a.stage, "b");
  StateDict dt = stage_state_dict(tmpl.stage, "b");
  for (const auto& [name, t] : dt) CHECK(da.at(name).equals(t));

  // relevant strategy clones the donor, mask included
  AdaptationModule donor = instantiate_module(tmpl, InitStrategy::pretrained, nullptr, 3);
  PruningPlan plan = build_pruning_plan(donor, 0.5f);
  apply_plan(donor, plan);
  donor.set_frozen(true);
  AdaptationModule b = instantiate_module(tmpl, InitStrategy::relevant, &donor, 4);
  CHECK(b.plan.has_value());
  CHECK(*b.plan == *donor.plan);
  CHECK(!b.frozen);
  StateDict db = stage_state_dict(b.stage, "b");
  StateDict dd = stage_state_dict(donor.stage, "b");
  for (const auto& [name, t] : dd) CHECK(db.at(name).equals(t));

  CHECK_THROWS_AS(instantiate_module(tmpl, InitStrategy::relevant, nullptr, 1),
                  ConfigError);
}

TEST_CASE("expand_classifier appends rows without touching old ones") {
  Rng rng(59);
  UnifiedClassifier c = make_classifier(16);
  CHECK(c.rows() == 0);
  CHECK_THROWS_AS(expand_classifier(c, 0, 1, rng), ConfigError);

  c = expand_classifier(c, 5, 1, rng);
  CHECK(c.rows() == 5);
  for (int r = 0; r < 5; ++r) {
    CHECK(c.row_trainable[static_cast<size_t>(r)] == 1);
    CHECK(c.lin.bias.value[r] == 0.0f);  // zero-bias init
  }
  const Tensor w_before = c.lin.weight.value;

  c.freeze_rows_of_task(1);
  UnifiedClassifier c2 = expand_classifier(c, 10, 2, rng);
  CHECK(c2.rows() == 15);
  // first 5 rows bitwise unchanged
  for (int64_t i = 0; i < 5 * 16; ++i) CHECK(c2.lin.weight.value[i] == w_before[i]);
  for (int r = 0; r < 5; ++r) CHECK(c2.row_trainable[static_cast<size_t>(r)] == 0);
  for (int r = 5; r < 15; ++r) CHECK(c2.row_trainable[static_cast<size_t>(r)] == 1);
}

TEST_CASE("forward_task: shapes, softmax normalization, width growth") {
  auto [ext, tmpl] = testutil::random_split("tiny", 60);
  AdaptationModule mod = instantiate_module(tmpl, InitStrategy::pretrained, nullptr, 0);
  Rng rng(61);
  UnifiedClassifier cls = expand_classifier(make_classifier(128), 10, 0, rng);

  const Tensor batch = testutil::random_tensor({4, 3, 32, 32}, 62, 0.5);
  const Tensor logits = forward_task(ext, mod, cls, batch);
  CHECK(logits.shape() == std::vector<int64_t>{4, 10});

  const Tensor p = k::softmax_rows(logits);
  for (int64_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < 10; ++j) s += p.at2(i, j);
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }

  UnifiedClassifier wider = expand_classifier(cls, 5, 1, rng);
  CHECK(forward_task(ext, mod, wider, batch).dim(1) == 15);

  UnifiedClassifier wrong = expand_classifier(make_classifier(64), 3, 0, rng);
  CHECK_THROWS_AS(forward_task(ext, mod, wrong, batch), StructuralError);
}

TEST_CASE("forward_task ignores values hidden in masked channels") {
  auto [ext, tmpl] = testutil::random_split("tiny", 63);
  AdaptationModule mod = instantiate_module(tmpl, InitStrategy::pretrained, nullptr, 0);
  PruningPlan plan = build_pruning_plan(mod, 0.75f);
  apply_plan(mod, plan);
  Rng rng(64);
  UnifiedClassifier cls = expand_classifier(make_classifier(128), 6, 0, rng);
  const Tensor batch = testutil::random_tensor({3, 3, 32, 32}, 65, 0.5);
  const Tensor before = forward_task(ext, mod, cls, batch);

  Rng noise(66);
  for (size_t b = 0; b < mod.stage.blocks.size(); ++b) {
    const auto& keep = plan.masks.at("b" + std::to_string(b) + ".conv1").keep;
    Tensor& w = mod.stage.blocks[b].conv1.weight.value;
    const int64_t per = w.dim(1) * w.dim(2) * w.dim(3);
    for (size_t c = 0; c < keep.size(); ++c)
      if (!keep[c])
        for (int64_t i = 0; i < per; ++i)
          w.ptr()[static_cast<int64_t>(c) * per + i] =
              static_cast<float>(noise.normal(0.0, 5.0));
  }
  const Tensor after = forward_task(ext, mod, cls, batch);
  CHECK(before.equals(after));
}

TEST_CASE("count_parameters: modes, landmarks, internal consistency") {
  auto [ext, tmpl] = testutil::random_split("rn18", 67);

  SessionState state;
  state.extractor = std::move(ext);
  state.module_template = tmpl;
  Rng rng(68);
  state.classifier = make_classifier(512);

  CHECK_THROWS_AS(count_parameters(state, CountingMode::compacted_physical),
                  StateError);

  // simulate two 5-class tasks with 96%-pruned modules
  for (int t = 0; t < 2; ++t) {
    AdaptationModule m = instantiate_module(tmpl, InitStrategy::pretrained, nullptr, t);
    PruningPlan plan = build_pruning_plan(m, 0.96f);
    apply_plan(m, plan);
    AdaptationModule cm = compact(m);
    cm.module_id = t;
    cm.set_frozen(true);
    state.modules.push_back(std::move(cm));
    state.classifier = expand_classifier(state.classifier, 5, t, rng);
    TaskEntry e;
    e.task_id = t;
    e.module_index = t;
    for (int cid = 0; cid < 5; ++cid) {
      e.class_ids.push_back(t * 5 + cid);
      state.class_to_row[t * 5 + cid] = t * 5 + cid;
    }
    state.task_registry.push_back(e);
  }

  const ParamReport phys = count_parameters(state, CountingMode::compacted_physical);
  const ParamReport logical = count_parameters(state, CountingMode::masked_logical);

  CHECK(phys.total_after_all_tasks ==
        phys.extractor_params + phys.module_params + phys.classifier_params);
  CHECK(phys.total_after_all_tasks <= logical.total_after_all_tasks);

  // masked-logical counts the dense template per module
  CHECK(logical.module_params == 2 * 8393728);

  // compacted physical per-module: kept-channel arithmetic (21 of 512)
  // b0: conv1 21x256x9 + bn1 2*21 + conv2 512x21x9 + bn2 2*512 + ds 512*256 + 2*512
  // b1: conv1 21x512x9 + 2*21 + conv2 512x21x9 + 2*512
  const int64_t expected_module =
      (21 * 256 * 9 + 42 + 512 * 21 * 9 + 1024 + 512 * 256 + 1024) +
      (21 * 512 * 9 + 42 + 512 * 21 * 9 + 1024);
  CHECK(phys.module_params == 2 * expected_module);

  // mask cardinality equals compacted row counts
  for (const AdaptationModule& m : state.modules)
    for (size_t b = 0; b < m.stage.blocks.size(); ++b)
      CHECK(m.stage.blocks[b].conv1.out_c ==
            m.plan->kept_channels("b" + std::to_string(b) + ".conv1"));

  // trainable per task = one compacted module + 5 rows of (512+1)
  CHECK(phys.trainable_per_task == expected_module + 5 * 513);

  // order-of-magnitude landmarks for this configuration
  CHECK(phys.trainable_per_task > 300000);
  CHECK(phys.trainable_per_task < 1200000);
}

TEST_CASE("frozen module parameters are immutable through set_frozen") {
  auto [ext, tmpl] = testutil::random_split("tiny", 69);
  AdaptationModule m = instantiate_module(tmpl, InitStrategy::pretrained, nullptr, 0);
  m.set_frozen(true);
  std::vector<Parameter*> ps;
  m.stage.collect_params(ps);
  for (Parameter* p : ps) CHECK(!p->trainable);

  // an optimizer step over frozen params moves nothing
  Adam opt(ps, 1.0f);
  for (Parameter* p : ps) {
    p->zero_grad();
    p->grad.fill(1.0f);
  }
  const StateDict before = stage_state_dict(m.stage, "b");
  opt.step();
  const StateDict after = stage_state_dict(m.stage, "b");
  for (const auto& [name, t] : before) CHECK(after.at(name).equals(t));
}
