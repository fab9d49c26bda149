#include <doctest.h>

#include "pamcl/errors.hpp"
#include "pamcl/trainer.hpp"
#include "testutil.hpp"

using namespace pamcl;
using testutil::mini_state;
using testutil::mini_stream;
using testutil::mini_train_config;

TEST_CASE("train config validation") {
  TrainConfig c;
  c.validate();
  c.prune_magnitude = 1.0f;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.prune_epoch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("decide_reuse arithmetic") {
  // beta = 0 -> tau = 0, never reuse
  std::vector<Tensor> priors{Tensor::from({2}, {0.0f, 0.0f})};
  const Tensor c_new = Tensor::from({2}, {1.0f, 2.0f});
  ReuseDecision d0 = decide_reuse(priors, c_new, 0.0f);
  CHECK(!d0.reused);

  // single prior: d_min = d_bar = 3; beta = 2 -> tau = 6 -> reuse
  ReuseDecision d = decide_reuse(priors, c_new, 2.0f);
  CHECK(d.d_min == doctest::Approx(3.0));
  CHECK(d.d_bar == doctest::Approx(3.0));
  CHECK(d.threshold == doctest::Approx(6.0));
  CHECK(d.reused);
  CHECK(d.target_task == 0);

  // no priors: not an error, just "new module"
  CHECK(!decide_reuse({}, c_new, 5.0f).reused);

  // tie goes to the lowest task index
  std::vector<Tensor> two{Tensor::from({1}, {1.0f}), Tensor::from({1}, {3.0f})};
  ReuseDecision tied = decide_reuse(two, Tensor::from({1}, {2.0f}), 10.0f);
  CHECK(tied.target_task == 0);
}

TEST_CASE("compute_task_centroid matches brute force") {
  SessionState state = mini_state(70);
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.train_per_class = 5;
  spec.test_per_class = 1;
  const DatasetPair data = make_synthetic_corpus(spec);

  // n = 1: centroid equals the sample's pooled feature exactly
  const std::vector<int64_t> one{0};
  const Tensor c1 = compute_task_centroid(state.extractor, data.train, one);
  const Tensor batch = make_batch(data.train, one, state.extractor.norm_mean,
                                  state.extractor.norm_std);
  const Tensor pooled = kernels::gap_forward(state.extractor.extract(batch));
  for (int64_t j = 0; j < c1.numel(); ++j)
    CHECK(c1[j] == doctest::Approx(pooled.at2(0, j)).epsilon(1e-6));

  // two samples: arithmetic mean within 1e-6
  const std::vector<int64_t> two{0, 7};
  const Tensor c2 = compute_task_centroid(state.extractor, data.train, two);
  const Tensor b2 = make_batch(data.train, two, state.extractor.norm_mean,
                               state.extractor.norm_std);
  const Tensor p2 = kernels::gap_forward(state.extractor.extract(b2));
  for (int64_t j = 0; j < c2.numel(); ++j)
    CHECK(c2[j] ==
          doctest::Approx((p2.at2(0, j) + p2.at2(1, j)) / 2.0).epsilon(1e-6));

  // full set: second-pass re-extraction oracle within 1e-5 relative
  std::vector<int64_t> all(static_cast<size_t>(data.train.size()));
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int64_t>(i);
  const Tensor cf = compute_task_centroid(state.extractor, data.train, all);
  Tensor acc({cf.numel()});
  for (int64_t i = 0; i < data.train.size(); ++i) {
    const std::vector<int64_t> idx{i};
    const Tensor bi = make_batch(data.train, idx, state.extractor.norm_mean,
                                 state.extractor.norm_std);
    const Tensor pi = kernels::gap_forward(state.extractor.extract(bi));
    for (int64_t j = 0; j < cf.numel(); ++j) acc[j] += pi.at2(0, j);
  }
  for (int64_t j = 0; j < cf.numel(); ++j)
    acc[j] /= static_cast<float>(data.train.size());
  CHECK(max_rel_diff(cf, acc, 1e-3f) < 1e-5f);

  CHECK_THROWS_AS(
      compute_task_centroid(state.extractor, data.train, std::span<const int64_t>{}),
      InputError);
}

TEST_CASE("distillation_loss is zero on self") {
  const Tensor s = testutil::random_tensor({2, 4}, 71);
  CHECK(distillation_loss(s, s, 2.0f) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("train_task base case and freeze contracts") {
  SessionState state = mini_state(72);
  const TaskStream stream = mini_stream(6, 2, 8, 4, 5);
  const TrainConfig cfg = mini_train_config(2);

  const StateDict extractor_before = state.extractor.state_dict();

  const TrainLog log0 = train_task(state, stream, 0, cfg);
  CHECK(state.module_count() == 1);
  CHECK(state.classifier.rows() == 2);
  CHECK(state.centroids.size() == 1);
  CHECK(state.task_registry.size() == 1);
  CHECK(state.modules[0].frozen);
  CHECK(state.modules[0].compacted);
  CHECK(state.modules[0].plan.has_value());
  for (const TrainLog::Step& s : log0.steps) CHECK(std::isfinite(s.loss));
  // pruning event at the configured epoch
  bool pruned = false;
  for (const auto& e : log0.events)
    if (e.kind == "prune") {
      pruned = true;
      CHECK(e.epoch == cfg.prune_epoch);
    }
  CHECK(pruned);

  // classifier rows of the finished task are frozen
  for (int r = 0; r < 2; ++r) CHECK(state.classifier.row_trainable[static_cast<size_t>(r)] == 0);

  const StateDict module0_before = stage_state_dict(state.modules[0].stage, "b");
  const Tensor classifier_rows_before = state.classifier.lin.weight.value;

  const TrainLog log1 = train_task(state, stream, 1, cfg);
  CHECK(state.module_count() == 2);
  CHECK(state.classifier.rows() == 4);

  // extractor bit-identical across both sessions
  const StateDict extractor_after = state.extractor.state_dict();
  for (const auto& [name, t] : extractor_before)
    CHECK(extractor_after.at(name).equals(t));

  // frozen module 0 untouched by task 1's session
  const StateDict module0_after = stage_state_dict(state.modules[0].stage, "b");
  for (const auto& [name, t] : module0_before)
    CHECK(module0_after.at(name).equals(t));

  // task-0 classifier rows bitwise unchanged at the end of the stream
  for (int64_t i = 0; i < 2 * state.classifier.embedding_dim; ++i)
    CHECK(state.classifier.lin.weight.value[i] == classifier_rows_before[i]);

  // template remains pristine (pretrained values)
  CHECK(state.module_template.dense_param_count ==
        state.module_template.stage.param_count());
}

TEST_CASE("train_task rejects protocol violations") {
  SessionState state = mini_state(73);
  const TaskStream stream = mini_stream(4, 2, 4, 2, 6);
  const TrainConfig cfg = mini_train_config(1);
  train_task(state, stream, 0, cfg);
  CHECK_THROWS_AS(train_task(state, stream, 0, cfg), ProtocolError);
  CHECK_THROWS_AS(train_task(state, stream, 9, cfg), InputError);
}

TEST_CASE("prune-epoch beyond the schedule leaves the module dense") {
  SessionState state = mini_state(74);
  const TaskStream stream = mini_stream(4, 2, 4, 2, 7);
  TrainConfig cfg = mini_train_config(1);
  cfg.prune_epoch = 5;  // > epochs -> no pruning
  train_task(state, stream, 0, cfg);
  CHECK(!state.modules[0].plan.has_value());
  CHECK(state.modules[0].param_count() == state.modules[0].dense_param_count);
}

TEST_CASE("adaptive reuse: shared module, KD path, count bookkeeping") {
  SessionState state = mini_state(75);
  // siblings corpus: second half of classes are near-copies of the first
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.train_per_class = 8;
  spec.test_per_class = 4;
  spec.siblings = true;
  const TaskStream stream =
      build_task_stream({"synth", 0, 1, 0}, make_synthetic_corpus(spec));

  TrainConfig cfg = mini_train_config(1);
  cfg.reuse_beta = 50.0f;  // force reuse once priors exist
  train_task(state, stream, 0, cfg);
  CHECK(state.module_count() == 1);
  const TrainLog log1 = train_task(state, stream, 1, cfg);
  CHECK(state.module_count() == 1);  // reused, not appended
  CHECK(state.task_registry[1].module_index == 0);
  CHECK(state.modules[0].task_ids == std::vector<int>{0, 1});
  CHECK(state.centroids.size() == 2);  // centroid stored even under reuse
  bool reused_event = false;
  for (const auto& e : log1.events) reused_event |= e.kind == "reuse";
  CHECK(reused_event);
  CHECK(state.modules[0].frozen);

  // beta = 0 (or absent): every task gets its own module
  SessionState fresh = mini_state(76);
  TrainConfig nobeta = mini_train_config(1);
  train_task(fresh, stream, 0, nobeta);
  train_task(fresh, stream, 1, nobeta);
  CHECK(fresh.module_count() == 2);
}

TEST_CASE("reuse monotonicity: module count non-increasing in beta") {
  SyntheticSpec spec;
  spec.num_classes = 8;
  spec.train_per_class = 6;
  spec.test_per_class = 2;
  spec.siblings = true;
  spec.class_salt = 404;

  int prev_modules = 1 << 20;
  for (float beta : {0.0f, 0.4f, 0.8f, 1.2f}) {
    SessionState state = mini_state(77);
    const TaskStream stream =
        build_task_stream({"synth", 0, 2, 3}, make_synthetic_corpus(spec));
    TrainConfig cfg = mini_train_config(1);
    if (beta > 0.0f) cfg.reuse_beta = beta;
    for (int t = 0; t < stream.task_count(); ++t) train_task(state, stream, t, cfg);
    CHECK(state.module_count() <= prev_modules);
    if (beta == 0.0f) CHECK(state.module_count() == stream.task_count());
    prev_modules = state.module_count();
  }
}

TEST_CASE("relevant init clones the most similar prior module") {
  SessionState state = mini_state(78);
  const TaskStream stream = mini_stream(4, 2, 6, 2, 8);
  TrainConfig cfg = mini_train_config(1);
  cfg.init_strategy = InitStrategy::relevant;
  // first task has no donor: falls back to pretrained
  const TrainLog log0 = train_task(state, stream, 0, cfg);
  bool fell_back = false;
  for (const auto& e : log0.events)
    fell_back |= e.kind == "init" && e.detail == "pretrained";
  CHECK(fell_back);
  const TrainLog log1 = train_task(state, stream, 1, cfg);
  bool relevant = false;
  for (const auto& e : log1.events) relevant |= e.kind == "init";
  CHECK(relevant);
  CHECK(state.module_count() == 2);  // relevant init still adds a new module
}

TEST_CASE("full-net trainer drives the loss down on a toy problem") {
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.train_per_class = 12;
  spec.test_per_class = 2;
  const DatasetPair data = make_synthetic_corpus(spec);
  FullNetClassifier model = make_full_net("tiny", 42);
  Rng rng(43);
  model.expand_head(2, rng);
  std::vector<int64_t> idx(static_cast<size_t>(data.train.size()));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  std::vector<int> label_to_row{0, 1};
  const std::vector<float> losses =
      train_full_net(model, data.train, idx, label_to_row, 4, 1e-3f, 8, 1, false);
  REQUIRE(losses.size() == 4);
  CHECK(losses.back() < losses.front());
  for (float l : losses) CHECK(std::isfinite(l));
}
