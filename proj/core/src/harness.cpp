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

#include "pamcl/harness.hpp"

#include <chrono>
#include <fstream>

#include "pamcl/errors.hpp"
#include "pamcl/hash.hpp"
#include "pamcl/kernels.hpp"
#include "pamcl/pruning.hpp"

namespace pamcl {

namespace fs = std::filesystem;
using nlohmann::json;
namespace k = kernels;

namespace {

json conv_json(const Conv2d& c) {
  return json{{"in", c.in_c}, {"out", c.out_c}, {"k", c.k},
              {"stride", c.stride}, {"pad", c.pad}};
}

Conv2d conv_from_json(const json& j) {
  return Conv2d::make(j.at("in"), j.at("out"), j.at("k"), j.at("stride"),
                      j.at("pad"));
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void save_module(const fs::path& dir, const AdaptationModule& m) {
  fs::create_directories(dir);
  json meta{{"module_id", m.module_id},
            {"task_ids", m.task_ids},
            {"in_channels", m.in_channels},
            {"out_channels", m.out_channels},
            {"frozen", m.frozen},
            {"compacted", m.compacted},
            {"dense_param_count", m.dense_param_count},
            {"blocks", json::array()}};
  for (const Block& b : m.stage.blocks) {
    json bj{{"bottleneck", b.bottleneck},
            {"conv1", conv_json(b.conv1)},
            {"conv2", conv_json(b.conv2)}};
    bj["conv3"] = b.conv3 ? conv_json(*b.conv3) : json(nullptr);
    bj["downsample"] = b.ds_conv ? conv_json(*b.ds_conv) : json(nullptr);
    meta["blocks"].push_back(bj);
  }
  write_text(dir / "module.json", meta.dump(2) + "\n");
  save_state_dict(dir / "module.bin", stage_state_dict(m.stage, "b"));
  if (m.plan) write_text(dir / "plan.txt", m.plan->to_text());
}

AdaptationModule load_module(const fs::path& dir) {
  const json meta = json::parse(read_text(dir / "module.json"));
  AdaptationModule m;
  m.module_id = meta.at("module_id");
  m.task_ids = meta.at("task_ids").get<std::vector<int>>();
  m.in_channels = meta.at("in_channels");
  m.out_channels = meta.at("out_channels");
  m.compacted = meta.at("compacted");
  m.dense_param_count = meta.at("dense_param_count");
  for (const json& bj : meta.at("blocks")) {
    Block b;
    b.bottleneck = bj.at("bottleneck");
    b.conv1 = conv_from_json(bj.at("conv1"));
    b.bn1 = BatchNorm2d::make(b.conv1.out_c);
    b.conv2 = conv_from_json(bj.at("conv2"));
    b.bn2 = BatchNorm2d::make(b.conv2.out_c);
    if (!bj.at("conv3").is_null()) {
      b.conv3 = conv_from_json(bj.at("conv3"));
      b.bn3 = BatchNorm2d::make(b.conv3->out_c);
    }
    if (!bj.at("downsample").is_null()) {
      b.ds_conv = conv_from_json(bj.at("downsample"));
      b.ds_bn = BatchNorm2d::make(b.ds_conv->out_c);
    }
    m.stage.blocks.push_back(std::move(b));
  }
  load_stage_state(m.stage, load_state_dict(dir / "module.bin"), "b");
  if (fs::exists(dir / "plan.txt")) {
    m.plan = PruningPlan::from_text(read_text(dir / "plan.txt"));
    if (!m.compacted) {
      // restore masks on a masked-but-uncompacted module
      for (size_t i = 0; i < m.stage.blocks.size(); ++i) {
        Block& b = m.stage.blocks[i];
        const std::string prefix = "b" + std::to_string(i) + ".";
        b.conv1.out_mask = m.plan->masks.at(prefix + "conv1").keep;
        b.bn1.out_mask = b.conv1.out_mask;
        if (b.bottleneck) {
          b.conv2.out_mask = m.plan->masks.at(prefix + "conv2").keep;
          b.bn2.out_mask = b.conv2.out_mask;
        }
      }
    }
  }
  m.set_frozen(meta.at("frozen"));
  return m;
}

void save_classifier(const fs::path& dir, const UnifiedClassifier& c) {
  fs::create_directories(dir);
  json meta{{"embedding_dim", c.embedding_dim},
            {"row_task", c.row_task},
            {"row_trainable", c.row_trainable}};
  write_text(dir / "classifier.json", meta.dump(2) + "\n");
  StateDict d;
  d["weight"] = c.lin.weight.value;
  d["bias"] = c.lin.bias.value;
  save_state_dict(dir / "classifier.bin", d);
}

UnifiedClassifier load_classifier(const fs::path& dir) {
  const json meta = json::parse(read_text(dir / "classifier.json"));
  UnifiedClassifier c = make_classifier(meta.at("embedding_dim"));
  c.row_task = meta.at("row_task").get<std::vector<int>>();
  c.row_trainable = meta.at("row_trainable").get<std::vector<uint8_t>>();
  const StateDict d = load_state_dict(dir / "classifier.bin");
  c.lin.weight.value = d.at("weight");
  c.lin.bias.value = d.at("bias");
  c.lin.rows = static_cast<int>(c.row_task.size());
  return c;
}

SessionState make_initial_state(const RunConfig& config) {
  if (config.backbone_checkpoint.empty())
    throw ConfigError("backbone.checkpoint is required");
  fs::path ckpt = config.backbone_checkpoint;
  if (!fs::exists(ckpt)) {
    const fs::path alt = fs::path(config.data_root) / config.backbone_checkpoint;
    if (fs::exists(alt))
      ckpt = alt;
    else
      throw IngestionError("backbone checkpoint not found: " + ckpt.string() +
                           " (also tried " + alt.string() + ")");
  }

  std::string variant = config.backbone_variant;
  std::vector<float> norm_mean, norm_std;
  if (fs::exists(CheckpointManifest::path_for(ckpt))) {
    const CheckpointManifest m = load_manifest(ckpt);
    if (!m.variant.empty() && !variant.empty() && m.variant != variant)
      throw ConfigError("manifest variant '" + m.variant +
                        "' contradicts configured variant '" + variant + "'");
    if (!m.variant.empty()) variant = m.variant;
    if (!m.sha256.empty() && file_sha256(ckpt) != m.sha256)
      throw IngestionError("checkpoint content hash does not match its manifest: " +
                           ckpt.string());
    norm_mean = m.norm_mean;
    norm_std = m.norm_std;
  }

  auto [extractor, tmpl] = split_backbone(load_state_dict(ckpt), variant);
  if (norm_mean.size() == 3) extractor.norm_mean = norm_mean;
  if (norm_std.size() == 3) extractor.norm_std = norm_std;

  SessionState state;
  state.classifier = make_classifier(tmpl.out_channels);
  state.extractor = std::move(extractor);
  state.module_template = std::move(tmpl);
  return state;
}

int load_session(const fs::path& run_dir, SessionState& state,
                 std::vector<json>* stage_summaries, int max_stages) {
  int stage = 0;
  for (;; ++stage) {
    if (max_stages >= 0 && stage >= max_stages) break;
    const fs::path dir = run_dir / ("stage_" + std::to_string(stage));
    if (!fs::exists(dir / "summary.json")) break;
    const json summary = json::parse(read_text(dir / "summary.json"));
    if (stage_summaries) stage_summaries->push_back(summary);

    TaskEntry entry;
    entry.task_id = summary.at("task_id");
    entry.module_index = summary.at("module_index");
    entry.class_ids = summary.at("classes").get<std::vector<int>>();

    AdaptationModule m = load_module(dir);
    if (entry.module_index < state.module_count())
      state.modules[static_cast<size_t>(entry.module_index)] = std::move(m);
    else
      state.modules.push_back(std::move(m));

    state.classifier = load_classifier(dir);
    const StateDict cd = load_state_dict(dir / "centroid.bin");
    state.centroids.push_back(cd.at("centroid"));

    int row = static_cast<int>(state.class_to_row.size());
    for (int cid : entry.class_ids) state.class_to_row[cid] = row++;
    state.task_registry.push_back(std::move(entry));
  }
  return stage;
}

namespace {

void write_train_log(const fs::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  for (const TrainLog::Step& s : log.steps)
    out << json{{"epoch", s.epoch}, {"step", s.step}, {"loss", s.loss}}.dump()
        << "\n";
  for (const TrainLog::Event& e : log.events)
    out << json{{"epoch", e.epoch}, {"event", e.kind}, {"detail", e.detail}}.dump()
        << "\n";
}

void write_routing_records(const fs::path& path,
                           const std::vector<RoutingRecord>& records) {
  std::ofstream out(path);
  for (const RoutingRecord& r : records)
    out << json{{"true_task", r.true_task},
                {"selected_module", r.selected_module},
                {"confidences", r.confidences}}
               .dump()
        << "\n";
}

void write_predictions(const fs::path& path,
                       const std::vector<PerSamplePrediction>& preds) {
  std::ofstream out(path);
  for (const PerSamplePrediction& p : preds)
    out << json{{"test_index", p.test_index},
                {"true_class", p.true_class},
                {"predicted_class", p.predicted_class},
                {"true_task", p.true_task},
                {"selected_module", p.selected_module}}
               .dump()
        << "\n";
}

uint64_t effective_seed(const RunConfig& config, uint64_t seed) {
  if (config.determinism) return seed;
  const auto now = std::chrono::high_resolution_clock::now().time_since_epoch();
  return Rng::mix(seed, static_cast<uint64_t>(now.count()));
}

std::optional<float> ensemble_arg(const RunConfig& config) {
  if (config.ensemble_top_weight < 1.0f) return config.ensemble_top_weight;
  return std::nullopt;
}

RunReport finalize_pam_report(const RunConfig& config, uint64_t seed,
                              const SessionState& state, const TaskStream& stream,
                              const fs::path& run_dir,
                              const std::vector<double>& stage_acc,
                              const std::vector<std::vector<double>>& til,
                              double wall_seconds) {
  const int last = stream.task_count() - 1;
  const StageEval final_eval = evaluate_stage(
      state, stream, last, config.strategy, config.routing_batch_size,
      ensemble_arg(config));
  write_routing_records(run_dir / "routing.jsonl", final_eval.records);
  write_predictions(run_dir / "predictions.jsonl", final_eval.predictions);

  RunReport report;
  report.seed = seed;
  report.method = "pam";
  report.per_stage_accuracy = stage_acc;
  report.average_acc = average_accuracy(stage_acc);
  report.final_acc = stage_acc.back();
  report.til_after_stage = til;
  report.confusion = confusion_from_records(final_eval.records,
                                            stream.task_count(),
                                            state.module_count());
  report.params_physical =
      count_parameters(state, CountingMode::compacted_physical);
  report.params_logical = count_parameters(state, CountingMode::masked_logical);
  report.module_count = state.module_count();
  report.config_echo = config.to_json();
  report.config_echo["run"]["active_seed"] = seed;
  report.wall_time_seconds = wall_seconds;

  json manifest{{"config_hash", config.config_hash()},
                {"dataset", config.dataset_id},
                {"variant", config.backbone_variant},
                {"module_count", state.module_count()},
                {"tasks", json::array()}};
  for (const TaskEntry& e : state.task_registry)
    manifest["tasks"].push_back({{"task_id", e.task_id},
                                 {"module_index", e.module_index},
                                 {"classes", e.class_ids}});
  write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");

  report.write(run_dir);
  write_run_plots(run_dir, report);
  return report;
}

RunReport run_single_pam(const RunConfig& config, uint64_t seed,
                         const fs::path& run_dir) {
  const double t0 = now_seconds();
  fs::create_directories(run_dir);

  SessionState state = make_initial_state(config);
  SplitSpec split{config.dataset_id, config.split_base_classes,
                  config.split_increment, seed};
  TaskStream stream =
      build_task_stream(split, load_dataset(config.dataset_id, config.data_root));

  std::vector<double> stage_acc;
  std::vector<std::vector<double>> til;
  int start_stage = 0;
  if (config.resume) {
    std::vector<json> summaries;
    start_stage = load_session(run_dir, state, &summaries);
    for (const json& s : summaries) {
      stage_acc.push_back(s.at("accuracy"));
      til.push_back(s.at("til").get<std::vector<double>>());
    }
  }

  TrainConfig tc = config.train;
  tc.seed = effective_seed(config, seed);

  for (int b = start_stage; b < stream.task_count(); ++b) {
    const double stage_t0 = now_seconds();
    const TrainLog log = train_task(state, stream, b, tc);

    const StageEval eval =
        evaluate_stage(state, stream, b, config.strategy,
                       config.routing_batch_size, ensemble_arg(config));
    stage_acc.push_back(eval.accuracy);
    std::vector<double> stage_til;
    for (int t = 0; t <= b; ++t)
      stage_til.push_back(
          til_task_accuracy(state, stream, t, config.routing_batch_size));
    til.push_back(stage_til);

    const TaskEntry& entry = state.task_registry.back();
    const fs::path dir = run_dir / ("stage_" + std::to_string(b));
    fs::create_directories(dir);
    save_module(dir, state.modules[static_cast<size_t>(entry.module_index)]);
    save_classifier(dir, state.classifier);
    StateDict cd;
    cd["centroid"] = state.centroids.back();
    save_state_dict(dir / "centroid.bin", cd);
    write_train_log(dir / "log.jsonl", log);
    write_routing_records(dir / "routing.jsonl", eval.records);
    // summary.json written last: its presence marks the stage complete
    json summary{{"task_id", entry.task_id},
                 {"module_index", entry.module_index},
                 {"classes", entry.class_ids},
                 {"accuracy", eval.accuracy},
                 {"til", stage_til},
                 {"module_count", state.module_count()},
                 {"wall_time_seconds", now_seconds() - stage_t0}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
  }

  return finalize_pam_report(config, seed, state, stream, run_dir, stage_acc,
                             til, now_seconds() - t0);
}

// Sequential finetune: the whole backbone plus a growing head trains on each
// task in turn. The catastrophic-forgetting anchor for comparisons.
RunReport run_single_finetune(const RunConfig& config, uint64_t seed,
                              const fs::path& run_dir) {
  const double t0 = now_seconds();
  fs::create_directories(run_dir);

  SplitSpec split{config.dataset_id, config.split_base_classes,
                  config.split_increment, seed};
  TaskStream stream =
      build_task_stream(split, load_dataset(config.dataset_id, config.data_root));

  FullNetClassifier model = make_full_net(config.backbone_variant, seed);
  {
    // Same ingested starting point as the modular learner.
    SessionState init = make_initial_state(config);
    load_backbone_state(model.net,
                        load_state_dict(fs::exists(config.backbone_checkpoint)
                                            ? fs::path(config.backbone_checkpoint)
                                            : fs::path(config.data_root) /
                                                  config.backbone_checkpoint));
    model.norm_mean = init.extractor.norm_mean;
    model.norm_std = init.extractor.norm_std;
  }

  const uint64_t run_seed = effective_seed(config, seed);
  std::vector<int> label_to_row(
      static_cast<size_t>(stream.data.train.num_classes), -1);
  std::vector<int> row_to_label;
  std::vector<std::vector<int>> task_rows;
  std::vector<double> stage_acc;
  std::vector<std::vector<double>> til;

  Rng head_rng(Rng::mix(run_seed, 0xEAD));
  for (int b = 0; b < stream.task_count(); ++b) {
    const TaskDataset& task = stream.tasks[static_cast<size_t>(b)];
    model.expand_head(static_cast<int>(task.class_ids.size()), head_rng);
    task_rows.emplace_back();
    for (int cid : task.class_ids) {
      label_to_row[static_cast<size_t>(cid)] = static_cast<int>(row_to_label.size());
      task_rows.back().push_back(static_cast<int>(row_to_label.size()));
      row_to_label.push_back(cid);
    }

    train_full_net(model, stream.data.train, task.train_indices, label_to_row,
                   config.train.epochs, config.train.learning_rate,
                   config.train.batch_size,
                   Rng::mix(run_seed, static_cast<uint64_t>(b)),
                   config.train.augment);

    // cumulative evaluation, plain argmax (single network, no routing)
    int64_t correct = 0, total = 0;
    std::vector<double> stage_til;
    for (int t = 0; t <= b; ++t) {
      const TaskDataset& td = stream.tasks[static_cast<size_t>(t)];
      int64_t til_correct = 0, til_total = 0;
      for (size_t start = 0; start < td.test_indices.size();
           start += static_cast<size_t>(config.routing_batch_size)) {
        const size_t take = std::min(static_cast<size_t>(config.routing_batch_size),
                                     td.test_indices.size() - start);
        const std::span<const int64_t> chunk(td.test_indices.data() + start, take);
        const Tensor batch = make_batch(stream.data.test, chunk, model.norm_mean,
                                        model.norm_std);
        const Tensor logits = model.logits(batch);
        for (size_t i = 0; i < take; ++i) {
          const int truth = stream.data.test.labels[static_cast<size_t>(chunk[i])];
          int best = 0;
          for (int r = 1; r < logits.dim(1); ++r)
            if (logits.at2(static_cast<int64_t>(i), r) >
                logits.at2(static_cast<int64_t>(i), best))
              best = r;
          if (row_to_label[static_cast<size_t>(best)] == truth) ++correct;
          ++total;

          // task-restricted argmax: the TIL view of the same network
          int best_t = task_rows[static_cast<size_t>(t)].front();
          for (int r : task_rows[static_cast<size_t>(t)])
            if (logits.at2(static_cast<int64_t>(i), r) >
                logits.at2(static_cast<int64_t>(i), best_t))
              best_t = r;
          if (row_to_label[static_cast<size_t>(best_t)] == truth) ++til_correct;
          ++til_total;
        }
      }
      stage_til.push_back(til_total == 0 ? 0.0
                                         : 100.0 * static_cast<double>(til_correct) /
                                               static_cast<double>(til_total));
    }
    stage_acc.push_back(total == 0 ? 0.0
                                   : 100.0 * static_cast<double>(correct) /
                                         static_cast<double>(total));
    til.push_back(stage_til);

    const fs::path dir = run_dir / ("stage_" + std::to_string(b));
    fs::create_directories(dir);
    StateDict net = backbone_state_dict(model.net);
    net["head.weight"] = model.head.weight.value;
    net["head.bias"] = model.head.bias.value;
    save_state_dict(dir / "model.bin", net);
    json summary{{"task_id", b},
                 {"classes", task.class_ids},
                 {"accuracy", stage_acc.back()},
                 {"til", stage_til}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
  }

  RunReport report;
  report.seed = seed;
  report.method = "finetune";
  report.per_stage_accuracy = stage_acc;
  report.average_acc = average_accuracy(stage_acc);
  report.final_acc = stage_acc.back();
  report.til_after_stage = til;
  const int64_t net_params = [&] {
    std::vector<Parameter*> ps;
    model.net.collect_params(ps);
    int64_t n = model.head.weight.value.numel() + model.head.bias.value.numel();
    for (Parameter* p : ps) n += p->value.numel();
    return n;
  }();
  report.params_physical.trainable_per_task = net_params;
  report.params_physical.total_after_all_tasks = net_params;
  report.params_physical.extractor_params = 0;
  report.params_physical.module_params = net_params;
  report.params_logical = report.params_physical;
  report.params_logical.mode = CountingMode::masked_logical;
  report.module_count = 0;
  report.config_echo = config.to_json();
  report.config_echo["run"]["active_seed"] = seed;
  report.wall_time_seconds = now_seconds() - t0;
  report.write(run_dir);
  write_run_plots(run_dir, report);
  return report;
}

}  // namespace

RunReport run_single(const RunConfig& config, uint64_t seed,
                     const fs::path& run_dir) {
  if (config.method == "finetune")
    return run_single_finetune(config, seed, run_dir);
  return run_single_pam(config, seed, run_dir);
}

ExperimentResult run_experiment(const RunConfig& config) {
  ExperimentResult result;
  result.output_dir = config.output_dir;
  fs::create_directories(result.output_dir);
  for (uint64_t seed : config.seeds) {
    const fs::path run_dir =
        config.seeds.size() == 1
            ? result.output_dir
            : result.output_dir / ("seed_" + std::to_string(seed));
    result.per_seed.push_back(run_single(config, seed, run_dir));
  }
  result.aggregate = aggregate_reports(result.per_seed);
  write_text(result.output_dir / "aggregate.json",
             result.aggregate.to_json().dump(2) + "\n");
  if (config.seeds.size() > 1) {
    // roll-up report at the experiment root
    RunReport agg = result.per_seed.front();
    agg.write(result.output_dir);
  }
  return result;
}

RunReport reevaluate_run(const RunConfig& config, const fs::path& run_dir,
                         RoutingStrategy strategy,
                         std::optional<float> ensemble_top_weight,
                         int batch_size) {
  SplitSpec split{config.dataset_id, config.split_base_classes,
                  config.split_increment,
                  config.seeds.empty() ? 0 : config.seeds.front()};
  TaskStream stream =
      build_task_stream(split, load_dataset(config.dataset_id, config.data_root));

  SessionState state = make_initial_state(config);
  const int stages = load_session(run_dir, state);
  if (stages == 0)
    throw StateError("reevaluate_run: no completed stages in " + run_dir.string());

  // Re-score each prefix of the stream by reloading the state up to b.
  std::vector<double> stage_acc;
  std::vector<std::vector<double>> til;
  std::vector<RoutingRecord> final_records;
  std::vector<PerSamplePrediction> final_preds;
  for (int b = 0; b < stages; ++b) {
    SessionState prefix = make_initial_state(config);
    if (load_session(run_dir, prefix, nullptr, b + 1) != b + 1)
      throw StateError("reevaluate_run: stage " + std::to_string(b) +
                       " is incomplete in " + run_dir.string());
    const StageEval eval = evaluate_stage(prefix, stream, b, strategy,
                                          batch_size, ensemble_top_weight);
    stage_acc.push_back(eval.accuracy);
    std::vector<double> stage_til;
    for (int t = 0; t <= b; ++t)
      stage_til.push_back(til_task_accuracy(prefix, stream, t, batch_size));
    til.push_back(stage_til);
    if (b == stages - 1) {
      final_records = eval.records;
      final_preds = eval.predictions;
      RunReport report;
      report.seed = config.seeds.empty() ? 0 : config.seeds.front();
      report.method = "pam";
      report.per_stage_accuracy = stage_acc;
      report.average_acc = average_accuracy(stage_acc);
      report.final_acc = stage_acc.back();
      report.til_after_stage = til;
      report.confusion = confusion_from_records(final_records, stages,
                                                prefix.module_count());
      report.params_physical =
          count_parameters(prefix, CountingMode::compacted_physical);
      report.params_logical =
          count_parameters(prefix, CountingMode::masked_logical);
      report.module_count = prefix.module_count();
      report.config_echo = config.to_json();
      report.config_echo["routing"]["strategy"] = to_string(strategy);
      if (ensemble_top_weight)
        report.config_echo["routing"]["ensemble_top_weight"] = *ensemble_top_weight;
      report.wall_time_seconds = 0.0;
      return report;
    }
  }
  throw StateError("reevaluate_run: unreachable");
}

std::vector<std::string> ablation_axes() {
  return {"prune_epoch", "magnitude", "strategy", "ensemble_w", "init", "beta"};
}

AblationResult run_ablation(const RunConfig& base, const std::string& axis,
                            const std::vector<std::string>& values) {
  const auto axes = ablation_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end())
    throw ConfigError("unknown ablation axis '" + axis + "'");
  if (values.empty()) throw ConfigError("ablation needs at least one value");

  AblationResult result;
  result.axis = axis;
  result.output_dir = fs::path(base.output_dir) / ("ablate_" + axis);
  fs::create_directories(result.output_dir);

  const bool eval_only = axis == "strategy" || axis == "ensemble_w";

  RunConfig shared = base;
  if (eval_only) {
    // Training is identical across arms: run it once, then re-route.
    shared.output_dir = (result.output_dir / "trained").string();
    run_experiment(shared);
  }

  for (const std::string& value : values) {
    RunConfig arm = base;
    arm.output_dir = (result.output_dir / ("arm_" + value)).string();
    if (axis == "prune_epoch")
      arm.train.prune_epoch = std::stoi(value);
    else if (axis == "magnitude")
      arm.train.prune_magnitude = std::stof(value);
    else if (axis == "strategy")
      arm.strategy = parse_strategy(value);
    else if (axis == "ensemble_w")
      arm.ensemble_top_weight = std::stof(value);
    else if (axis == "init")
      arm.train.init_strategy = parse_init_strategy(value);
    else if (axis == "beta")
      arm.train.reuse_beta = std::stof(value);

    ExperimentResult er;
    if (eval_only) {
      const fs::path trained =
          shared.seeds.size() == 1
              ? fs::path(shared.output_dir)
              : fs::path(shared.output_dir) /
                    ("seed_" + std::to_string(shared.seeds.front()));
      RunReport rep = reevaluate_run(
          shared, trained, arm.strategy,
          axis == "ensemble_w" && arm.ensemble_top_weight < 1.0f
              ? std::optional<float>(arm.ensemble_top_weight)
              : std::nullopt,
          arm.routing_batch_size);
      fs::create_directories(arm.output_dir);
      rep.write(arm.output_dir);
      er.per_seed = {rep};
      er.aggregate = aggregate_reports(er.per_seed);
      er.output_dir = arm.output_dir;
    } else {
      er = run_experiment(arm);
    }
    result.arms.push_back({value, std::move(er)});
  }

  // comparison table + plots
  {
    std::ofstream csv(result.output_dir / "comparison.csv");
    csv << "arm,average_accuracy,final_accuracy,module_count\n";
    csv.precision(10);
    std::vector<std::string> labels;
    std::vector<double> finals;
    std::vector<Series> lines;
    std::vector<double> x;
    for (const AblationArm& arm : result.arms) {
      const RunReport& r = arm.result.per_seed.front();
      csv << arm.value << "," << r.average_acc << "," << r.final_acc << ","
          << r.module_count << "\n";
      labels.push_back(arm.value);
      finals.push_back(r.final_acc);
      if (x.empty())
        for (size_t i = 0; i < r.per_stage_accuracy.size(); ++i)
          x.push_back(static_cast<double>(i + 1));
      lines.push_back({axis + "=" + arm.value, r.per_stage_accuracy});
    }
    write_bar_chart(result.output_dir / "final_accuracy.svg",
                    "Final accuracy by " + axis, labels, finals);
    write_line_chart(result.output_dir / "accuracy_per_stage.svg",
                     "Per-stage accuracy by " + axis, "stage", "accuracy [%]",
                     x, lines);
  }
  return result;
}

}  // namespace pamcl
