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

#include "pamcl/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "pamcl/errors.hpp"
#include "pamcl/pruning.hpp"

namespace pamcl {

namespace k = kernels;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (prune_epoch < 1) throw ConfigError("train: prune_epoch must be >= 1");
  if (!(prune_magnitude >= 0.0f && prune_magnitude < 1.0f))
    throw ConfigError("train: prune_magnitude must lie in [0,1)");
  if (!(learning_rate > 0.0f)) throw ConfigError("train: learning rate must be > 0");
  if (!(distill_temperature > 0.0f))
    throw ConfigError("train: distill temperature must be > 0");
  if (distill_weight < 0.0f) throw ConfigError("train: distill weight must be >= 0");
  if (reuse_beta && *reuse_beta < 0.0f)
    throw ConfigError("train: reuse beta must be >= 0");
}

float TrainLog::epoch_mean_loss(int epoch) const {
  double sum = 0.0;
  int64_t n = 0;
  for (const Step& s : steps)
    if (s.epoch == epoch) {
      sum += s.loss;
      ++n;
    }
  if (n == 0) throw StateError("no steps logged for epoch " + std::to_string(epoch));
  return static_cast<float>(sum / static_cast<double>(n));
}

float TrainLog::final_epoch_loss() const {
  if (steps.empty()) throw StateError("empty training log");
  return epoch_mean_loss(steps.back().epoch);
}

float manhattan(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw InputError("manhattan: shape mismatch");
  double d = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) d += std::fabs(a[i] - b[i]);
  return static_cast<float>(d);
}

namespace {

// Extracts feature maps for the given samples in fixed order, chunked to
// bound memory.
Tensor extract_features_for(const SharedExtractor& extractor,
                            const ImageDataset& dataset,
                            std::span<const int64_t> indices, int chunk) {
  if (indices.empty()) throw InputError("feature extraction: no samples");
  Tensor all;
  int64_t done = 0;
  while (done < static_cast<int64_t>(indices.size())) {
    const int64_t take =
        std::min<int64_t>(chunk, static_cast<int64_t>(indices.size()) - done);
    const Tensor batch =
        make_batch(dataset, indices.subspan(static_cast<size_t>(done),
                                            static_cast<size_t>(take)),
                   extractor.norm_mean, extractor.norm_std);
    const Tensor fmap = extractor.extract(batch);
    if (done == 0) {
      std::vector<int64_t> shape = fmap.shape();
      shape[0] = static_cast<int64_t>(indices.size());
      all = Tensor(shape);
    }
    std::copy_n(fmap.ptr(), fmap.numel(),
                all.ptr() + done * fmap.numel() / take);
    done += take;
  }
  return all;
}

Tensor gather_samples(const Tensor& fmaps, std::span<const int64_t> rows) {
  std::vector<int64_t> shape = fmaps.shape();
  shape[0] = static_cast<int64_t>(rows.size());
  Tensor out(shape);
  const int64_t per = fmaps.numel() / fmaps.dim(0);
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(fmaps.ptr() + rows[i] * per, per,
                out.ptr() + static_cast<int64_t>(i) * per);
  return out;
}

Tensor pooled_mean(const Tensor& fmaps) {
  const Tensor pooled = k::gap_forward(fmaps);
  Tensor c({pooled.dim(1)});
  for (int64_t j = 0; j < pooled.dim(1); ++j) {
    double s = 0.0;
    for (int64_t i = 0; i < pooled.dim(0); ++i) s += pooled.at2(i, j);
    c[j] = static_cast<float>(s / static_cast<double>(pooled.dim(0)));
  }
  return c;
}

// Logits over a row subset of the classifier: pooled * W_rows^T + b_rows.
Tensor subset_logits(const UnifiedClassifier& cls, const Tensor& pooled,
                     const std::vector<int>& rows) {
  const int64_t n = pooled.dim(0), d = pooled.dim(1);
  Tensor out({n, static_cast<int64_t>(rows.size())});
  for (int64_t i = 0; i < n; ++i)
    for (size_t r = 0; r < rows.size(); ++r) {
      const float* w = cls.lin.weight.value.ptr() +
                       static_cast<int64_t>(rows[r]) * d;
      double acc = cls.lin.bias.value[rows[r]];
      for (int64_t j = 0; j < d; ++j) acc += static_cast<double>(w[j]) * pooled.at2(i, j);
      out.at2(i, static_cast<int64_t>(r)) = static_cast<float>(acc);
    }
  return out;
}

}  // namespace

Tensor compute_task_centroid(const SharedExtractor& extractor,
                             const ImageDataset& dataset,
                             std::span<const int64_t> indices) {
  if (indices.empty()) throw InputError("compute_task_centroid: empty task");
  const Tensor fmaps = extract_features_for(extractor, dataset, indices, 64);
  return pooled_mean(fmaps);
}

ReuseDecision decide_reuse(const std::vector<Tensor>& prior_centroids,
                           const Tensor& c_new, float beta) {
  ReuseDecision d;
  if (prior_centroids.empty()) return d;  // first task: always a new module
  double sum = 0.0;
  float best = 0.0f;
  int best_task = -1;
  for (size_t i = 0; i < prior_centroids.size(); ++i) {
    const float dist = manhattan(c_new, prior_centroids[i]);
    sum += dist;
    if (best_task < 0 || dist < best) {  // ties resolve to the lowest index
      best = dist;
      best_task = static_cast<int>(i);
    }
  }
  d.d_min = best;
  d.target_task = best_task;
  d.d_bar = static_cast<float>(sum / static_cast<double>(prior_centroids.size()));
  d.threshold = beta * d.d_bar;
  d.reused = d.d_min < d.threshold;
  return d;
}

TrainLog train_task(SessionState& state, const TaskStream& stream, int task_index,
                    const TrainConfig& config) {
  config.validate();
  if (task_index < 0 || task_index >= stream.task_count())
    throw InputError("train_task: task index out of range");
  const TaskDataset& task = stream.tasks[static_cast<size_t>(task_index)];
  if (task.train_indices.empty()) throw InputError("train_task: task has no samples");
  for (int cid : task.class_ids)
    if (state.class_to_row.count(cid))
      throw ProtocolError("train_task: class " + std::to_string(cid) +
                          " overlaps a previously learned task");
  for (const TaskEntry& e : state.task_registry)
    if (e.task_id == task.task_id)
      throw ProtocolError("train_task: task " + std::to_string(task.task_id) +
                          " was already trained");

  TrainLog log;
  log.task_id = task.task_id;
  const ImageDataset& train_ds = stream.data.train;

  // Clean (un-augmented) extractor features: the centroid always comes from
  // these; they double as the epoch-loop feature cache when augmentation is
  // off, since the frozen extractor maps each sample to the same features
  // every epoch.
  const Tensor clean_fmaps =
      extract_features_for(state.extractor, train_ds, task.train_indices,
                           std::max(config.batch_size, 32));
  const Tensor centroid = pooled_mean(clean_fmaps);

  // Module acquisition: adaptive reuse, else fresh per init strategy.
  ReuseDecision reuse;
  if (config.reuse_beta && !state.centroids.empty())
    reuse = decide_reuse(state.centroids, centroid, *config.reuse_beta);
  if (reuse.reused)
    reuse.target_module =
        state.entry_for_task(reuse.target_task).module_index;

  AdaptationModule active;
  std::vector<int> teacher_rows;
  std::optional<AdaptationModule> teacher;
  if (reuse.reused) {
    const AdaptationModule& shared =
        state.modules[static_cast<size_t>(reuse.target_module)];
    teacher = shared;  // frozen pre-reuse snapshot
    teacher_rows = state.module_rows(reuse.target_module);
    active = shared;
    active.task_ids.push_back(task.task_id);
    active.set_frozen(false);
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "module %d (task %d) d_min=%.4f threshold=%.4f",
                  reuse.target_module, reuse.target_task, reuse.d_min,
                  reuse.threshold);
    log.events.push_back({0, "reuse", detail});
  } else if (config.init_strategy == InitStrategy::relevant &&
             !state.centroids.empty()) {
    int best = 0;
    for (size_t i = 1; i < state.centroids.size(); ++i)
      if (manhattan(centroid, state.centroids[i]) <
          manhattan(centroid, state.centroids[static_cast<size_t>(best)]))
        best = static_cast<int>(i);
    const AdaptationModule& donor =
        state.modules[static_cast<size_t>(state.entry_for_task(best).module_index)];
    active = instantiate_module(state.module_template, InitStrategy::relevant,
                                &donor, task.task_id);
    log.events.push_back({0, "init", "relevant donor task " + std::to_string(best)});
  } else {
    active = instantiate_module(state.module_template, InitStrategy::pretrained,
                                nullptr, task.task_id);
    log.events.push_back({0, "init", "pretrained"});
  }

  // Classifier expansion; new rows trainable, completed rows stay frozen.
  Rng init_rng(Rng::mix(config.seed, 0x100 + static_cast<uint64_t>(task.task_id)));
  UnifiedClassifier classifier = expand_classifier(
      state.classifier, static_cast<int>(task.class_ids.size()), task.task_id,
      init_rng);
  std::unordered_map<int, int> label_to_row = state.class_to_row;
  {
    int row = state.classifier.rows();
    for (int cid : task.class_ids) label_to_row[cid] = row++;
  }

  auto make_optimizer = [&]() {
    std::vector<Parameter*> params;
    active.stage.collect_params(params);
    params.push_back(&classifier.lin.weight);
    params.push_back(&classifier.lin.bias);
    return Adam(params, config.learning_rate);
  };
  Adam opt = make_optimizer();

  std::vector<int64_t> order(task.train_indices.begin(), task.train_indices.end());
  std::vector<int64_t> positions(order.size());  // offsets into clean_fmaps

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(
        Rng::mix(config.seed, static_cast<uint64_t>(task.task_id) * 131071ULL +
                                  static_cast<uint64_t>(epoch)));
    std::vector<int64_t> perm(order.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int64_t>(i);
    shuffle_rng.shuffle(perm);

    Rng aug_rng(Rng::mix(config.seed ^ 0xA06ULL,
                         static_cast<uint64_t>(task.task_id) * 65537ULL +
                             static_cast<uint64_t>(epoch)));

    int step = 0;
    for (size_t start = 0; start < perm.size();
         start += static_cast<size_t>(config.batch_size), ++step) {
      const size_t take =
          std::min(static_cast<size_t>(config.batch_size), perm.size() - start);

      Tensor fmap_batch;
      std::vector<int> targets(take);
      if (config.augment) {
        std::vector<int64_t> sample_idx(take);
        for (size_t i = 0; i < take; ++i)
          sample_idx[i] = order[static_cast<size_t>(perm[start + i])];
        const Tensor images =
            make_batch(train_ds, sample_idx, state.extractor.norm_mean,
                       state.extractor.norm_std, &aug_rng);
        fmap_batch = state.extractor.extract(images);
        for (size_t i = 0; i < take; ++i)
          targets[i] = label_to_row.at(
              train_ds.labels[static_cast<size_t>(sample_idx[i])]);
      } else {
        std::vector<int64_t> rows(take);
        for (size_t i = 0; i < take; ++i) {
          rows[i] = perm[start + i];
          targets[i] = label_to_row.at(train_ds.labels[static_cast<size_t>(
              order[static_cast<size_t>(perm[start + i])])]);
        }
        fmap_batch = gather_samples(clean_fmaps, rows);
      }

      opt.zero_grad();
      std::vector<Block::Cache> caches;
      const Tensor module_out = active.stage.forward(fmap_batch, caches);
      const Tensor pooled = k::gap_forward(module_out);
      Linear::Cache head_cache;
      const Tensor logits = classifier.lin.forward(pooled, head_cache);

      Tensor dlogits;
      float loss = k::cross_entropy(logits, targets, &dlogits);

      if (teacher && config.distill_weight > 0.0f) {
        // LwF-style regularization on the donor tasks' label subset.
        const Tensor teacher_pooled =
            k::gap_forward(teacher->forward(fmap_batch));
        const Tensor teacher_logits =
            subset_logits(classifier, teacher_pooled, teacher_rows);
        Tensor student_sub({logits.dim(0),
                            static_cast<int64_t>(teacher_rows.size())});
        for (int64_t i = 0; i < logits.dim(0); ++i)
          for (size_t r = 0; r < teacher_rows.size(); ++r)
            student_sub.at2(i, static_cast<int64_t>(r)) =
                logits.at2(i, teacher_rows[r]);
        Tensor dsub;
        const float kd =
            k::distillation_kl(student_sub, teacher_logits,
                               config.distill_temperature, &dsub);
        loss += config.distill_weight * kd;
        for (int64_t i = 0; i < logits.dim(0); ++i)
          for (size_t r = 0; r < teacher_rows.size(); ++r)
            dlogits.at2(i, teacher_rows[r]) +=
                config.distill_weight * dsub.at2(i, static_cast<int64_t>(r));
      }

      if (!std::isfinite(loss))
        throw Error("non-finite training loss at task " +
                    std::to_string(task.task_id) + " epoch " +
                    std::to_string(epoch));
      log.steps.push_back({epoch, step, loss});

      const Tensor dpooled = classifier.lin.backward(dlogits, head_cache);
      classifier.suppress_frozen_row_grads();
      const Tensor dfmap =
          k::gap_backward(dpooled, module_out.dim(2), module_out.dim(3));
      active.stage.backward(dfmap, caches);
      opt.step();
    }

    if (epoch == config.prune_epoch && !reuse.reused && !active.plan) {
      PruningPlan plan = build_pruning_plan(active, config.prune_magnitude);
      plan.created_at_epoch = epoch;
      apply_plan(active, plan);
      // Fresh optimizer state: stale moments would push dropped weights off
      // zero even with suppressed gradients.
      opt = make_optimizer();
      log.events.push_back({epoch, "prune",
                            "magnitude " + std::to_string(config.prune_magnitude) +
                                ", kept " + std::to_string(plan.total_kept()) +
                                " channels in scope"});
    }
  }

  // Session end: freeze, compact, register.
  active.set_frozen(true);
  if (active.masked()) active = compact(active);
  classifier.freeze_rows_of_task(task.task_id);

  TaskEntry entry;
  entry.task_id = task.task_id;
  entry.class_ids = task.class_ids;
  if (reuse.reused) {
    entry.module_index = reuse.target_module;
    active.module_id = reuse.target_module;
    state.modules[static_cast<size_t>(reuse.target_module)] = std::move(active);
  } else {
    entry.module_index = state.module_count();
    active.module_id = entry.module_index;
    state.modules.push_back(std::move(active));
  }
  log.events.push_back({config.epochs, "freeze",
                        "module " + std::to_string(entry.module_index)});

  state.classifier = std::move(classifier);
  state.class_to_row = std::move(label_to_row);
  state.centroids.push_back(centroid);
  state.task_registry.push_back(std::move(entry));
  state.active_module.reset();
  return log;
}

// ---------------------------------------------------------------------------

Tensor FullNetClassifier::logits(const Tensor& batch) const {
  return head.forward(k::gap_forward(net.forward(batch)));
}

void FullNetClassifier::expand_head(int new_classes, Rng& rng) {
  if (new_classes < 1) throw ConfigError("expand_head: new_classes must be >= 1");
  const int d = head.in_dim;
  const int old_rows = head.rows;
  Linear bigger = Linear::make(d, old_rows + new_classes);
  std::copy_n(head.weight.value.ptr(), static_cast<int64_t>(old_rows) * d,
              bigger.weight.value.ptr());
  std::copy_n(head.bias.value.ptr(), old_rows, bigger.bias.value.ptr());
  const float bound = 1.0f / std::sqrt(static_cast<float>(d));
  for (int r = old_rows; r < bigger.rows; ++r) {
    float* row = bigger.weight.value.ptr() + static_cast<int64_t>(r) * d;
    for (int i = 0; i < d; ++i)
      row[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
  head = std::move(bigger);
}

FullNetClassifier make_full_net(const std::string& variant, uint64_t seed) {
  FullNetClassifier m;
  m.net = build_backbone(backbone_variant(variant));
  Rng rng(seed);
  init_backbone(m.net, rng);
  m.head = Linear::make(m.net.out_channels(), 0);
  m.norm_mean = {0.5f, 0.5f, 0.5f};
  m.norm_std = {0.25f, 0.25f, 0.25f};
  return m;
}

std::vector<float> train_full_net(FullNetClassifier& model,
                                  const ImageDataset& dataset,
                                  std::span<const int64_t> indices,
                                  const std::vector<int>& label_to_row,
                                  int epochs, float lr, int batch_size,
                                  uint64_t seed, bool augment) {
  if (indices.empty()) throw InputError("train_full_net: no samples");
  std::vector<Parameter*> params;
  model.net.collect_params(params);
  params.push_back(&model.head.weight);
  params.push_back(&model.head.bias);
  Adam opt(params, lr);

  std::vector<float> epoch_losses;
  std::vector<int64_t> order(indices.begin(), indices.end());
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(seed, 0xF00D + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    Rng aug_rng(Rng::mix(seed ^ 0xA06ULL, static_cast<uint64_t>(epoch)));

    double sum = 0.0;
    int64_t steps = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(batch_size)) {
      const size_t take =
          std::min(static_cast<size_t>(batch_size), order.size() - start);
      std::span<const int64_t> chunk(order.data() + start, take);
      const Tensor images = make_batch(dataset, chunk, model.norm_mean,
                                       model.norm_std, augment ? &aug_rng : nullptr);
      std::vector<int> targets(take);
      for (size_t i = 0; i < take; ++i)
        targets[i] = label_to_row[static_cast<size_t>(
            dataset.labels[static_cast<size_t>(chunk[i])])];

      opt.zero_grad();
      BackboneNet::Cache cache;
      const Tensor fmap = model.net.forward(images, cache);
      const Tensor pooled = k::gap_forward(fmap);
      Linear::Cache head_cache;
      const Tensor logits = model.head.forward(pooled, head_cache);
      Tensor dlogits;
      const float loss = k::cross_entropy(logits, targets, &dlogits);
      if (!std::isfinite(loss)) throw Error("non-finite loss in full-net training");
      sum += loss;
      ++steps;
      const Tensor dpooled = model.head.backward(dlogits, head_cache);
      model.net.backward(k::gap_backward(dpooled, fmap.dim(2), fmap.dim(3)), cache);
      opt.step();
    }
    epoch_losses.push_back(static_cast<float>(sum / static_cast<double>(steps)));
  }
  return epoch_losses;
}

}  // namespace pamcl
