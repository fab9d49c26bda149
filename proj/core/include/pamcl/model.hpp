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

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pamcl/backbone.hpp"
#include "pamcl/layers.hpp"
#include "pamcl/pruning.hpp"
#include "pamcl/rng.hpp"

namespace pamcl {

/// Frozen stem + first three residual stages of the backbone. Immutable
/// after construction; normalization layers always run with their fixed
/// statistics, so extraction is a pure function and safe for concurrent
/// readers.
struct SharedExtractor {
  BackboneVariant variant;
  Conv2d stem;
  BatchNorm2d stem_bn;
  std::vector<Stage> stages;  // stages 1..3
  int out_channels = 0;
  std::vector<float> norm_mean{0.5f, 0.5f, 0.5f};  // input normalization
  std::vector<float> norm_std{0.25f, 0.25f, 0.25f};

  /// Feature maps for a normalized image batch [N,3,H,W].
  Tensor extract(const Tensor& batch) const;

  int64_t param_count() const;
  /// Snapshot of every parameter and statistic, for immutability audits.
  StateDict state_dict() const;
};

/// Per-task trainable final stage. Carries an optional pruning plan; while
/// masked, dropped channels are pinned to zero in both directions. After
/// compact() the structure itself is smaller and masks are gone.
struct AdaptationModule {
  int module_id = -1;
  std::vector<int> task_ids;  // tasks routed to this module (>1 under reuse)
  Stage stage;
  std::optional<PruningPlan> plan;
  bool frozen = false;
  bool compacted = false;
  int in_channels = 0;
  int out_channels = 0;
  int64_t dense_param_count = 0;  // unpruned template size (masked-logical)

  Tensor forward(const Tensor& feature_map) const { return stage.forward(feature_map); }

  bool masked() const { return plan.has_value() && !compacted; }
  int64_t param_count() const { return stage.param_count(); }

  void set_frozen(bool on);
};

enum class InitStrategy { pretrained, relevant };
InitStrategy parse_init_strategy(const std::string& s);
std::string to_string(InitStrategy s);

/// Append-only classifier over the cumulative label space. Rows belonging
/// to completed tasks are frozen at session end.
struct UnifiedClassifier {
  Linear lin;
  int embedding_dim = 0;
  std::vector<int> row_task;           // owning task per row
  std::vector<uint8_t> row_trainable;  // per-row freeze map

  int rows() const { return static_cast<int>(row_task.size()); }
  Tensor logits(const Tensor& pooled) const { return lin.forward(pooled); }

  /// Zeroes gradient rows whose row_trainable flag is off.
  void suppress_frozen_row_grads();
  void freeze_rows_of_task(int task_id);

  int64_t param_count() const;
  int64_t trainable_param_count() const;
};

UnifiedClassifier make_classifier(int embedding_dim);

/// Appends `new_classes` rows owned by `task_id`; fan-in uniform init with
/// zero bias; existing rows (and their freeze flags) are untouched.
UnifiedClassifier expand_classifier(const UnifiedClassifier& classifier,
                                    int new_classes, int task_id, Rng& rng);

struct TaskEntry {
  int task_id = -1;
  std::vector<int> class_ids;  // global ids, order of first appearance
  int module_index = -1;
};

/// Everything the incremental learner accumulates across sessions.
struct SessionState {
  SharedExtractor extractor;
  AdaptationModule module_template;  // pre-trained stage-4 weights
  std::vector<AdaptationModule> modules;
  std::optional<AdaptationModule> active_module;  // only during a session
  UnifiedClassifier classifier;
  std::vector<Tensor> centroids;  // one per task, extractor-feature space
  std::vector<TaskEntry> task_registry;
  std::unordered_map<int, int> class_to_row;

  int task_count() const { return static_cast<int>(task_registry.size()); }
  int module_count() const { return static_cast<int>(modules.size()); }
  /// Classifier rows owned by the tasks a module serves.
  std::vector<int> module_rows(int module_index) const;
  std::vector<int> task_rows(int task_id) const;
  const TaskEntry& entry_for_task(int task_id) const;
};

/// Builds the frozen extractor + trainable stage-4 template from a
/// checkpoint in the backbone family's conventional key layout.
std::pair<SharedExtractor, AdaptationModule> split_backbone(
    const StateDict& weights, const std::string& variant_name);

/// Eq.-style composed forward: pooled module output through the classifier.
/// Returns logits over the cumulative label space.
Tensor forward_task(const SharedExtractor& extractor,
                    const AdaptationModule& module,
                    const UnifiedClassifier& classifier, const Tensor& batch);

Tensor extract_features(const SharedExtractor& extractor, const Tensor& batch);

/// Creates the next trainable module: fresh pre-trained weights, or a clone
/// of `donor` (weights + mask) for the relevant-module strategy.
AdaptationModule instantiate_module(const AdaptationModule& module_template,
                                    InitStrategy strategy,
                                    const AdaptationModule* donor, int task_id);

enum class CountingMode { masked_logical, compacted_physical };

struct ParamReport {
  CountingMode mode = CountingMode::compacted_physical;
  int64_t trainable_per_task = 0;
  int64_t total_after_all_tasks = 0;
  int64_t extractor_params = 0;
  int64_t module_params = 0;
  int64_t classifier_params = 0;
};

ParamReport count_parameters(const SessionState& state, CountingMode mode);

}  // namespace pamcl
