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
#include <span>

#include "pamcl/router.hpp"
#include "pamcl/stream.hpp"

namespace pamcl {

struct PerSamplePrediction {
  int64_t test_index = -1;
  int true_class = -1;
  int predicted_class = -1;
  int true_task = -1;
  int selected_module = -1;
};

struct StageEval {
  double accuracy = 0.0;  // A_b, percent over the cumulative test set
  int64_t correct = 0;
  int64_t total = 0;
  std::vector<RoutingRecord> records;          // one per routed batch
  std::vector<PerSamplePrediction> predictions;
};

/// Cumulative evaluation after stage `up_to_task`: every seen task's test
/// samples, fed as task-pure batches, routed with the chosen strategy.
/// `ensemble_top_weight`, when set, switches to the weighted ensemble.
StageEval evaluate_stage(const SessionState& state, const TaskStream& stream,
                         int up_to_task, RoutingStrategy strategy,
                         int batch_size,
                         std::optional<float> ensemble_top_weight = std::nullopt);

/// Task-incremental accuracy of one task (oracle module, own label space).
double til_task_accuracy(const SessionState& state, const TaskStream& stream,
                         int task, int batch_size);

/// Arithmetic mean of stage accuracies.
double average_accuracy(std::span<const double> stage_accuracies);

/// Routes every seen task's test batches and tallies which module won.
ModuleSelectionMatrix selection_confusion(const SessionState& state,
                                          const TaskStream& stream,
                                          int up_to_task,
                                          RoutingStrategy strategy,
                                          int batch_size);

ModuleSelectionMatrix confusion_from_records(
    std::span<const RoutingRecord> records, int tasks, int modules);

}  // namespace pamcl
