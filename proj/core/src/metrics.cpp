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

#include "pamcl/metrics.hpp"

#include "pamcl/errors.hpp"

namespace pamcl {

namespace {

void check_seen(const SessionState& state, const TaskDataset& task) {
  for (int cid : task.class_ids)
    if (!state.class_to_row.count(cid))
      throw ProtocolError("evaluation: test classes of task " +
                          std::to_string(task.task_id) +
                          " were never trained (unseen class " +
                          std::to_string(cid) + ")");
}

}  // namespace

StageEval evaluate_stage(const SessionState& state, const TaskStream& stream,
                         int up_to_task, RoutingStrategy strategy, int batch_size,
                         std::optional<float> ensemble_top_weight) {
  if (up_to_task < 0 || up_to_task >= stream.task_count())
    throw InputError("evaluate_stage: stage out of range");
  if (batch_size < 1) throw ConfigError("evaluate_stage: batch size must be >= 1");

  StageEval eval;
  const ImageDataset& test = stream.data.test;
  for (int t = 0; t <= up_to_task; ++t) {
    const TaskDataset& task = stream.tasks[static_cast<size_t>(t)];
    check_seen(state, task);
    const auto& idx = task.test_indices;
    for (size_t start = 0; start < idx.size();
         start += static_cast<size_t>(batch_size)) {
      const size_t take = std::min(static_cast<size_t>(batch_size), idx.size() - start);
      const std::span<const int64_t> chunk(idx.data() + start, take);
      const Tensor batch = make_batch(test, chunk, state.extractor.norm_mean,
                                      state.extractor.norm_std);
      const Prediction pred =
          ensemble_top_weight
              ? ensemble_predict(state, batch, EnsembleWeights{*ensemble_top_weight})
              : predict(state, batch, strategy,
                        strategy == RoutingStrategy::oracle
                            ? std::optional<int>(t)
                            : std::nullopt);

      eval.records.push_back(
          {t, pred.confidence.selected, pred.confidence.per_module_confidence});
      for (size_t i = 0; i < take; ++i) {
        const int truth = test.labels[static_cast<size_t>(chunk[i])];
        eval.predictions.push_back({chunk[i], truth, pred.classes[i], t,
                                    pred.confidence.selected});
        if (pred.classes[i] == truth) ++eval.correct;
        ++eval.total;
      }
    }
  }
  eval.accuracy = eval.total == 0
                      ? 0.0
                      : 100.0 * static_cast<double>(eval.correct) /
                            static_cast<double>(eval.total);
  return eval;
}

double til_task_accuracy(const SessionState& state, const TaskStream& stream,
                         int task, int batch_size) {
  if (task < 0 || task >= stream.task_count())
    throw InputError("til_task_accuracy: task out of range");
  const TaskDataset& td = stream.tasks[static_cast<size_t>(task)];
  check_seen(state, td);
  const ImageDataset& test = stream.data.test;
  int64_t correct = 0, total = 0;
  const auto& idx = td.test_indices;
  for (size_t start = 0; start < idx.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t take = std::min(static_cast<size_t>(batch_size), idx.size() - start);
    const std::span<const int64_t> chunk(idx.data() + start, take);
    const Tensor batch = make_batch(test, chunk, state.extractor.norm_mean,
                                    state.extractor.norm_std);
    const Prediction pred = predict(state, batch, RoutingStrategy::oracle, task);
    for (size_t i = 0; i < take; ++i) {
      if (pred.classes[i] == test.labels[static_cast<size_t>(chunk[i])]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0
                    : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double average_accuracy(std::span<const double> stage_accuracies) {
  if (stage_accuracies.empty())
    throw InputError("average_accuracy: no stage accuracies");
  double sum = 0.0;
  for (double a : stage_accuracies) sum += a;
  return sum / static_cast<double>(stage_accuracies.size());
}

ModuleSelectionMatrix confusion_from_records(
    std::span<const RoutingRecord> records, int tasks, int modules) {
  ModuleSelectionMatrix m;
  m.counts.assign(static_cast<size_t>(tasks),
                  std::vector<int64_t>(static_cast<size_t>(modules), 0));
  for (const RoutingRecord& r : records)
    if (r.true_task >= 0 && r.true_task < tasks && r.selected_module >= 0 &&
        r.selected_module < modules)
      ++m.counts[static_cast<size_t>(r.true_task)]
                [static_cast<size_t>(r.selected_module)];
  return m;
}

ModuleSelectionMatrix selection_confusion(const SessionState& state,
                                          const TaskStream& stream, int up_to_task,
                                          RoutingStrategy strategy, int batch_size) {
  const StageEval eval =
      evaluate_stage(state, stream, up_to_task, strategy, batch_size);
  return confusion_from_records(eval.records, up_to_task + 1,
                                state.module_count());
}

}  // namespace pamcl
