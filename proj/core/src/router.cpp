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

#include "pamcl/router.hpp"

#include <cmath>

#include "pamcl/errors.hpp"
#include "pamcl/kernels.hpp"
#include "pamcl/trainer.hpp"

namespace pamcl {

namespace k = kernels;

RoutingStrategy parse_strategy(const std::string& s) {
  if (s == "confidence") return RoutingStrategy::confidence;
  if (s == "distance-pooled") return RoutingStrategy::distance_pooled;
  if (s == "distance-map") return RoutingStrategy::distance_map;
  if (s == "oracle") return RoutingStrategy::oracle;
  throw ConfigError("unknown routing strategy: " + s);
}

std::string to_string(RoutingStrategy s) {
  switch (s) {
    case RoutingStrategy::confidence: return "confidence";
    case RoutingStrategy::distance_pooled: return "distance-pooled";
    case RoutingStrategy::distance_map: return "distance-map";
    case RoutingStrategy::oracle: return "oracle";
  }
  return "?";
}

void EnsembleWeights::validate() const {
  if (!(top_weight >= 0.0f && top_weight <= 1.0f))
    throw ConfigError("ensemble weight must lie in [0,1]");
}

std::vector<Tensor> module_probabilities_from_features(const SessionState& state,
                                                       const Tensor& feature_maps) {
  if (state.modules.empty())
    throw StateError("module_probabilities: no frozen modules");
  std::vector<Tensor> probs;
  probs.reserve(state.modules.size());
  for (const AdaptationModule& m : state.modules) {
    const Tensor pooled = k::gap_forward(m.forward(feature_maps));
    probs.push_back(k::softmax_rows(state.classifier.logits(pooled)));
  }
  return probs;
}

std::vector<Tensor> module_probabilities(const SessionState& state,
                                         const Tensor& batch) {
  if (state.modules.empty())
    throw StateError("module_probabilities: no frozen modules");
  const Tensor fmap = state.extractor.extract(batch);  // shared across modules
  return module_probabilities_from_features(state, fmap);
}

ConfidenceVector select_confident(const std::vector<Tensor>& probabilities,
                                  const std::vector<std::vector<int>>& module_rows) {
  if (probabilities.empty()) throw StateError("select_confident: no modules");
  if (probabilities[0].dim(0) == 0) throw InputError("select_confident: empty batch");
  if (module_rows.size() != probabilities.size())
    throw InputError("select_confident: label-space list does not match modules");

  ConfidenceVector cv;
  cv.strategy = RoutingStrategy::confidence;
  for (size_t b = 0; b < probabilities.size(); ++b) {
    const Tensor& p = probabilities[b];
    double acc = 0.0;
    for (int64_t i = 0; i < p.dim(0); ++i) {
      double best = 0.0;
      for (int row : module_rows[b]) best = std::max(best, static_cast<double>(p.at2(i, row)));
      acc += best;
    }
    cv.per_module_confidence.push_back(
        static_cast<float>(acc / static_cast<double>(p.dim(0))));
  }
  cv.selected = 0;
  for (size_t b = 1; b < cv.per_module_confidence.size(); ++b)
    if (cv.per_module_confidence[b] >
        cv.per_module_confidence[static_cast<size_t>(cv.selected)])
      cv.selected = static_cast<int>(b);
  return cv;
}

ConfidenceVector select_by_distance(const SessionState& state,
                                    const Tensor& batch_centroid, bool euclidean) {
  if (state.centroids.empty()) throw StateError("select_by_distance: no centroids");
  ConfidenceVector cv;
  cv.strategy = euclidean ? RoutingStrategy::distance_map
                          : RoutingStrategy::distance_pooled;
  // Distances accumulate per task; the winning task selects its module.
  int best_task = 0;
  double best_dist = 0.0;
  std::vector<double> module_best(state.modules.size(), -1.0);
  for (size_t t = 0; t < state.centroids.size(); ++t) {
    const Tensor& c = state.centroids[t];
    double d = 0.0;
    if (euclidean) {
      for (int64_t i = 0; i < c.numel(); ++i) {
        const double diff = batch_centroid[i] - c[i];
        d += diff * diff;
      }
      d = std::sqrt(d);
    } else {
      d = manhattan(batch_centroid, c);
    }
    const int mod = state.task_registry[t].module_index;
    if (module_best[static_cast<size_t>(mod)] < 0 ||
        d < module_best[static_cast<size_t>(mod)])
      module_best[static_cast<size_t>(mod)] = d;
    if (t == 0 || d < best_dist) {
      best_dist = d;
      best_task = static_cast<int>(t);
    }
  }
  for (double d : module_best)
    cv.per_module_confidence.push_back(static_cast<float>(d));
  cv.selected = state.task_registry[static_cast<size_t>(best_task)].module_index;
  return cv;
}

namespace {

std::vector<std::vector<int>> all_module_rows(const SessionState& state) {
  std::vector<std::vector<int>> rows(state.modules.size());
  for (size_t m = 0; m < state.modules.size(); ++m)
    rows[m] = state.module_rows(static_cast<int>(m));
  return rows;
}

std::vector<int> rows_to_classes(const SessionState& state,
                                 const std::vector<int>& rows) {
  // classifier rows appear in order of first appearance; invert the map
  std::vector<int> row_to_class(static_cast<size_t>(state.classifier.rows()), -1);
  for (const auto& [cid, row] : state.class_to_row)
    row_to_class[static_cast<size_t>(row)] = cid;
  std::vector<int> classes;
  classes.reserve(rows.size());
  for (int r : rows) classes.push_back(row_to_class[static_cast<size_t>(r)]);
  return classes;
}

Prediction argmax_rows(const SessionState& state, const Tensor& p,
                       const std::vector<int>& candidate_rows,
                       ConfidenceVector cv) {
  Prediction out;
  out.confidence = std::move(cv);
  out.rows.reserve(static_cast<size_t>(p.dim(0)));
  for (int64_t i = 0; i < p.dim(0); ++i) {
    int best = candidate_rows[0];
    for (int r : candidate_rows)
      if (p.at2(i, r) > p.at2(i, best)) best = r;
    out.rows.push_back(best);
  }
  out.classes = rows_to_classes(state, out.rows);
  return out;
}

std::vector<int> full_row_range(const SessionState& state) {
  std::vector<int> rows(static_cast<size_t>(state.classifier.rows()));
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  return rows;
}

}  // namespace

Prediction predict(const SessionState& state, const Tensor& batch,
                   RoutingStrategy strategy, std::optional<int> oracle_task) {
  if (state.modules.empty()) throw StateError("predict: no modules");
  if (strategy == RoutingStrategy::oracle && !oracle_task)
    throw ConfigError("oracle routing requires a task id");

  const Tensor fmap = state.extractor.extract(batch);

  ConfidenceVector cv;
  if (strategy == RoutingStrategy::confidence) {
    const std::vector<Tensor> probs =
        module_probabilities_from_features(state, fmap);
    cv = select_confident(probs, all_module_rows(state));
    return argmax_rows(state, probs[static_cast<size_t>(cv.selected)],
                       full_row_range(state), cv);
  }
  if (strategy == RoutingStrategy::distance_pooled ||
      strategy == RoutingStrategy::distance_map) {
    const Tensor pooled = k::gap_forward(fmap);
    Tensor centroid({pooled.dim(1)});
    for (int64_t j = 0; j < pooled.dim(1); ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < pooled.dim(0); ++i) s += pooled.at2(i, j);
      centroid[j] = static_cast<float>(s / static_cast<double>(pooled.dim(0)));
    }
    cv = select_by_distance(state, centroid,
                            strategy == RoutingStrategy::distance_map);
    const AdaptationModule& m = state.modules[static_cast<size_t>(cv.selected)];
    const Tensor pooled_m = k::gap_forward(m.forward(fmap));
    const Tensor p = k::softmax_rows(state.classifier.logits(pooled_m));
    return argmax_rows(state, p, full_row_range(state), cv);
  }

  // Oracle / task-incremental mode: the registered module for the true task,
  // argmax restricted to that task's own classes.
  const TaskEntry& entry = state.entry_for_task(*oracle_task);
  cv.strategy = RoutingStrategy::oracle;
  cv.per_module_confidence.assign(state.modules.size(), 0.0f);
  cv.selected = entry.module_index;
  cv.per_module_confidence[static_cast<size_t>(cv.selected)] = 1.0f;
  const AdaptationModule& m = state.modules[static_cast<size_t>(entry.module_index)];
  const Tensor pooled_m = k::gap_forward(m.forward(fmap));
  const Tensor p = k::softmax_rows(state.classifier.logits(pooled_m));
  return argmax_rows(state, p, state.task_rows(*oracle_task), cv);
}

Prediction ensemble_predict(const SessionState& state, const Tensor& batch,
                            const EnsembleWeights& weights) {
  weights.validate();
  if (state.modules.empty()) throw StateError("ensemble_predict: no modules");
  const Tensor fmap = state.extractor.extract(batch);
  const std::vector<Tensor> probs = module_probabilities_from_features(state, fmap);
  ConfidenceVector cv = select_confident(probs, all_module_rows(state));

  const size_t count = probs.size();
  Tensor mixture(probs[0].shape());
  if (count == 1) {
    mixture = probs[0];
  } else {
    const float w = weights.top_weight;
    const float rest = (1.0f - w) / static_cast<float>(count - 1);
    for (size_t b = 0; b < count; ++b) {
      const float scale = b == static_cast<size_t>(cv.selected) ? w : rest;
      for (int64_t i = 0; i < mixture.numel(); ++i)
        mixture[i] += scale * probs[b][i];
    }
  }
  return argmax_rows(state, mixture, full_row_range(state), cv);
}

int64_t ModuleSelectionMatrix::row_sum(int task) const {
  int64_t s = 0;
  for (int64_t v : counts[static_cast<size_t>(task)]) s += v;
  return s;
}

double ModuleSelectionMatrix::diagonal_fraction(const SessionState& state) const {
  int64_t diag = 0, total = 0;
  for (size_t t = 0; t < counts.size(); ++t) {
    const int correct = state.task_registry[t].module_index;
    for (size_t m = 0; m < counts[t].size(); ++m) {
      total += counts[t][m];
      if (static_cast<int>(m) == correct) diag += counts[t][m];
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);
}

}  // namespace pamcl
