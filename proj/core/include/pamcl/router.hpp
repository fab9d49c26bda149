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
#include <vector>

#include "pamcl/model.hpp"

namespace pamcl {

enum class RoutingStrategy {
  confidence,       // batch-averaged max softmax per module
  distance_pooled,  // L1 between batch centroid and stored task centroids
  distance_map,     // Euclidean variant of the same comparison
  oracle            // true task id supplied (the TIL upper bound)
};

RoutingStrategy parse_strategy(const std::string& s);
std::string to_string(RoutingStrategy s);

/// Which module a batch was routed to and how certain each module was.
struct ConfidenceVector {
  RoutingStrategy strategy = RoutingStrategy::confidence;
  std::vector<float> per_module_confidence;  // [0,1] under confidence strategy
  int selected = -1;
};

struct EnsembleWeights {
  float top_weight = 1.0f;  // rest shares (1-w) uniformly

  void validate() const;
};

/// Eq.-5 style per-module probabilities: the extractor runs once per batch,
/// every frozen module consumes the shared features, probabilities span the
/// full cumulative label space. Never mutates state.
std::vector<Tensor> module_probabilities(const SessionState& state,
                                         const Tensor& batch);

/// Same, but starting from already-extracted feature maps.
std::vector<Tensor> module_probabilities_from_features(const SessionState& state,
                                                       const Tensor& feature_maps);

/// conf(b) = mean over the batch of max_{y in module b's label set} p_b(y|x).
/// Ties select the lowest module index.
ConfidenceVector select_confident(const std::vector<Tensor>& probabilities,
                                  const std::vector<std::vector<int>>& module_rows);

/// Distance routing: batch centroid against per-task stored centroids; the
/// winning task's module is selected. `euclidean` switches the metric.
ConfidenceVector select_by_distance(const SessionState& state,
                                    const Tensor& batch_centroid, bool euclidean);

struct Prediction {
  std::vector<int> rows;     // classifier row per sample
  std::vector<int> classes;  // global class id per sample
  ConfidenceVector confidence;
};

/// Routes the batch per the strategy and takes the class argmax of the
/// selected module's probability rows. Oracle mode restricts the argmax to
/// the oracle task's own label set (task-incremental semantics); other
/// strategies argmax over the full cumulative label space.
Prediction predict(const SessionState& state, const Tensor& batch,
                   RoutingStrategy strategy,
                   std::optional<int> oracle_task = std::nullopt);

/// Weighted mixture: w on the most confident module, (1-w)/(B-1) on the
/// rest; argmax of the blended probabilities.
Prediction ensemble_predict(const SessionState& state, const Tensor& batch,
                            const EnsembleWeights& weights);

/// matrix[t][m] = task-t batches routed to module m.
struct ModuleSelectionMatrix {
  std::vector<std::vector<int64_t>> counts;  // [task][module]

  int64_t row_sum(int task) const;
  double diagonal_fraction(const SessionState& state) const;
};

/// One routed batch, as consumed by the harness diagnostics.
struct RoutingRecord {
  int true_task = -1;
  int selected_module = -1;
  std::vector<float> confidences;
};

}  // namespace pamcl
