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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pamcl/tensor.hpp"

namespace pamcl {

struct AdaptationModule;

/// L1 channel importance of one conv layer.
struct SaliencyScores {
  std::string layer_id;
  std::vector<float> scores;  // one per output channel, >= 0
};

/// Per-layer channel keep/drop decision at a target magnitude.
///
/// Only channels of in-scope layers are ever dropped. Residual-critical
/// layers (block outputs feeding skip additions, downsample projections)
/// are out of scope so the addition shapes stay valid.
struct PruningPlan {
  struct LayerMask {
    std::vector<uint8_t> keep;
    int64_t kept = 0;
  };

  float magnitude = 0.0f;
  int created_at_epoch = 0;
  bool clamped = false;  // some layer hit the keep->=1 floor
  std::vector<std::string> scope;  // prunable layer ids, structural order
  std::map<std::string, LayerMask> masks;

  int64_t kept_channels(const std::string& layer_id) const;
  std::vector<int64_t> kept_indices(const std::string& layer_id) const;
  /// Total kept channels across the scope (mask cardinality).
  int64_t total_kept() const;

  bool operator==(const PruningPlan& other) const;

  /// Structured text record; bit-exact round trip via from_text().
  std::string to_text() const;
  static PruningPlan from_text(const std::string& text);
};

/// scores[c] = sum of |w| over channel c's kernel. Layout [out][in][k][k].
SaliencyScores channel_saliency(const Tensor& weights,
                                const std::string& layer_id = "");

/// Ranks channels of every in-scope layer of an unmasked module and drops
/// the floor(magnitude * C) lowest-saliency ones per layer (ties keep the
/// lower channel index). Clamps to keep at least one channel.
PruningPlan build_pruning_plan(const AdaptationModule& module, float magnitude);

/// Zeroes dropped channels (conv rows + norm parameters), attaches masks so
/// dropped channels produce no activations and receive no gradients.
void apply_plan(AdaptationModule& module, const PruningPlan& plan);

/// Physically removes dropped channels; downstream in-channel dims shrink to
/// match. Output agrees with the masked module within float reassociation.
AdaptationModule compact(const AdaptationModule& module);

/// Prunable layer ids of a module, structural order ("b0.conv1", ...).
std::vector<std::string> prunable_layers(const AdaptationModule& module);

}  // namespace pamcl
