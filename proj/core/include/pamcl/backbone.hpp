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

#include <array>
#include <string>
#include <vector>

#include "pamcl/checkpoint.hpp"
#include "pamcl/layers.hpp"
#include "pamcl/rng.hpp"

namespace pamcl {

/// Architecture family descriptor. Residual-network variants share the
/// stem + 4-stage layout; "tiny" is a narrow 32x32-input member used for
/// desk-scale experiments.
struct BackboneVariant {
  std::string name;
  bool bottleneck = false;
  std::array<int, 4> stage_blocks{};
  std::array<int, 4> planes{};  // base width per stage (pre-expansion)
  int expansion = 1;
  int stem_kernel = 7, stem_stride = 2, stem_pad = 3;
  bool stem_pool = true;  // 3x3/2 max pool after the stem
  int input_size = 224;

  int stage_out_channels(int stage_idx) const {
    return planes[static_cast<size_t>(stage_idx)] * expansion;
  }
  /// Input channels of a given stage.
  int stage_in_channels(int stage_idx) const {
    return stage_idx == 0 ? planes[0] : stage_out_channels(stage_idx - 1);
  }
};

/// Known variants: rn18, rn34, rn50, rn101, rn152, tiny.
const BackboneVariant& backbone_variant(const std::string& name);
std::vector<std::string> backbone_variant_names();

Block make_block(bool bottleneck, int in_c, int planes, int stride, int expansion);
Stage make_stage(const BackboneVariant& v, int stage_idx);

/// Fully trainable backbone (stem + 4 stages [+ optional head]); used for
/// pretraining fixtures and the sequential-finetune baseline. The frozen
/// extractor / adaptation-module split is built from this layout's weights.
struct BackboneNet {
  BackboneVariant variant;
  Conv2d stem;
  BatchNorm2d stem_bn;
  std::vector<Stage> stages;  // 4

  struct Cache {
    Conv2d::Cache stem_c;
    BatchNorm2d::Cache stem_b;
    Tensor stem_relu;
    std::vector<int64_t> pool_argmax;
    std::vector<int64_t> pool_in_shape;
    std::vector<std::vector<Block::Cache>> stage_caches;
    int64_t fmap_h = 0, fmap_w = 0;
  };

  /// Eval-mode forward to the stage-4 feature map.
  Tensor forward(const Tensor& x) const;
  /// Train-mode forward (batch-stat BN, caches for backward).
  Tensor forward(const Tensor& x, Cache& cache);
  /// Backward from feature-map gradient; accumulates parameter grads.
  void backward(const Tensor& dfmap, const Cache& cache);

  void collect_params(std::vector<Parameter*>& out);
  int out_channels() const { return variant.stage_out_channels(3); }
};

BackboneNet build_backbone(const BackboneVariant& v);

/// He-normal conv init, BN gamma=1/beta=0; used when fabricating checkpoints.
void init_backbone(BackboneNet& net, Rng& rng);

/// Conventional key layout ("conv1.weight", "layer3.1.bn2.running_var", ...).
StateDict backbone_state_dict(const BackboneNet& net);
void load_backbone_state(BackboneNet& net, const StateDict& dict);

/// Key/shape walk of a variant without building tensors; drives checkpoint
/// validation and parameter accounting.
std::vector<std::pair<std::string, std::vector<int64_t>>> backbone_layout(
    const BackboneVariant& v);

StateDict stage_state_dict(const Stage& stage, const std::string& prefix);
void load_stage_state(Stage& stage, const StateDict& dict, const std::string& prefix);

}  // namespace pamcl
