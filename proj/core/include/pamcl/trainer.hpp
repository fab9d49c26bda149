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
#include <string>
#include <vector>

#include "pamcl/kernels.hpp"
#include "pamcl/model.hpp"
#include "pamcl/stream.hpp"

namespace pamcl {

/// Per-session hyperparameters. Defaults follow the benchmark protocol:
/// 25 epochs, Adam at 1e-3, batch 48, prune after epoch 1 at 96%.
struct TrainConfig {
  int epochs = 25;
  float learning_rate = 1e-3f;
  int batch_size = 48;
  int prune_epoch = 1;           // prune at the end of this epoch
  float prune_magnitude = 0.96f; // fraction of in-scope channels dropped
  InitStrategy init_strategy = InitStrategy::pretrained;
  std::optional<float> reuse_beta;  // adaptive module reuse threshold scale
  float distill_temperature = 2.0f;
  float distill_weight = 1.0f;
  uint64_t seed = 0;
  bool augment = false;  // horizontal flip + pad-4 random crop

  void validate() const;
};

/// Outcome of the task-similarity test for adaptive module reuse.
struct ReuseDecision {
  bool reused = false;
  int target_task = -1;    // most similar prior task
  int target_module = -1;  // its module index
  float d_min = 0.0f;
  float d_bar = 0.0f;
  float threshold = 0.0f;  // beta * d_bar
};

struct TrainLog {
  int task_id = -1;
  struct Step {
    int epoch;
    int step;
    float loss;
  };
  struct Event {
    int epoch;
    std::string kind;  // "prune", "reuse", "freeze", ...
    std::string detail;
  };
  std::vector<Step> steps;
  std::vector<Event> events;

  float epoch_mean_loss(int epoch) const;
  float final_epoch_loss() const;
};

/// Mean pooled extractor feature over the given samples (Manhattan-distance
/// space for reuse and distance routing).
Tensor compute_task_centroid(const SharedExtractor& extractor,
                             const ImageDataset& dataset,
                             std::span<const int64_t> indices);

/// d(i) = ||c_new - c_i||_1; mean over priors scaled by beta gives the
/// threshold; reuse iff the closest prior is nearer than that.
ReuseDecision decide_reuse(const std::vector<Tensor>& prior_centroids,
                           const Tensor& c_new, float beta);

/// Temperature-softened distillation divergence (0 when student == teacher).
inline float distillation_loss(const Tensor& student_logits,
                               const Tensor& teacher_logits, float temperature) {
  return kernels::distillation_kl(student_logits, teacher_logits, temperature);
}

/// Runs one incremental session on stream task `task_index`: obtains a
/// module per the init/reuse policy, expands the classifier, minimizes
/// cross-entropy (plus distillation when a module is reused), prunes at the
/// scheduled epoch, then freezes, compacts and registers the module and the
/// task centroid.
TrainLog train_task(SessionState& state, const TaskStream& stream,
                    int task_index, const TrainConfig& config);

/// L1 distance between pooled feature centroids.
float manhattan(const Tensor& a, const Tensor& b);

// -- fully trainable network -------------------------------------------------
// Used for pretraining fixture checkpoints and the sequential-finetune
// baseline; not part of the incremental learner itself.

struct FullNetClassifier {
  BackboneNet net;
  Linear head;
  std::vector<float> norm_mean, norm_std;

  Tensor logits(const Tensor& batch) const;  // eval mode
  void expand_head(int new_classes, Rng& rng);
};

FullNetClassifier make_full_net(const std::string& variant, uint64_t seed);

/// Cross-entropy training over the given samples; labels are mapped through
/// `label_to_row`. Returns per-epoch mean losses.
std::vector<float> train_full_net(FullNetClassifier& model,
                                  const ImageDataset& dataset,
                                  std::span<const int64_t> indices,
                                  const std::vector<int>& label_to_row,
                                  int epochs, float lr, int batch_size,
                                  uint64_t seed, bool augment);

}  // namespace pamcl
