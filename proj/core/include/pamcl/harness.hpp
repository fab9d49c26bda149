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

#include <filesystem>
#include <string>
#include <vector>

#include "pamcl/config.hpp"
#include "pamcl/report.hpp"

namespace pamcl {

// -- stage persistence --------------------------------------------------------
// Layout per run: stage_<b>/{module.bin, module.json, plan.txt,
// classifier.bin, classifier.json, centroid.bin, log.jsonl, summary.json},
// plus report.{csv,json}, manifest.json, predictions.jsonl, routing.jsonl.

void save_module(const std::filesystem::path& dir, const AdaptationModule& m);
AdaptationModule load_module(const std::filesystem::path& dir);

void save_classifier(const std::filesystem::path& dir, const UnifiedClassifier& c);
UnifiedClassifier load_classifier(const std::filesystem::path& dir);

/// Builds the frozen extractor + template from the configured checkpoint
/// (manifest supplies normalization constants when present).
SessionState make_initial_state(const RunConfig& config);

/// Restores a session from persisted stages (at most `max_stages` when
/// non-negative); returns how many stages were loaded. `state` must come
/// from make_initial_state.
int load_session(const std::filesystem::path& run_dir, SessionState& state,
                 std::vector<nlohmann::json>* stage_summaries = nullptr,
                 int max_stages = -1);

// -- experiments ----------------------------------------------------

/// One seed, one stream, full protocol. Writes the spec layout into run_dir
/// and returns the report. Honors config.resume by continuing from the last
/// complete stage checkpoint.
RunReport run_single(const RunConfig& config, uint64_t seed,
                     const std::filesystem::path& run_dir);

struct ExperimentResult {
  std::vector<RunReport> per_seed;
  SeedAggregate aggregate;
  std::filesystem::path output_dir;
};

/// Runs every configured seed (seed k lives in seed_<k>/ when there is more
/// than one) and writes the aggregate report at the experiment root.
ExperimentResult run_experiment(const RunConfig& config);

/// Re-scores a persisted run from its checkpoints with a different routing
/// strategy or ensemble weight; no training happens.
RunReport reevaluate_run(const RunConfig& config,
                         const std::filesystem::path& run_dir,
                         RoutingStrategy strategy,
                         std::optional<float> ensemble_top_weight,
                         int batch_size);

// -- ablations ----------------------------------------------------------------

struct AblationArm {
  std::string value;
  ExperimentResult result;
};

struct AblationResult {
  std::string axis;
  std::vector<AblationArm> arms;
  std::filesystem::path output_dir;
};

/// Sweeps one axis (prune_epoch, magnitude, strategy, ensemble_w, init,
/// beta), everything else fixed. Training-identical axes (strategy,
/// ensemble_w) train once and re-evaluate per arm. Emits per-arm reports,
/// a comparison table and plots.
AblationResult run_ablation(const RunConfig& base, const std::string& axis,
                            const std::vector<std::string>& values);

std::vector<std::string> ablation_axes();

}  // namespace pamcl
