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

#include <nlohmann/json.hpp>

#include "pamcl/router.hpp"
#include "pamcl/trainer.hpp"

namespace pamcl {

/// Full experiment description. Serializes to/from the JSON config file;
/// every field has a default, the resolved form round-trips identically
/// (config_echo contract). PAMCL_DATA_ROOT / PAMCL_OUT_ROOT environment
/// variables override data_root / output_dir prefixes.
struct RunConfig {
  std::string method = "pam";  // "pam" | "finetune"

  std::string dataset_id = "synth10";
  std::string data_root = "data";

  std::string backbone_checkpoint;  // path to the ingested weights
  std::string backbone_variant = "tiny";

  int split_base_classes = 0;  // m
  int split_increment = 2;     // n

  TrainConfig train;

  RoutingStrategy strategy = RoutingStrategy::confidence;
  int routing_batch_size = 48;
  float ensemble_top_weight = 1.0f;  // 1.0 = single best module

  std::vector<uint64_t> seeds{0};
  std::string output_dir = "runs/run";
  bool determinism = false;
  bool resume = false;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  /// Applies environment overrides and validates cross-field constraints.
  void resolve();
  /// Content hash of the resolved config (manifest field).
  std::string config_hash() const;
};

}  // namespace pamcl
