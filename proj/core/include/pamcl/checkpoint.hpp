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
#include <map>
#include <string>
#include <vector>

#include "pamcl/tensor.hpp"

namespace pamcl {

/// Named tensor collection; keys follow the backbone family's conventional
/// layout ("conv1.weight", "layer4.0.bn2.running_mean", ...).
using StateDict = std::map<std::string, Tensor>;

/// Flat binary tensor container (magic "PAMCKPT1", little-endian, f32).
void save_state_dict(const std::filesystem::path& path, const StateDict& dict);
StateDict load_state_dict(const std::filesystem::path& path);

/// Sidecar manifest recording where a checkpoint came from.
struct CheckpointManifest {
  std::string variant;
  std::string source;
  std::string sha256;  // content hash of the checkpoint file
  int input_size = 0;
  std::vector<float> norm_mean;  // per-channel input normalization
  std::vector<float> norm_std;

  static std::filesystem::path path_for(const std::filesystem::path& checkpoint);
};

void save_manifest(const std::filesystem::path& checkpoint_path,
                   const CheckpointManifest& manifest);
CheckpointManifest load_manifest(const std::filesystem::path& checkpoint_path);

}  // namespace pamcl
