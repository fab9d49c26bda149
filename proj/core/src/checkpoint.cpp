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

#include "pamcl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pamcl/errors.hpp"

namespace pamcl {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'M', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IngestionError("truncated checkpoint file");
  return v;
}

}  // namespace

void save_state_dict(const std::filesystem::path& path, const StateDict& dict) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, static_cast<uint32_t>(dict.size()));
  for (const auto& [name, tensor] : dict) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.rank()));
    for (int d = 0; d < tensor.rank(); ++d)
      write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.dim(d)));
    out.write(reinterpret_cast<const char*>(tensor.ptr()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  if (!out) throw IngestionError("failed writing checkpoint: " + path.string());
}

StateDict load_state_dict(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IngestionError("not a checkpoint file (bad magic): " + path.string());
  const uint32_t count = read_pod<uint32_t>(in);
  StateDict dict;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t ndims = read_pod<uint32_t>(in);
    std::vector<int64_t> shape(ndims);
    for (uint32_t d = 0; d < ndims; ++d) shape[d] = read_pod<uint32_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw IngestionError("truncated checkpoint tensor: " + name);
    dict.emplace(std::move(name), std::move(t));
  }
  return dict;
}

std::filesystem::path CheckpointManifest::path_for(
    const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".manifest.json";
  return p;
}

void save_manifest(const std::filesystem::path& checkpoint_path,
                   const CheckpointManifest& m) {
  nlohmann::json j{{"variant", m.variant},
                   {"source", m.source},
                   {"sha256", m.sha256},
                   {"input_size", m.input_size},
                   {"norm_mean", m.norm_mean},
                   {"norm_std", m.norm_std}};
  std::ofstream out(CheckpointManifest::path_for(checkpoint_path));
  if (!out) throw IngestionError("cannot write manifest for " + checkpoint_path.string());
  out << j.dump(2) << "\n";
}

CheckpointManifest load_manifest(const std::filesystem::path& checkpoint_path) {
  std::ifstream in(CheckpointManifest::path_for(checkpoint_path));
  if (!in)
    throw IngestionError("missing manifest: " +
                         CheckpointManifest::path_for(checkpoint_path).string());
  nlohmann::json j = nlohmann::json::parse(in);
  CheckpointManifest m;
  m.variant = j.at("variant").get<std::string>();
  m.source = j.value("source", "");
  m.sha256 = j.value("sha256", "");
  m.input_size = j.value("input_size", 0);
  m.norm_mean = j.value("norm_mean", std::vector<float>{});
  m.norm_std = j.value("norm_std", std::vector<float>{});
  return m;
}

}  // namespace pamcl
