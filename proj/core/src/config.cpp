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

#include "pamcl/config.hpp"

#include <cstdlib>
#include <fstream>

#include "pamcl/errors.hpp"
#include "pamcl/hash.hpp"

namespace pamcl {

using nlohmann::json;

json RunConfig::to_json() const {
  json t{{"epochs", train.epochs},
         {"learning_rate", train.learning_rate},
         {"batch_size", train.batch_size},
         {"prune_epoch", train.prune_epoch},
         {"prune_magnitude", train.prune_magnitude},
         {"init_strategy", to_string(train.init_strategy)},
         {"distill_temperature", train.distill_temperature},
         {"distill_weight", train.distill_weight},
         {"augment", train.augment}};
  if (train.reuse_beta)
    t["reuse_beta"] = *train.reuse_beta;
  else
    t["reuse_beta"] = nullptr;

  return json{
      {"method", method},
      {"dataset", {{"id", dataset_id}, {"root", data_root}}},
      {"backbone", {{"checkpoint", backbone_checkpoint}, {"variant", backbone_variant}}},
      {"split", {{"base_classes", split_base_classes}, {"increment", split_increment}}},
      {"train", t},
      {"routing",
       {{"strategy", to_string(strategy)},
        {"batch_size", routing_batch_size},
        {"ensemble_top_weight", ensemble_top_weight}}},
      {"run",
       {{"seeds", seeds},
        {"output_dir", output_dir},
        {"determinism", determinism},
        {"resume", resume}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.method = j.value("method", c.method);
    if (j.contains("dataset")) {
      c.dataset_id = j["dataset"].value("id", c.dataset_id);
      c.data_root = j["dataset"].value("root", c.data_root);
    }
    if (j.contains("backbone")) {
      c.backbone_checkpoint = j["backbone"].value("checkpoint", c.backbone_checkpoint);
      c.backbone_variant = j["backbone"].value("variant", c.backbone_variant);
    }
    if (j.contains("split")) {
      c.split_base_classes = j["split"].value("base_classes", c.split_base_classes);
      c.split_increment = j["split"].value("increment", c.split_increment);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.prune_epoch = t.value("prune_epoch", c.train.prune_epoch);
      c.train.prune_magnitude = t.value("prune_magnitude", c.train.prune_magnitude);
      c.train.init_strategy =
          parse_init_strategy(t.value("init_strategy", std::string("pretrained")));
      if (t.contains("reuse_beta") && !t["reuse_beta"].is_null())
        c.train.reuse_beta = t["reuse_beta"].get<float>();
      c.train.distill_temperature =
          t.value("distill_temperature", c.train.distill_temperature);
      c.train.distill_weight = t.value("distill_weight", c.train.distill_weight);
      c.train.augment = t.value("augment", c.train.augment);
    }
    if (j.contains("routing")) {
      const json& r = j["routing"];
      c.strategy = parse_strategy(r.value("strategy", std::string("confidence")));
      c.routing_batch_size = r.value("batch_size", c.routing_batch_size);
      c.ensemble_top_weight = r.value("ensemble_top_weight", c.ensemble_top_weight);
    }
    if (j.contains("run")) {
      const json& r = j["run"];
      if (r.contains("seeds")) c.seeds = r["seeds"].get<std::vector<uint64_t>>();
      c.output_dir = r.value("output_dir", c.output_dir);
      c.determinism = r.value("determinism", c.determinism);
      c.resume = r.value("resume", c.resume);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  RunConfig c = from_json(j);
  c.resolve();
  return c;
}

void RunConfig::resolve() {
  if (const char* root = std::getenv("PAMCL_DATA_ROOT")) data_root = root;
  if (const char* out = std::getenv("PAMCL_OUT_ROOT"))
    output_dir = (std::filesystem::path(out) / output_dir).string();

  if (method != "pam" && method != "finetune")
    throw ConfigError("method must be 'pam' or 'finetune', got '" + method + "'");
  if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (split_increment < 1) throw ConfigError("split.increment must be >= 1");
  if (split_base_classes < 0) throw ConfigError("split.base_classes must be >= 0");
  if (routing_batch_size < 1) throw ConfigError("routing.batch_size must be >= 1");
  if (!(ensemble_top_weight >= 0.0f && ensemble_top_weight <= 1.0f))
    throw ConfigError("routing.ensemble_top_weight must lie in [0,1]");
  train.validate();
}

std::string RunConfig::config_hash() const {
  return sha256_hex(to_json().dump());
}

}  // namespace pamcl
