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

#include "pamcl/metrics.hpp"
#include "pamcl/model.hpp"

namespace pamcl {

/// Everything one run produces: per-stage accuracies, the averaged metric,
/// parameter accounting, module-selection confusion, config echo.
struct RunReport {
  uint64_t seed = 0;
  std::string method = "pam";
  std::vector<double> per_stage_accuracy;  // A_1..A_B
  double average_acc = 0.0;                // mean of per-stage values
  double final_acc = 0.0;                  // A_B
  std::vector<std::vector<double>> til_after_stage;  // [stage][task<=stage]
  ModuleSelectionMatrix confusion;
  ParamReport params_physical;
  ParamReport params_logical;
  int module_count = 0;
  nlohmann::json config_echo;
  double wall_time_seconds = 0.0;

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);

  /// Writes report.json and report.csv into the run directory.
  void write(const std::filesystem::path& run_dir) const;
  static RunReport load(const std::filesystem::path& run_dir);
};

struct SeedAggregate {
  int seed_count = 0;
  double mean_average = 0.0, std_average = 0.0;
  double mean_final = 0.0, std_final = 0.0;

  nlohmann::json to_json() const;
};

SeedAggregate aggregate_reports(const std::vector<RunReport>& reports);

// -- static plot emission (self-contained SVG) -------------------------------

struct Series {
  std::string name;
  std::vector<double> values;
};

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x,
                      const std::vector<Series>& series);

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<std::string>& labels,
                     const std::vector<double>& values);

void write_confusion_heatmap(const std::filesystem::path& path,
                             const std::string& title,
                             const ModuleSelectionMatrix& matrix);

/// Emits the standard plot set for a finished run directory.
void write_run_plots(const std::filesystem::path& run_dir, const RunReport& report);

}  // namespace pamcl
