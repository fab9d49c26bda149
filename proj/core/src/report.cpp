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

#include "pamcl/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pamcl/errors.hpp"

namespace pamcl {

using nlohmann::json;

namespace {

json param_report_json(const ParamReport& p) {
  return json{{"mode", p.mode == CountingMode::masked_logical ? "masked-logical"
                                                              : "compacted-physical"},
              {"trainable_per_task", p.trainable_per_task},
              {"total_after_all_tasks", p.total_after_all_tasks},
              {"extractor", p.extractor_params},
              {"modules", p.module_params},
              {"classifier", p.classifier_params}};
}

ParamReport param_report_from_json(const json& j) {
  ParamReport p;
  p.mode = j.value("mode", "compacted-physical") == std::string("masked-logical")
               ? CountingMode::masked_logical
               : CountingMode::compacted_physical;
  p.trainable_per_task = j.value("trainable_per_task", int64_t{0});
  p.total_after_all_tasks = j.value("total_after_all_tasks", int64_t{0});
  p.extractor_params = j.value("extractor", int64_t{0});
  p.module_params = j.value("modules", int64_t{0});
  p.classifier_params = j.value("classifier", int64_t{0});
  return p;
}

}  // namespace

json RunReport::to_json() const {
  return json{{"seed", seed},
              {"method", method},
              {"per_stage_accuracy", per_stage_accuracy},
              {"average_accuracy", average_acc},
              {"final_accuracy", final_acc},
              {"til_after_stage", til_after_stage},
              {"confusion", confusion.counts},
              {"params_physical", param_report_json(params_physical)},
              {"params_logical", param_report_json(params_logical)},
              {"module_count", module_count},
              {"config_echo", config_echo},
              {"wall_time_seconds", wall_time_seconds}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  r.seed = j.value("seed", uint64_t{0});
  r.method = j.value("method", "pam");
  r.per_stage_accuracy = j.value("per_stage_accuracy", std::vector<double>{});
  r.average_acc = j.value("average_accuracy", 0.0);
  r.final_acc = j.value("final_accuracy", 0.0);
  r.til_after_stage =
      j.value("til_after_stage", std::vector<std::vector<double>>{});
  r.confusion.counts =
      j.value("confusion", std::vector<std::vector<int64_t>>{});
  if (j.contains("params_physical"))
    r.params_physical = param_report_from_json(j["params_physical"]);
  if (j.contains("params_logical"))
    r.params_logical = param_report_from_json(j["params_logical"]);
  r.module_count = j.value("module_count", 0);
  if (j.contains("config_echo")) r.config_echo = j["config_echo"];
  r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  return r;
}

void RunReport::write(const std::filesystem::path& run_dir) const {
  std::filesystem::create_directories(run_dir);
  {
    std::ofstream out(run_dir / "report.json");
    if (!out) throw IngestionError("cannot write report.json in " + run_dir.string());
    out << to_json().dump(2) << "\n";
  }
  std::ofstream csv(run_dir / "report.csv");
  if (!csv) throw IngestionError("cannot write report.csv in " + run_dir.string());
  csv << "metric,stage,value\n";
  csv.precision(10);
  for (size_t b = 0; b < per_stage_accuracy.size(); ++b)
    csv << "stage_accuracy," << (b + 1) << "," << per_stage_accuracy[b] << "\n";
  csv << "average_accuracy,," << average_acc << "\n";
  csv << "final_accuracy,," << final_acc << "\n";
  csv << "module_count,," << module_count << "\n";
  csv << "trainable_per_task,," << params_physical.trainable_per_task << "\n";
  csv << "total_after_all_tasks,," << params_physical.total_after_all_tasks << "\n";
  csv << "wall_time_seconds,," << wall_time_seconds << "\n";
}

RunReport RunReport::load(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "report.json");
  if (!in) throw IngestionError("no report.json in " + run_dir.string());
  return from_json(json::parse(in));
}

SeedAggregate aggregate_reports(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw InputError("aggregate_reports: no reports");
  SeedAggregate a;
  a.seed_count = static_cast<int>(reports.size());
  double sa = 0, sf = 0;
  for (const RunReport& r : reports) {
    sa += r.average_acc;
    sf += r.final_acc;
  }
  a.mean_average = sa / a.seed_count;
  a.mean_final = sf / a.seed_count;
  double va = 0, vf = 0;
  for (const RunReport& r : reports) {
    va += (r.average_acc - a.mean_average) * (r.average_acc - a.mean_average);
    vf += (r.final_acc - a.mean_final) * (r.final_acc - a.mean_final);
  }
  a.std_average = std::sqrt(va / a.seed_count);
  a.std_final = std::sqrt(vf / a.seed_count);
  return a;
}

json SeedAggregate::to_json() const {
  return json{{"seeds", seed_count},
              {"average_accuracy", {{"mean", mean_average}, {"std", std_average}}},
              {"final_accuracy", {{"mean", mean_final}, {"std", std_final}}}};
}

// -- SVG ----------------------------------------------------------------------

namespace {

constexpr int kW = 640, kH = 420, kMargin = 56;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct SvgDoc {
  std::ofstream out;
  explicit SvgDoc(const std::filesystem::path& path) : out(path) {
    if (!out) throw IngestionError("cannot write plot: " + path.string());
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW
        << "' height='" << kH << "' viewBox='0 0 " << kW << " " << kH
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "middle", const std::string& fill = "#333") {
    out << "<text x='" << x << "' y='" << y << "' font-size='" << size
        << "' font-family='sans-serif' text-anchor='" << anchor << "' fill='"
        << fill << "'>" << s << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke = "#999", double width = 1.0) {
    out << "<line x1='" << x1 << "' y1='" << y1 << "' x2='" << x2 << "' y2='"
        << y2 << "' stroke='" << stroke << "' stroke-width='" << width << "'/>\n";
  }
  void close() { out << "</svg>\n"; }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x,
                      const std::vector<Series>& series) {
  if (x.empty() || series.empty()) throw InputError("line chart: empty data");
  double ymin = 1e300, ymax = -1e300;
  for (const Series& s : series)
    for (double v : s.values) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (ymin == ymax) {
    ymin -= 1.0;
    ymax += 1.0;
  }
  const double pad = 0.08 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double x0 = x.front(), x1 = x.back() == x.front() ? x.front() + 1 : x.back();

  auto px = [&](double v) {
    return kMargin + (v - x0) / (x1 - x0) * (kW - 2 * kMargin);
  };
  auto py = [&](double v) {
    return kH - kMargin - (v - ymin) / (ymax - ymin) * (kH - 2 * kMargin);
  };

  SvgDoc doc(path);
  doc.text(kW / 2.0, 24, title, 15);
  doc.line(kMargin, kH - kMargin, kW - kMargin, kH - kMargin, "#333");
  doc.line(kMargin, kMargin, kMargin, kH - kMargin, "#333");
  doc.text(kW / 2.0, kH - 12, x_label);
  doc.text(16, kH / 2.0, y_label, 12, "middle");
  for (int g = 0; g <= 4; ++g) {
    const double gy = ymin + g * (ymax - ymin) / 4.0;
    doc.line(kMargin, py(gy), kW - kMargin, py(gy), "#eee");
    doc.text(kMargin - 6, py(gy) + 4, fmt(gy), 10, "end");
  }
  for (double xv : x) doc.text(px(xv), kH - kMargin + 16, fmt(xv), 10);

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % 8];
    doc.out << "<polyline fill='none' stroke='" << color
            << "' stroke-width='2' points='";
    for (size_t i = 0; i < series[s].values.size() && i < x.size(); ++i)
      doc.out << px(x[i]) << "," << py(series[s].values[i]) << " ";
    doc.out << "'/>\n";
    for (size_t i = 0; i < series[s].values.size() && i < x.size(); ++i)
      doc.out << "<circle cx='" << px(x[i]) << "' cy='" << py(series[s].values[i])
              << "' r='3' fill='" << color << "'/>\n";
    doc.text(kW - kMargin - 4, kMargin + 16 + 16 * static_cast<double>(s),
             series[s].name, 11, "end", color);
  }
  doc.close();
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<std::string>& labels,
                     const std::vector<double>& values) {
  if (labels.size() != values.size() || values.empty())
    throw InputError("bar chart: label/value mismatch");
  const double vmax = std::max(1e-9, *std::max_element(values.begin(), values.end()));
  SvgDoc doc(path);
  doc.text(kW / 2.0, 24, title, 15);
  const double band = (kW - 2.0 * kMargin) / static_cast<double>(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const double h = (values[i] / vmax) * (kH - 2.0 * kMargin);
    const double bx = kMargin + band * static_cast<double>(i) + band * 0.15;
    doc.out << "<rect x='" << bx << "' y='" << (kH - kMargin - h) << "' width='"
            << band * 0.7 << "' height='" << h << "' fill='"
            << kPalette[i % 8] << "'/>\n";
    doc.text(bx + band * 0.35, kH - kMargin + 16, labels[i], 10);
    doc.text(bx + band * 0.35, kH - kMargin - h - 6, fmt(values[i]), 10);
  }
  doc.line(kMargin, kH - kMargin, kW - kMargin, kH - kMargin, "#333");
  doc.close();
}

void write_confusion_heatmap(const std::filesystem::path& path,
                             const std::string& title,
                             const ModuleSelectionMatrix& matrix) {
  if (matrix.counts.empty()) throw InputError("heatmap: empty matrix");
  const size_t rows = matrix.counts.size();
  const size_t cols = matrix.counts[0].size();
  int64_t vmax = 1;
  for (const auto& row : matrix.counts)
    for (int64_t v : row) vmax = std::max(vmax, v);

  SvgDoc doc(path);
  doc.text(kW / 2.0, 24, title, 15);
  const double cw = (kW - 2.0 * kMargin) / static_cast<double>(cols);
  const double ch = (kH - 2.0 * kMargin) / static_cast<double>(rows);
  for (size_t t = 0; t < rows; ++t) {
    for (size_t m = 0; m < cols; ++m) {
      const double frac =
          static_cast<double>(matrix.counts[t][m]) / static_cast<double>(vmax);
      const int blue = static_cast<int>(255 - 185 * frac);
      const int rg = static_cast<int>(255 - 215 * frac);
      doc.out << "<rect x='" << (kMargin + cw * static_cast<double>(m)) << "' y='"
              << (kMargin + ch * static_cast<double>(t)) << "' width='" << cw
              << "' height='" << ch << "' fill='rgb(" << rg << "," << rg << ","
              << blue << ")' stroke='#ccc'/>\n";
      if (matrix.counts[t][m] > 0)
        doc.text(kMargin + cw * (static_cast<double>(m) + 0.5),
                 kMargin + ch * (static_cast<double>(t) + 0.5) + 4,
                 std::to_string(matrix.counts[t][m]), 10, "middle",
                 frac > 0.5 ? "#fff" : "#333");
    }
    doc.text(kMargin - 8, kMargin + ch * (static_cast<double>(t) + 0.5) + 4,
             "t" + std::to_string(t), 10, "end");
  }
  for (size_t m = 0; m < cols; ++m)
    doc.text(kMargin + cw * (static_cast<double>(m) + 0.5), kH - kMargin + 16,
             "m" + std::to_string(m), 10);
  doc.text(kW / 2.0, kH - 12, "selected module");
  doc.close();
}

void write_run_plots(const std::filesystem::path& run_dir, const RunReport& report) {
  if (!report.per_stage_accuracy.empty()) {
    std::vector<double> x(report.per_stage_accuracy.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i + 1);
    write_line_chart(run_dir / "accuracy_per_stage.svg",
                     "Incremental accuracy", "stage", "accuracy [%]", x,
                     {{"A_b", report.per_stage_accuracy}});
  }
  if (!report.confusion.counts.empty())
    write_confusion_heatmap(run_dir / "module_selection.svg",
                            "Module selection per task", report.confusion);
}

}  // namespace pamcl
