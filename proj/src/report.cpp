// Copyright 2026 The relana Authors
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

#include "relana/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "relana/checksum.hpp"
#include "relana/error.hpp"
#include "relana/pipeline.hpp"

namespace relana::report {

namespace fs = std::filesystem;
using nlohmann::json;

Format parse_format(std::string_view name) {
  if (name == "json") return Format::Json;
  if (name == "csv") return Format::Csv;
  if (name == "plot") return Format::Plot;
  throw ValidationError("unknown report format '" + std::string(name) + "'");
}

std::string format_mean_sd(const evalharness::MetricSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", s.mean);
  std::string out = buf;
  if (s.runs > 1) {
    std::snprintf(buf, sizeof buf, "%.3f", s.sd);
    std::string sd = buf;
    if (sd.rfind("0.", 0) == 0) sd.erase(0, 1);
    out += "(" + sd + ")";
  }
  return out;
}

namespace {

evalharness::MetricSummary summary_of(const json& values) {
  const auto v = values.get<std::vector<double>>();
  return evalharness::summarize(v);
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<Row> collect_rows(const json& metrics) {
  std::vector<Row> rows;
  try {
    if (metrics.contains("rec")) {
      for (const char* m : {"auc", "ndcg", "recall_at_k", "ndcg_at_k"}) rows.push_back({"rec", m, summary_of(metrics["rec"][m])});
    }
    if (metrics.contains("cls")) {
      for (const char* m : {"micro", "macro"}) rows.push_back({"cls", m, summary_of(metrics["cls"][m])});
    }
    if (metrics.contains("cart")) {
      for (const char* s : {"random", "recent", "oracle", "add", "attention"}) {
        const auto& st = metrics["cart"]["strategies"];
        if (!st.contains(s)) continue;
        for (const char* m : {"recall_at_k", "ndcg_at_k", "auc"}) {
          rows.push_back({std::string("cart/") + s, m, summary_of(st[s][m])});
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metrics: ") + e.what());
  }
  return rows;
}

std::vector<fs::path> emit_report(const fs::path& run_dir, Format format, const fs::path& out_dir,
                                  const std::vector<std::string>& sections) {
  const auto manifest = pipeline::RunManifest::load(run_dir / "manifest.json");
  const auto* eval = manifest.stage("eval");
  if (eval == nullptr || !eval->artifacts.contains("metrics.json")) throw ValidationError("missing section: eval");
  const fs::path metrics_path = run_dir / "metrics.json";
  if (!fs::exists(metrics_path) || checksum_file(metrics_path) != eval->artifacts.at("metrics.json")) {
    throw ValidationError("metrics.json does not match the manifest");
  }
  std::ifstream in(metrics_path);
  json metrics = json::parse(in);
  json drops;
  if (fs::exists(run_dir / "drops.json")) {
    std::ifstream d(run_dir / "drops.json");
    drops = json::parse(d);
  }
  for (const auto& s : sections) {
    const bool present = s == "sweep" ? (drops.contains("sweep") && !drops["sweep"].empty()) : metrics.contains(s);
    if (!present) throw ValidationError("missing section: " + s);
  }
  auto wanted = [&](const std::string& section) {
    if (sections.empty()) return true;
    const auto base = section.substr(0, section.find('/'));
    return std::find(sections.begin(), sections.end(), base) != sections.end();
  };

  std::vector<Row> rows;
  for (auto& r : collect_rows(metrics)) {
    if (wanted(r.section)) rows.push_back(std::move(r));
  }
  const bool with_sd = std::any_of(rows.begin(), rows.end(), [](const Row& r) { return r.summary.runs > 1; });
  const json sweep = drops.contains("sweep") && wanted("sweep") ? drops["sweep"] : json::array();
  const json align = metrics.contains("align") && wanted("align") ? metrics["align"] : json::array();

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  switch (format) {
    case Format::Json: {
      json j;
      j["config_hash"] = manifest.config_hash;
      j["rows"] = json::array();
      for (const auto& r : rows) {
        json row = {{"section", r.section}, {"metric", r.metric}, {"mean", r.summary.mean}, {"runs", r.summary.runs},
                    {"formatted", format_mean_sd(r.summary)}};
        if (with_sd) row["sd"] = r.summary.sd;
        j["rows"].push_back(row);
      }
      if (!sweep.empty()) j["alpha_sweep"] = sweep;
      if (!align.empty()) j["alignment"] = align;
      written.push_back(out_dir / "report.json");
      write_text(written.back(), j.dump(2) + "\n");
      break;
    }
    case Format::Csv: {
      std::string text = with_sd ? "section,metric,mean,sd,runs,formatted\n" : "section,metric,mean,runs,formatted\n";
      for (const auto& r : rows) {
        text += r.section + "," + r.metric + "," + number(r.summary.mean) + ",";
        if (with_sd) text += number(r.summary.sd) + ",";
        text += std::to_string(r.summary.runs) + "," + format_mean_sd(r.summary) + "\n";
      }
      written.push_back(out_dir / "report.csv");
      write_text(written.back(), text);
      if (!sweep.empty()) {
        std::string s = "level,dropped,examined,drop_fraction\n";
        for (const auto& p : sweep) {
          s += number(p["level"].get<double>()) + "," + std::to_string(p["dropped"].get<std::uint64_t>()) + "," +
               std::to_string(p["examined"].get<std::uint64_t>()) + "," + number(p["drop_fraction"].get<double>()) + "\n";
        }
        written.push_back(out_dir / "alpha_sweep.csv");
        write_text(written.back(), s);
      }
      if (!align.empty()) {
        std::string s = "dim,alignment,micro\n";
        for (const auto& a : align) {
          s += std::to_string(a["dim"].get<std::size_t>()) + "," + number(a["alignment"].get<double>()) + "," +
               (a.contains("micro") ? number(a["micro"].get<double>()) : std::string()) + "\n";
        }
        written.push_back(out_dir / "alignment.csv");
        write_text(written.back(), s);
      }
      break;
    }
    case Format::Plot: {
      std::string dat = "# index section/metric mean sd\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        dat += std::to_string(i) + " " + rows[i].section + "/" + rows[i].metric + " " + number(rows[i].summary.mean) + " " +
               number(rows[i].summary.sd) + "\n";
      }
      written.push_back(out_dir / "metrics.dat");
      write_text(written.back(), dat);
      std::string gp =
          "set terminal pngcairo size 900,500\nset output 'metrics.png'\nset style fill solid 0.6\n"
          "set xtics rotate by -45\nset yrange [0:1]\n"
          "plot 'metrics.dat' using 1:3:4:xtic(2) with boxerrorbars notitle\n";
      if (!sweep.empty()) {
        std::string s = "# level drop_fraction\n";
        for (const auto& p : sweep) s += number(p["level"].get<double>()) + " " + number(p["drop_fraction"].get<double>()) + "\n";
        written.push_back(out_dir / "alpha_sweep.dat");
        write_text(written.back(), s);
        gp += "set output 'alpha_sweep.png'\nset xlabel 'confidence level'\nset ylabel 'dropped fraction'\n"
              "set autoscale y\nplot 'alpha_sweep.dat' using 1:2 with linespoints notitle\n";
      }
      if (!align.empty()) {
        std::string s = "# dim alignment\n";
        for (const auto& a : align) s += std::to_string(a["dim"].get<std::size_t>()) + " " + number(a["alignment"].get<double>()) + "\n";
        written.push_back(out_dir / "alignment.dat");
        write_text(written.back(), s);
        gp += "set output 'alignment.png'\nset xlabel 'dimension'\nset ylabel 'S'\nset autoscale y\n"
              "plot 'alignment.dat' using 1:2 with linespoints notitle\n";
      }
      written.push_back(out_dir / "report.gp");
      write_text(written.back(), gp);
      break;
    }
  }
  return written;
}

}  // namespace relana::report
