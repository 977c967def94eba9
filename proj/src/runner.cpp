// Copyright (c) 2026 The Domino Authors. All Rights Reserved.
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

#include "domino/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "domino/common.hpp"
#include "domino/config.hpp"
#include "domino/evaluation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace domino {

RunSummary read_run_summary(const std::string& run_dir) {
  const fs::path dir(run_dir);
  check_config(fs::exists(dir), "run directory does not exist: " + run_dir);
  const fs::path ckpt = dir / "checkpoint.dmc";
  const fs::path metrics = dir / "metrics.jsonl";
  check_config(fs::exists(ckpt), "missing checkpoint in run dir: " + ckpt.string());
  check_config(fs::exists(metrics),
               "missing metrics log in run dir: " + metrics.string());

  RunSummary summary;
  summary.dir = run_dir;

  const json header = read_checkpoint_header(ckpt.string());
  const ExperimentConfig config =
      ExperimentConfig::from_json(header.at("config"));
  summary.variant = variant_name(config);

  std::ifstream in(metrics);
  std::string line;
  bool found = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception&) {
      continue;
    }
    if (!rec.contains("split_metrics")) continue;
    const json& sm = rec.at("split_metrics");
    summary.source_miou = sm.at("val_source").at("miou").get<double>();
    summary.target_miou = sm.at("val_target").at("miou").get<double>();
    summary.miou_percent = sm.at("miou_percent").get<double>();
    found = true;
  }
  check_config(found, "no split_metrics record in " + metrics.string());
  return summary;
}

std::string report_csv(std::vector<RunSummary> runs) {
  std::stable_sort(runs.begin(), runs.end(),
                   [](const RunSummary& a, const RunSummary& b) {
                     if (a.variant != b.variant) return a.variant < b.variant;
                     return a.dir < b.dir;
                   });
  std::string out = "variant,source_miou,target_miou,miou_percent\n";
  char buf[160];
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.2f\n", r.variant.c_str(),
                  100.0 * r.source_miou, 100.0 * r.target_miou,
                  r.miou_percent);
    out += buf;
  }
  return out;
}

}  // namespace domino
