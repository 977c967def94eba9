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

#pragma once

#include <string>
#include <vector>

namespace domino {

// A completed training run on disk: checkpoint.dmc + metrics.jsonl.
struct RunSummary {
  std::string dir;
  std::string variant;
  double source_miou = 0.0;  // [0,1]
  double target_miou = 0.0;  // [0,1]
  double miou_percent = 0.0;
};

RunSummary read_run_summary(const std::string& run_dir);

// CSV mirroring the ablation tables: columns variant, source_miou,
// target_miou, miou_percent (mIoU columns on the percent scale), rows
// sorted by variant then directory.
std::string report_csv(std::vector<RunSummary> runs);

}  // namespace domino
