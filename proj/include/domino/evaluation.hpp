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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "domino/data.hpp"
#include "domino/domain_embedding.hpp"
#include "domino/model.hpp"

namespace domino {

// counts[gt][pred], row-major K x K.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<uint64_t> counts;

  explicit ConfusionMatrix(int k)
      : num_classes(k),
        counts(static_cast<size_t>(k) * static_cast<size_t>(k), 0) {}
  ConfusionMatrix() = default;

  uint64_t at(int gt, int pred) const {
    return counts[static_cast<size_t>(gt) * num_classes + pred];
  }
  uint64_t total() const;
};

// Optional ignore label for future real-data loaders; pixels matching it
// are skipped. Negative means none.
void update_confusion(ConfusionMatrix& cm, const std::vector<uint8_t>& predictions,
                      const std::vector<uint8_t>& labels, int ignore_label = -1);

ConfusionMatrix merge_confusion(const ConfusionMatrix& a,
                                const ConfusionMatrix& b);

// IoU_c = diag / (row + col - diag); classes absent from both gt and pred
// are undefined and excluded from the mean.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm);

double mean_iou(const ConfusionMatrix& cm);

// 100 * target / source, rounded to 2 decimals, round-half-to-even.
double miou_percent(double source_miou, double target_miou);

struct MetricsReport {
  std::vector<std::optional<double>> per_class_iou;
  double miou = 0.0;
  // Filled for cross-domain reports.
  std::optional<double> source_miou;
  std::optional<double> target_miou;
  std::optional<double> miou_percent;

  nlohmann::json to_json() const;
};

MetricsReport make_cross_domain_report(const MetricsReport& source,
                                       const MetricsReport& target);

// Argmax-decodes each scene (ties -> lowest class id), accumulating one
// confusion matrix. extractor may be null for models that ignore W.
MetricsReport evaluate_dataset(const SegmentationModel& model,
                               const std::vector<LabeledScene>& dataset,
                               const DomainExtractor* extractor);

// Spec-shaped convenience overload.
MetricsReport evaluate_dataset(const SegmentationModel& model,
                               const std::vector<LabeledScene>& dataset,
                               const std::vector<DomainDescription>& catalog,
                               const EncoderPair& enc,
                               double temperature = 1.0);

std::vector<uint8_t> argmax_labels(const Tensor& logits);

}  // namespace domino
