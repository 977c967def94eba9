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

#include "domino/evaluation.hpp"

#include <cfenv>
#include <cmath>

#include "domino/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace domino {

uint64_t ConfusionMatrix::total() const {
  uint64_t t = 0;
  for (uint64_t c : counts) t += c;
  return t;
}

void update_confusion(ConfusionMatrix& cm,
                      const std::vector<uint8_t>& predictions,
                      const std::vector<uint8_t>& labels, int ignore_label) {
  check_contract(predictions.size() == labels.size(),
                 "prediction/label size mismatch");
  const int k = cm.num_classes;
  for (size_t i = 0; i < labels.size(); ++i) {
    const int gt = labels[i];
    const int pred = predictions[i];
    if (ignore_label >= 0 && gt == ignore_label) continue;
    check_contract(gt < k, "label value out of range");
    check_contract(pred < k, "prediction value out of range");
    ++cm.counts[static_cast<size_t>(gt) * k + pred];
  }
}

ConfusionMatrix merge_confusion(const ConfusionMatrix& a,
                                const ConfusionMatrix& b) {
  check_contract(a.num_classes == b.num_classes,
                 "confusion matrix dimension mismatch");
  ConfusionMatrix out(a.num_classes);
  for (size_t i = 0; i < out.counts.size(); ++i) {
    out.counts[i] = a.counts[i] + b.counts[i];
  }
  return out;
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix& cm) {
  const int k = cm.num_classes;
  std::vector<std::optional<double>> ious(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    uint64_t row = 0;
    uint64_t col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const uint64_t inter = cm.at(c, c);
    const uint64_t uni = row + col - inter;
    if (uni == 0) continue;  // absent from gt and pred: undefined
    ious[static_cast<size_t>(c)] =
        static_cast<double>(inter) / static_cast<double>(uni);
  }
  return ious;
}

double mean_iou(const ConfusionMatrix& cm) {
  const auto ious = per_class_iou(cm);
  double acc = 0.0;
  int defined = 0;
  for (const auto& iou : ious) {
    if (iou.has_value()) {
      acc += *iou;
      ++defined;
    }
  }
  check_contract(defined > 0, "no class defined in confusion matrix");
  return acc / defined;
}

double miou_percent(double source_miou, double target_miou) {
  if (source_miou <= 0.0) {
    throw DegenerateInputError("source mIoU must be positive");
  }
  const double ratio = 100.0 * target_miou / source_miou;
  // Two-decimal reporting, round-half-to-even (IEEE default mode).
  return std::nearbyint(ratio * 100.0) / 100.0;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["per_class_iou"] = nlohmann::json::array();
  for (const auto& iou : per_class_iou) {
    if (iou.has_value()) {
      j["per_class_iou"].push_back(*iou);
    } else {
      j["per_class_iou"].push_back(nullptr);
    }
  }
  j["miou"] = miou;
  if (source_miou.has_value()) j["source_miou"] = *source_miou;
  if (target_miou.has_value()) j["target_miou"] = *target_miou;
  if (miou_percent.has_value()) j["miou_percent"] = *miou_percent;
  return j;
}

MetricsReport make_cross_domain_report(const MetricsReport& source,
                                       const MetricsReport& target) {
  MetricsReport out = target;
  out.source_miou = source.miou;
  out.target_miou = target.miou;
  out.miou_percent = miou_percent(source.miou, target.miou);
  return out;
}

std::vector<uint8_t> argmax_labels(const Tensor& logits) {
  const int k = logits.dim(0);
  const int hw = logits.dim(1) * logits.dim(2);
  std::vector<uint8_t> out(static_cast<size_t>(hw));
  for (int i = 0; i < hw; ++i) {
    int best = 0;
    double best_v = logits[i];
    for (int c = 1; c < k; ++c) {
      const double v = logits[static_cast<int64_t>(c) * hw + i];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return out;
}

MetricsReport evaluate_dataset(const SegmentationModel& model,
                               const std::vector<LabeledScene>& dataset,
                               const DomainExtractor* extractor) {
  check_contract(!dataset.empty(), "cannot evaluate an empty dataset");
  const bool needs_w = model.cfg.needs_domain_embedding();
  check_contract(!needs_w || extractor != nullptr,
                 "model requires a domain extractor for evaluation");

  const int n = static_cast<int>(dataset.size());
  std::vector<ConfusionMatrix> shards(static_cast<size_t>(n),
                                      ConfusionMatrix(model.cfg.num_classes));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) {
    const auto& scene = dataset[static_cast<size_t>(i)];
    EmbeddingVector w;
    if (needs_w) w = extractor->extract(scene.image);
    const Tensor logits = forward(model, scene.image, needs_w ? &w : nullptr);
    const auto pred = argmax_labels(logits);
    update_confusion(shards[static_cast<size_t>(i)], pred, scene.labels);
  }

  ConfusionMatrix cm(model.cfg.num_classes);
  for (const auto& shard : shards) cm = merge_confusion(cm, shard);

  MetricsReport report;
  report.per_class_iou = per_class_iou(cm);
  report.miou = mean_iou(cm);
  return report;
}

MetricsReport evaluate_dataset(const SegmentationModel& model,
                               const std::vector<LabeledScene>& dataset,
                               const std::vector<DomainDescription>& catalog,
                               const EncoderPair& enc, double temperature) {
  DomainExtractor extractor(catalog, enc, temperature);
  return evaluate_dataset(model, dataset, &extractor);
}

}  // namespace domino
