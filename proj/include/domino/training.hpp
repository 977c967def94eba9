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

#include "domino/config.hpp"
#include "domino/data.hpp"
#include "domino/domain_embedding.hpp"
#include "domino/evaluation.hpp"
#include "domino/model.hpp"

namespace domino {

// Inverse-frequency class weights, clamped to [0.1, 10], then normalized
// to mean 1.
struct ClassWeightVector {
  std::vector<double> weights;
};

ClassWeightVector class_weights(const std::vector<LabeledScene>& train_set,
                                int num_classes);

// Mean over pixels of w[label] * (-log softmax(logits)[label]).
double weighted_cross_entropy(const Tensor& logits,
                              const std::vector<uint8_t>& labels,
                              const ClassWeightVector& w);
// Also fills d(loss)/d(logits).
double weighted_cross_entropy_with_grad(const Tensor& logits,
                                        const std::vector<uint8_t>& labels,
                                        const ClassWeightVector& w,
                                        Tensor& g_logits);

// base_lr * (1 - t/total_iters)^poly_power for 0 <= t <= total_iters.
double poly_lr(const TrainSchedule& schedule, int t);

// Adaptive-moment optimizer with decoupled weight decay (decay applied
// directly to parameters, never through the gradient).
struct AdamWState {
  std::vector<Tensor> m, v;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamWState make_adamw_state(const SegmentationModel& model);
void adamw_update(SegmentationModel& model, const std::vector<Tensor>& grads,
                  AdamWState& state, double lr, double weight_decay);

// One forward/backward/update over a batch. W per sample comes from the
// extractor (or ws_override, used by the loop to reuse cached embeddings).
double train_step(SegmentationModel& model,
                  const std::vector<const LabeledScene*>& batch,
                  const TrainSchedule& schedule, int t,
                  const ClassWeightVector& weights, AdamWState& state,
                  const DomainExtractor* extractor,
                  const std::vector<const EmbeddingVector*>* ws_override = nullptr);

struct TrainLoopResult {
  std::string checkpoint_path;
  std::string metrics_path;
  MetricsReport final_report;  // cross-domain (val_source vs val_target)
  double final_loss = 0.0;
};

// Full protocol: data pools, class weights, poly-decayed AdamW steps,
// periodic metric records, final checkpoint. Deterministic per config.
TrainLoopResult train_loop(const ExperimentConfig& config,
                           const std::string& out_dir);

}  // namespace domino
