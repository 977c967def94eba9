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

#include <array>
#include <string>
#include <vector>

#include "domino/domain_embedding.hpp"
#include "domino/domino_layer.hpp"
#include "domino/nn.hpp"
#include "domino/tensor.hpp"

namespace domino {

constexpr int kNumStages = 3;

enum class NormScope { kInstance, kBatch };
std::string to_string(NormScope s);
NormScope norm_scope_from_string(const std::string& s);

struct ModelConfig {
  int num_classes = 4;
  int d_emb = 32;
  int d_prompt = 32;
  int attn_dim = 64;
  std::array<int, kNumStages> encoder_channels = {16, 32, 64};
  std::array<int, kNumStages> decoder_channels = {32, 16, 8};
  int domino_hidden = 64;
  CombineMode combine_mode = CombineMode::kNone;
  std::array<bool, kNumStages> domino_stages = {false, false, false};
  bool freeze_encoder = false;
  NormScope norm_scope = NormScope::kInstance;

  bool needs_domain_embedding() const;
  void validate() const;
};

// Flat indices into the parameter list; -1 when absent for this config.
struct ParamIndex {
  std::array<int, kNumStages> enc_w{}, enc_b{};
  int prompt_table = -1;
  int adapter_w = -1, adapter_b = -1;
  int attn_q = -1, attn_k = -1, attn_v = -1;
  int projector_w = -1, projector_b = -1;
  std::array<int, kNumStages> dec_w{}, dec_b{};
  std::array<int, kNumStages> dom_fc1_w{}, dom_fc1_b{}, dom_fc2_w{}, dom_fc2_b{};
  int cls_w = -1, cls_b = -1;
};

// Desk-scale VPD analog: strided conv encoder, single-head cross-attention
// between bottleneck tokens and class prompts, upsampling decoder with
// optional Domino stages, 1x1 classifier.
struct SegmentationModel {
  ModelConfig cfg;
  std::array<Conv2d, kNumStages> enc;
  Tensor prompt_table;  // [num_classes, d_prompt]
  Linear text_adapter;  // d_prompt -> d_prompt
  Linear attn_q;        // bottleneck channels -> attn_dim, no bias
  Linear attn_k;        // d_prompt -> attn_dim, no bias
  Linear attn_v;        // d_prompt -> bottleneck channels, no bias
  bool has_projector = false;
  Linear domain_projector;  // d_emb -> d_prompt, used when dims differ
  std::array<Conv2d, kNumStages> dec;
  std::array<DominoLayer, kNumStages> dom;
  Conv2d classifier;
  ParamIndex idx;
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool encoder;
};
struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
  bool encoder;
};

std::vector<ParamRef> model_parameters(SegmentationModel& model);
std::vector<ConstParamRef> model_parameters(const SegmentationModel& model);
std::vector<Tensor> make_grad_buffer(const SegmentationModel& model);
int64_t parameter_count(const SegmentationModel& model);

SegmentationModel build_model(const ModelConfig& config, uint64_t seed);

struct ClassPrompt {
  int class_id = 0;
  EmbeddingVector embedding;
};

struct CrossAttentionResult {
  Tensor features;  // [c_b + K, h, w]; maps concatenated in class_id order
  Tensor maps;      // [K, h, w] in the order the prompts were given
};

CrossAttentionResult cross_attention(const SegmentationModel& model,
                                     const Tensor& features,
                                     const std::vector<ClassPrompt>& prompts);

struct ForwardTrace {
  Tensor input;
  std::array<Tensor, kNumStages> enc_act;
  Tensor prompts_adapted;  // [K, d_prompt]
  Tensor prompts_final;    // [K, d_prompt]
  Tensor w_row;            // [1, d_emb] when W used
  Tensor tokens;           // [T, c_b]
  Tensor q, k, v, attn;    // [T,a],[K,a],[K,c_b],[T,K]
  Tensor dec_in;           // [c_b + K, h, w]
  std::array<Tensor, kNumStages> dec_up;
  std::array<Tensor, kNumStages> dec_conv;
  std::array<DominoTrace, kNumStages> dom;
  std::array<Tensor, kNumStages> dec_act;
  Tensor logits;
  bool used_w = false;
};

// w may be null for models that do not require a domain embedding.
Tensor forward(const SegmentationModel& model, const Tensor& image,
               const EmbeddingVector* w);
Tensor forward_trace(const SegmentationModel& model, const Tensor& image,
                     const EmbeddingVector* w, ForwardTrace& trace);

// Accumulates into grads (layout of make_grad_buffer). Encoder gradients
// can be skipped for frozen-encoder training.
void backward(const SegmentationModel& model, const ForwardTrace& trace,
              const Tensor& g_logits, std::vector<Tensor>& grads,
              bool encoder_grads = true);

// Batch-scope path (norm_scope = batch): Domino statistics are pooled over
// the height-stacked batch tensor; modulation stays per sample. Sequential;
// used by training steps only. All images must share one size.
struct BatchStageState {
  bool used = false;
  Tensor f_hat_stacked;  // [C, B*h, w]
  FeatureStats stats;    // pooled over the batch
  std::vector<DominoTrace> per_sample;
};

struct BatchScopeRun {
  std::vector<ForwardTrace> traces;
  std::array<BatchStageState, kNumStages> stages;
  std::vector<Tensor> logits;
};

BatchScopeRun forward_batch_scope(
    const SegmentationModel& model, const std::vector<const Tensor*>& images,
    const std::vector<const EmbeddingVector*>& ws);
void backward_batch_scope(const SegmentationModel& model, BatchScopeRun& run,
                          const std::vector<Tensor>& g_logits,
                          std::vector<Tensor>& grads,
                          bool encoder_grads = true);

}  // namespace domino
