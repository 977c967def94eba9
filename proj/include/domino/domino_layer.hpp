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
#include <utility>
#include <vector>

#include "domino/domain_embedding.hpp"
#include "domino/nn.hpp"
#include "domino/tensor.hpp"

namespace domino {

constexpr double kDominoEpsilon = 1e-5;

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct ModulationParams {
  std::vector<double> scale;
  std::vector<double> shift;
};

// Two-layer MLP mapping a domain embedding to per-channel (scale, shift).
// The output layer starts at zero weights with bias (1...1 | 0...0), so a
// fresh layer reduces to plain standardization.
struct DominoLayer {
  int channels = 0;
  int d_emb = 0;
  int hidden = 0;
  Linear fc1;  // d_emb -> hidden, tanh
  Linear fc2;  // hidden -> 2*channels, split into (scale, shift)
};

DominoLayer make_domino_layer(int channels, int d_emb, int hidden,
                              uint64_t seed);

// Per-channel standardization over spatial positions:
// (f - mean) / (std + epsilon). Constant channels map to all zeros.
std::pair<Tensor, FeatureStats> standardize(const Tensor& f,
                                            double epsilon = kDominoEpsilon);

ModulationParams modulation_params(const DominoLayer& layer,
                                   const EmbeddingVector& w);

// f_adp = standardize(f) * scale(W) + shift(W), broadcast per channel.
Tensor apply_domino(const DominoLayer& layer, const Tensor& f,
                    const EmbeddingVector& w, double epsilon = kDominoEpsilon);

// Training-path forward that saves what backward needs.
struct DominoTrace {
  Tensor f;
  FeatureStats stats;
  Tensor f_hat;
  Tensor hidden_act;  // [1, hidden], post-tanh
  ModulationParams mod;
  EmbeddingVector w;
};

Tensor domino_forward(const DominoLayer& layer, const Tensor& f,
                      const EmbeddingVector& w, DominoTrace& trace,
                      double epsilon = kDominoEpsilon);

// Accumulates MLP parameter grads; g_f receives the feature gradient.
void domino_backward(const DominoLayer& layer, const DominoTrace& trace,
                     const Tensor& g_out, Tensor& g_f, Tensor& g_fc1_w,
                     Tensor& g_fc1_b, Tensor& g_fc2_w, Tensor& g_fc2_b,
                     double epsilon = kDominoEpsilon);

// Split pieces used by the batch-scope path, where statistics are pooled
// over a stacked batch but modulation stays per sample.
void standardize_backward(const Tensor& f_hat, const FeatureStats& stats,
                          const Tensor& g_fhat, Tensor& g_f,
                          double epsilon = kDominoEpsilon);
// trace needs f_hat, hidden_act, mod, w; g_fhat receives scale * g_out.
void modulation_backward(const DominoLayer& layer, const DominoTrace& trace,
                         const Tensor& g_out, Tensor& g_fhat, Tensor& g_fc1_w,
                         Tensor& g_fc1_b, Tensor& g_fc2_w, Tensor& g_fc2_b);

enum class CombineMode { kNone, kAdd, kSub };

std::string to_string(CombineMode m);
CombineMode combine_mode_from_string(const std::string& s);

// e_i' = e_i +/- projector(W). Null projector means identity (requires
// matching dimensions).
std::vector<EmbeddingVector> combine_prompt(
    const std::vector<EmbeddingVector>& prompt_embeddings,
    const EmbeddingVector& w, CombineMode mode,
    const Linear* projector = nullptr);

}  // namespace domino
