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

#include "domino/domino_layer.hpp"

#include <cmath>

#include "domino/common.hpp"
#include "domino/rng.hpp"

namespace domino {

DominoLayer make_domino_layer(int channels, int d_emb, int hidden,
                              uint64_t seed) {
  check_config(channels >= 1 && d_emb >= 1 && hidden >= 1,
               "domino layer dimensions must be positive");
  DominoLayer layer;
  layer.channels = channels;
  layer.d_emb = d_emb;
  layer.hidden = hidden;
  Rng rng(derive_seed(seed, 23, 0));
  layer.fc1 = make_linear(d_emb, hidden, true, std::sqrt(1.0 / d_emb), rng);
  layer.fc2 = make_linear(hidden, 2 * channels, true, 0.0, rng);
  for (int c = 0; c < channels; ++c) layer.fc2.bias[c] = 1.0;
  return layer;
}

std::pair<Tensor, FeatureStats> standardize(const Tensor& f, double epsilon) {
  check_contract(f.rank() == 3, "feature map must be [C,H,W]");
  check_contract(epsilon > 0.0, "epsilon must be positive");
  const int c = f.dim(0);
  const int hw = f.dim(1) * f.dim(2);

  FeatureStats stats;
  stats.mean.resize(static_cast<size_t>(c));
  stats.std.resize(static_cast<size_t>(c));
  Tensor out(f.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double* fp = f.data() + static_cast<int64_t>(ch) * hw;
    double mean = 0.0;
    for (int i = 0; i < hw; ++i) mean += fp[i];
    mean /= hw;
    double var = 0.0;
    for (int i = 0; i < hw; ++i) var += (fp[i] - mean) * (fp[i] - mean);
    var /= hw;
    const double sd = std::sqrt(var);
    stats.mean[static_cast<size_t>(ch)] = mean;
    stats.std[static_cast<size_t>(ch)] = sd;
    const double inv = 1.0 / (sd + epsilon);
    double* op = out.data() + static_cast<int64_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) op[i] = (fp[i] - mean) * inv;
  }
  return {std::move(out), std::move(stats)};
}

namespace {

// MLP forward shared by the plain and tracing paths.
ModulationParams run_mlp(const DominoLayer& layer, const EmbeddingVector& w,
                         Tensor* hidden_out) {
  check_config(static_cast<int>(w.size()) == layer.d_emb,
               "domain embedding dimension mismatch: expected " +
                   std::to_string(layer.d_emb) + ", got " +
                   std::to_string(w.size()));
  Tensor win({1, layer.d_emb});
  for (int i = 0; i < layer.d_emb; ++i) win[i] = w[static_cast<size_t>(i)];
  Tensor h;
  linear_forward_rows(layer.fc1, win, h);
  for (int64_t i = 0; i < h.numel(); ++i) h[i] = std::tanh(h[i]);
  Tensor o;
  linear_forward_rows(layer.fc2, h, o);
  if (hidden_out != nullptr) *hidden_out = h;

  ModulationParams mod;
  mod.scale.assign(o.data(), o.data() + layer.channels);
  mod.shift.assign(o.data() + layer.channels, o.data() + 2 * layer.channels);
  return mod;
}

}  // namespace

ModulationParams modulation_params(const DominoLayer& layer,
                                   const EmbeddingVector& w) {
  return run_mlp(layer, w, nullptr);
}

Tensor apply_domino(const DominoLayer& layer, const Tensor& f,
                    const EmbeddingVector& w, double epsilon) {
  DominoTrace trace;
  return domino_forward(layer, f, w, trace, epsilon);
}

Tensor domino_forward(const DominoLayer& layer, const Tensor& f,
                      const EmbeddingVector& w, DominoTrace& trace,
                      double epsilon) {
  check_contract(f.dim(0) == layer.channels,
                 "feature channel count mismatch with domino layer");
  trace.f = f;
  trace.w = w;
  auto [f_hat, stats] = standardize(f, epsilon);
  trace.stats = std::move(stats);
  trace.mod = run_mlp(layer, w, &trace.hidden_act);
  trace.f_hat = f_hat;

  const int c = f.dim(0);
  const int hw = f.dim(1) * f.dim(2);
  Tensor out(f.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double a = trace.mod.scale[static_cast<size_t>(ch)];
    const double b = trace.mod.shift[static_cast<size_t>(ch)];
    const double* hp = f_hat.data() + static_cast<int64_t>(ch) * hw;
    double* op = out.data() + static_cast<int64_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) op[i] = hp[i] * a + b;
  }
  return out;
}

void domino_backward(const DominoLayer& layer, const DominoTrace& trace,
                     const Tensor& g_out, Tensor& g_f, Tensor& g_fc1_w,
                     Tensor& g_fc1_b, Tensor& g_fc2_w, Tensor& g_fc2_b,
                     double epsilon) {
  const int c = trace.f.dim(0);
  const int hw = trace.f.dim(1) * trace.f.dim(2);
  if (!g_f.same_shape(trace.f)) g_f = Tensor(trace.f.shape());

  // Grad of the MLP output: d/dscale = sum g*f_hat, d/dshift = sum g.
  Tensor g_mlp_out({1, 2 * c});
  for (int ch = 0; ch < c; ++ch) {
    const double* gp = g_out.data() + static_cast<int64_t>(ch) * hw;
    const double* hp = trace.f_hat.data() + static_cast<int64_t>(ch) * hw;
    double gs = 0.0;
    double gb = 0.0;
    for (int i = 0; i < hw; ++i) {
      gs += gp[i] * hp[i];
      gb += gp[i];
    }
    g_mlp_out[ch] = gs;
    g_mlp_out[c + ch] = gb;

    // Feature grad through the standardization. With d = std + eps:
    // dL/df = (a/d) * (g - mean(g) - f_hat * (d/std) * mean(g*f_hat))
    const double a = trace.mod.scale[static_cast<size_t>(ch)];
    const double sd = trace.stats.std[static_cast<size_t>(ch)];
    const double d = sd + epsilon;
    const double mean_g = gb / hw;
    // For a constant channel std is 0 and f_hat is all zeros; the
    // projection term vanishes and only the mean-removal part remains.
    const double proj = sd > 0.0 ? (gs / hw) * (d / sd) : 0.0;
    double* gfp = g_f.data() + static_cast<int64_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) {
      gfp[i] = (a / d) * (gp[i] - mean_g - hp[i] * proj);
    }
  }

  // Back through fc2 -> tanh -> fc1.
  Tensor g_hidden;
  linear_backward_rows(layer.fc2, trace.hidden_act, g_mlp_out, &g_hidden,
                       &g_fc2_w, &g_fc2_b);
  for (int64_t i = 0; i < g_hidden.numel(); ++i) {
    const double t = trace.hidden_act[i];
    g_hidden[i] *= (1.0 - t * t);
  }
  Tensor win({1, layer.d_emb});
  for (int i = 0; i < layer.d_emb; ++i) {
    win[i] = trace.w[static_cast<size_t>(i)];
  }
  linear_backward_rows(layer.fc1, win, g_hidden, nullptr, &g_fc1_w, &g_fc1_b);
}

void standardize_backward(const Tensor& f_hat, const FeatureStats& stats,
                          const Tensor& g_fhat, Tensor& g_f, double epsilon) {
  const int c = f_hat.dim(0);
  const int hw = f_hat.dim(1) * f_hat.dim(2);
  if (!g_f.same_shape(f_hat)) g_f = Tensor(f_hat.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double* gp = g_fhat.data() + static_cast<int64_t>(ch) * hw;
    const double* hp = f_hat.data() + static_cast<int64_t>(ch) * hw;
    double sum_g = 0.0;
    double sum_gh = 0.0;
    for (int i = 0; i < hw; ++i) {
      sum_g += gp[i];
      sum_gh += gp[i] * hp[i];
    }
    const double sd = stats.std[static_cast<size_t>(ch)];
    const double d = sd + epsilon;
    const double mean_g = sum_g / hw;
    const double proj = sd > 0.0 ? (sum_gh / hw) * (d / sd) : 0.0;
    double* gfp = g_f.data() + static_cast<int64_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) {
      gfp[i] = (gp[i] - mean_g - hp[i] * proj) / d;
    }
  }
}

void modulation_backward(const DominoLayer& layer, const DominoTrace& trace,
                         const Tensor& g_out, Tensor& g_fhat, Tensor& g_fc1_w,
                         Tensor& g_fc1_b, Tensor& g_fc2_w, Tensor& g_fc2_b) {
  const int c = trace.f_hat.dim(0);
  const int hw = trace.f_hat.dim(1) * trace.f_hat.dim(2);
  if (!g_fhat.same_shape(trace.f_hat)) g_fhat = Tensor(trace.f_hat.shape());

  Tensor g_mlp_out({1, 2 * c});
  for (int ch = 0; ch < c; ++ch) {
    const double* gp = g_out.data() + static_cast<int64_t>(ch) * hw;
    const double* hp = trace.f_hat.data() + static_cast<int64_t>(ch) * hw;
    const double a = trace.mod.scale[static_cast<size_t>(ch)];
    double gs = 0.0;
    double gb = 0.0;
    double* gfp = g_fhat.data() + static_cast<int64_t>(ch) * hw;
    for (int i = 0; i < hw; ++i) {
      gs += gp[i] * hp[i];
      gb += gp[i];
      gfp[i] = a * gp[i];
    }
    g_mlp_out[ch] = gs;
    g_mlp_out[c + ch] = gb;
  }

  Tensor g_hidden;
  linear_backward_rows(layer.fc2, trace.hidden_act, g_mlp_out, &g_hidden,
                       &g_fc2_w, &g_fc2_b);
  for (int64_t i = 0; i < g_hidden.numel(); ++i) {
    const double t = trace.hidden_act[i];
    g_hidden[i] *= (1.0 - t * t);
  }
  Tensor win({1, layer.d_emb});
  for (int i = 0; i < layer.d_emb; ++i) {
    win[i] = trace.w[static_cast<size_t>(i)];
  }
  linear_backward_rows(layer.fc1, win, g_hidden, nullptr, &g_fc1_w, &g_fc1_b);
}

std::string to_string(CombineMode m) {
  switch (m) {
    case CombineMode::kNone: return "none";
    case CombineMode::kAdd: return "add";
    default: return "sub";
  }
}

CombineMode combine_mode_from_string(const std::string& s) {
  if (s == "none") return CombineMode::kNone;
  if (s == "add") return CombineMode::kAdd;
  if (s == "sub") return CombineMode::kSub;
  throw ConfigError("unknown combination mode: '" + s +
                    "' (expected none, add, or sub)");
}

std::vector<EmbeddingVector> combine_prompt(
    const std::vector<EmbeddingVector>& prompt_embeddings,
    const EmbeddingVector& w, CombineMode mode, const Linear* projector) {
  check_config(mode == CombineMode::kAdd || mode == CombineMode::kSub,
               "combine_prompt mode must be add or sub");

  EmbeddingVector projected;
  if (projector != nullptr) {
    check_contract(projector->in_dim == static_cast<int>(w.size()),
                   "projector input dimension mismatch");
    Tensor win({1, projector->in_dim});
    for (int i = 0; i < projector->in_dim; ++i) win[i] = w[static_cast<size_t>(i)];
    Tensor out;
    linear_forward_rows(*projector, win, out);
    projected.assign(out.data(), out.data() + projector->out_dim);
  } else {
    projected = w;
  }

  const double sign = mode == CombineMode::kAdd ? 1.0 : -1.0;
  std::vector<EmbeddingVector> out;
  out.reserve(prompt_embeddings.size());
  for (const auto& e : prompt_embeddings) {
    check_contract(e.size() == projected.size(),
                   "prompt embedding dimension mismatch with projected W");
    EmbeddingVector v(e.size());
    for (size_t i = 0; i < e.size(); ++i) v[i] = e[i] + sign * projected[i];
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace domino
