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

#include "domino/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "domino/common.hpp"

namespace domino {

std::string to_string(NormScope s) {
  return s == NormScope::kInstance ? "instance" : "batch";
}

NormScope norm_scope_from_string(const std::string& s) {
  if (s == "instance") return NormScope::kInstance;
  if (s == "batch") return NormScope::kBatch;
  throw ConfigError("unknown norm_scope: '" + s +
                    "' (expected instance or batch)");
}

bool ModelConfig::needs_domain_embedding() const {
  if (combine_mode != CombineMode::kNone) return true;
  for (bool d : domino_stages) {
    if (d) return true;
  }
  return false;
}

void ModelConfig::validate() const {
  check_config(num_classes >= 2, "num_classes must be >= 2");
  check_config(d_emb >= 1 && d_prompt >= 1 && attn_dim >= 1 &&
                   domino_hidden >= 1,
               "model dimensions must be positive");
  for (int c : encoder_channels) {
    check_config(c >= 1, "encoder channel widths must be positive");
  }
  for (int c : decoder_channels) {
    check_config(c >= 1, "decoder channel widths must be positive");
  }
}

namespace {

void list_params_impl(const SegmentationModel& m,
                      std::vector<ConstParamRef>& out) {
  for (int i = 0; i < kNumStages; ++i) {
    const std::string p = "enc" + std::to_string(i);
    out.push_back({p + ".weight", &m.enc[static_cast<size_t>(i)].weight, true});
    out.push_back({p + ".bias", &m.enc[static_cast<size_t>(i)].bias, true});
  }
  out.push_back({"prompt_table", &m.prompt_table, false});
  out.push_back({"text_adapter.weight", &m.text_adapter.weight, false});
  out.push_back({"text_adapter.bias", &m.text_adapter.bias, false});
  out.push_back({"attn_q.weight", &m.attn_q.weight, false});
  out.push_back({"attn_k.weight", &m.attn_k.weight, false});
  out.push_back({"attn_v.weight", &m.attn_v.weight, false});
  if (m.has_projector) {
    out.push_back({"domain_projector.weight", &m.domain_projector.weight, false});
    out.push_back({"domain_projector.bias", &m.domain_projector.bias, false});
  }
  for (int i = 0; i < kNumStages; ++i) {
    const std::string p = "dec" + std::to_string(i);
    out.push_back({p + ".weight", &m.dec[static_cast<size_t>(i)].weight, false});
    out.push_back({p + ".bias", &m.dec[static_cast<size_t>(i)].bias, false});
    if (m.cfg.domino_stages[static_cast<size_t>(i)]) {
      const std::string d = "domino" + std::to_string(i);
      out.push_back({d + ".fc1.weight", &m.dom[static_cast<size_t>(i)].fc1.weight, false});
      out.push_back({d + ".fc1.bias", &m.dom[static_cast<size_t>(i)].fc1.bias, false});
      out.push_back({d + ".fc2.weight", &m.dom[static_cast<size_t>(i)].fc2.weight, false});
      out.push_back({d + ".fc2.bias", &m.dom[static_cast<size_t>(i)].fc2.bias, false});
    }
  }
  out.push_back({"classifier.weight", &m.classifier.weight, false});
  out.push_back({"classifier.bias", &m.classifier.bias, false});
}

ParamIndex build_param_index(const SegmentationModel& m) {
  std::vector<ConstParamRef> refs;
  list_params_impl(m, refs);
  ParamIndex idx;
  idx.enc_w.fill(-1);
  idx.enc_b.fill(-1);
  idx.dec_w.fill(-1);
  idx.dec_b.fill(-1);
  idx.dom_fc1_w.fill(-1);
  idx.dom_fc1_b.fill(-1);
  idx.dom_fc2_w.fill(-1);
  idx.dom_fc2_b.fill(-1);
  for (int i = 0; i < static_cast<int>(refs.size()); ++i) {
    const std::string& n = refs[static_cast<size_t>(i)].name;
    for (int s = 0; s < kNumStages; ++s) {
      const std::string es = "enc" + std::to_string(s);
      const std::string ds = "dec" + std::to_string(s);
      const std::string ms = "domino" + std::to_string(s);
      if (n == es + ".weight") idx.enc_w[static_cast<size_t>(s)] = i;
      if (n == es + ".bias") idx.enc_b[static_cast<size_t>(s)] = i;
      if (n == ds + ".weight") idx.dec_w[static_cast<size_t>(s)] = i;
      if (n == ds + ".bias") idx.dec_b[static_cast<size_t>(s)] = i;
      if (n == ms + ".fc1.weight") idx.dom_fc1_w[static_cast<size_t>(s)] = i;
      if (n == ms + ".fc1.bias") idx.dom_fc1_b[static_cast<size_t>(s)] = i;
      if (n == ms + ".fc2.weight") idx.dom_fc2_w[static_cast<size_t>(s)] = i;
      if (n == ms + ".fc2.bias") idx.dom_fc2_b[static_cast<size_t>(s)] = i;
    }
    if (n == "prompt_table") idx.prompt_table = i;
    if (n == "text_adapter.weight") idx.adapter_w = i;
    if (n == "text_adapter.bias") idx.adapter_b = i;
    if (n == "attn_q.weight") idx.attn_q = i;
    if (n == "attn_k.weight") idx.attn_k = i;
    if (n == "attn_v.weight") idx.attn_v = i;
    if (n == "domain_projector.weight") idx.projector_w = i;
    if (n == "domain_projector.bias") idx.projector_b = i;
    if (n == "classifier.weight") idx.cls_w = i;
    if (n == "classifier.bias") idx.cls_b = i;
  }
  return idx;
}

void softmax_rows(Tensor& x) {
  const int rows = x.dim(0);
  const int cols = x.dim(1);
  for (int r = 0; r < rows; ++r) {
    double* p = x.data() + static_cast<int64_t>(r) * cols;
    double m = p[0];
    for (int c = 1; c < cols; ++c) m = std::max(m, p[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      p[c] = std::exp(p[c] - m);
      z += p[c];
    }
    for (int c = 0; c < cols; ++c) p[c] /= z;
  }
}

// g_scores = attn .* (g_attn - rowdot(g_attn, attn))
void softmax_rows_backward(const Tensor& attn, const Tensor& g_attn,
                           Tensor& g_scores) {
  const int rows = attn.dim(0);
  const int cols = attn.dim(1);
  if (!g_scores.same_shape(attn)) g_scores = Tensor(attn.shape());
  for (int r = 0; r < rows; ++r) {
    const double* a = attn.data() + static_cast<int64_t>(r) * cols;
    const double* g = g_attn.data() + static_cast<int64_t>(r) * cols;
    double dot = 0.0;
    for (int c = 0; c < cols; ++c) dot += a[c] * g[c];
    double* o = g_scores.data() + static_cast<int64_t>(r) * cols;
    for (int c = 0; c < cols; ++c) o[c] = a[c] * (g[c] - dot);
  }
}

// [C,h,w] -> [h*w, C]
Tensor to_tokens(const Tensor& fmap) {
  const int c = fmap.dim(0);
  const int hw = fmap.dim(1) * fmap.dim(2);
  Tensor tokens({hw, c});
  for (int ch = 0; ch < c; ++ch) {
    const double* fp = fmap.data() + static_cast<int64_t>(ch) * hw;
    for (int t = 0; t < hw; ++t) tokens[static_cast<int64_t>(t) * c + ch] = fp[t];
  }
  return tokens;
}

void add_tokens_to_map(const Tensor& tokens, Tensor& fmap) {
  const int c = fmap.dim(0);
  const int hw = fmap.dim(1) * fmap.dim(2);
  for (int ch = 0; ch < c; ++ch) {
    double* fp = fmap.data() + static_cast<int64_t>(ch) * hw;
    for (int t = 0; t < hw; ++t) fp[t] += tokens[static_cast<int64_t>(t) * c + ch];
  }
}

// Attention over class prompts shared by the public op and forward_trace.
// prompt_rows: [K, d_prompt] in class order. Fills trace fields.
void attention_block(const SegmentationModel& model, const Tensor& bottleneck,
                     const Tensor& prompt_rows, ForwardTrace& tr) {
  const int c_b = bottleneck.dim(0);
  const int h = bottleneck.dim(1);
  const int w = bottleneck.dim(2);
  const int hw = h * w;
  const int k_cls = prompt_rows.dim(0);

  tr.tokens = to_tokens(bottleneck);
  linear_forward_rows(model.attn_q, tr.tokens, tr.q);
  linear_forward_rows(model.attn_k, prompt_rows, tr.k);
  linear_forward_rows(model.attn_v, prompt_rows, tr.v);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(model.cfg.attn_dim));
  tr.attn = Tensor({hw, k_cls});
  gemm_abt(hw, k_cls, model.cfg.attn_dim, tr.q.data(), tr.k.data(),
           tr.attn.data(), false, inv_sqrt);
  softmax_rows(tr.attn);

  // residual attended values + attention maps as extra channels
  Tensor attended({hw, c_b});
  gemm(hw, c_b, k_cls, tr.attn.data(), tr.v.data(), attended.data(), false);

  tr.dec_in = Tensor({c_b + k_cls, h, w});
  for (int ch = 0; ch < c_b; ++ch) {
    double* dp = tr.dec_in.data() + static_cast<int64_t>(ch) * hw;
    const double* bp = bottleneck.data() + static_cast<int64_t>(ch) * hw;
    for (int t = 0; t < hw; ++t) {
      dp[t] = bp[t] + attended[static_cast<int64_t>(t) * c_b + ch];
    }
  }
  for (int cls = 0; cls < k_cls; ++cls) {
    double* dp = tr.dec_in.data() + static_cast<int64_t>(c_b + cls) * hw;
    for (int t = 0; t < hw; ++t) {
      dp[t] = tr.attn[static_cast<int64_t>(t) * k_cls + cls];
    }
  }
}

Tensor prompt_rows_for(const SegmentationModel& model,
                       const EmbeddingVector* w, ForwardTrace& tr) {
  linear_forward_rows(model.text_adapter, model.prompt_table,
                      tr.prompts_adapted);
  if (model.cfg.combine_mode == CombineMode::kNone) {
    tr.prompts_final = tr.prompts_adapted;
    return tr.prompts_final;
  }

  EmbeddingVector projected;
  if (model.has_projector) {
    tr.w_row = Tensor({1, model.cfg.d_emb});
    for (int i = 0; i < model.cfg.d_emb; ++i) {
      tr.w_row[i] = (*w)[static_cast<size_t>(i)];
    }
    Tensor out;
    linear_forward_rows(model.domain_projector, tr.w_row, out);
    projected.assign(out.data(), out.data() + model.cfg.d_prompt);
  } else {
    projected = *w;
  }

  const double sign = model.cfg.combine_mode == CombineMode::kAdd ? 1.0 : -1.0;
  tr.prompts_final = tr.prompts_adapted;
  const int k_cls = model.cfg.num_classes;
  for (int r = 0; r < k_cls; ++r) {
    for (int c = 0; c < model.cfg.d_prompt; ++c) {
      tr.prompts_final.at(r, c) += sign * projected[static_cast<size_t>(c)];
    }
  }
  return tr.prompts_final;
}

void check_image(const Tensor& image) {
  check_contract(image.rank() == 3 && image.dim(0) == 3,
                 "model input must be [3,H,W]");
  check_contract(image.dim(1) % 8 == 0 && image.dim(2) % 8 == 0 &&
                     image.dim(1) >= 8 && image.dim(2) >= 8,
                 "input height and width must be multiples of 8");
}

// Encoder + prompts + attention; returns the decoder input.
void run_front(const SegmentationModel& model, const Tensor& image,
               const EmbeddingVector* w, ForwardTrace& tr) {
  check_image(image);
  if (model.cfg.needs_domain_embedding()) {
    check_contract(w != nullptr,
                   "model requires a domain embedding W but none was given");
    check_contract(static_cast<int>(w->size()) == model.cfg.d_emb,
                   "domain embedding dimension mismatch");
    tr.used_w = true;
  }

  tr.input = image;
  const Tensor* x = &tr.input;
  for (int i = 0; i < kNumStages; ++i) {
    conv_forward(model.enc[static_cast<size_t>(i)], *x,
                 tr.enc_act[static_cast<size_t>(i)]);
    relu_inplace(tr.enc_act[static_cast<size_t>(i)]);
    x = &tr.enc_act[static_cast<size_t>(i)];
  }

  const Tensor prompt_rows = prompt_rows_for(model, w, tr);
  attention_block(model, tr.enc_act[kNumStages - 1], prompt_rows, tr);
}

// One decoder stage up to the (pre-Domino) conv output.
void run_stage_conv(const SegmentationModel& model, int i, const Tensor& x,
                    ForwardTrace& tr) {
  tr.dec_up[static_cast<size_t>(i)] = upsample_nearest2(x);
  conv_forward(model.dec[static_cast<size_t>(i)],
               tr.dec_up[static_cast<size_t>(i)],
               tr.dec_conv[static_cast<size_t>(i)]);
}

void run_classifier(const SegmentationModel& model, ForwardTrace& tr) {
  conv_forward(model.classifier, tr.dec_act[kNumStages - 1], tr.logits);
  check_contract(tr.logits.all_finite(), "non-finite logits");
}

}  // namespace

std::vector<ConstParamRef> model_parameters(const SegmentationModel& model) {
  std::vector<ConstParamRef> refs;
  list_params_impl(model, refs);
  return refs;
}

std::vector<ParamRef> model_parameters(SegmentationModel& model) {
  std::vector<ConstParamRef> crefs;
  list_params_impl(model, crefs);
  std::vector<ParamRef> refs;
  refs.reserve(crefs.size());
  for (auto& r : crefs) {
    refs.push_back({r.name, const_cast<Tensor*>(r.tensor), r.encoder});
  }
  return refs;
}

std::vector<Tensor> make_grad_buffer(const SegmentationModel& model) {
  std::vector<Tensor> grads;
  for (const auto& r : model_parameters(model)) {
    grads.emplace_back(r.tensor->shape());
  }
  return grads;
}

int64_t parameter_count(const SegmentationModel& model) {
  int64_t n = 0;
  for (const auto& r : model_parameters(model)) n += r.tensor->numel();
  return n;
}

SegmentationModel build_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  SegmentationModel m;
  m.cfg = config;

  Rng rng(derive_seed(seed, 31, 0));
  int in_ch = 3;
  for (int i = 0; i < kNumStages; ++i) {
    m.enc[static_cast<size_t>(i)] =
        make_conv(in_ch, config.encoder_channels[static_cast<size_t>(i)], 3, 2, 1, rng);
    in_ch = config.encoder_channels[static_cast<size_t>(i)];
  }
  const int c_b = config.encoder_channels[kNumStages - 1];

  m.prompt_table = Tensor({config.num_classes, config.d_prompt});
  for (int64_t i = 0; i < m.prompt_table.numel(); ++i) {
    m.prompt_table[i] = 0.5 * rng.normal();
  }
  m.text_adapter = make_identity_linear(config.d_prompt);

  m.attn_q = make_linear(c_b, config.attn_dim, false,
                         std::sqrt(1.0 / c_b), rng);
  m.attn_k = make_linear(config.d_prompt, config.attn_dim, false,
                         std::sqrt(1.0 / config.d_prompt), rng);
  m.attn_v = make_linear(config.d_prompt, c_b, false,
                         std::sqrt(1.0 / config.d_prompt), rng);

  m.has_projector = config.d_emb != config.d_prompt;
  if (m.has_projector) {
    m.domain_projector = make_linear(config.d_emb, config.d_prompt, true,
                                     std::sqrt(1.0 / config.d_emb), rng);
  }

  int dec_in = c_b + config.num_classes;
  for (int i = 0; i < kNumStages; ++i) {
    const int dec_out = config.decoder_channels[static_cast<size_t>(i)];
    m.dec[static_cast<size_t>(i)] = make_conv(dec_in, dec_out, 3, 1, 1, rng);
    if (config.domino_stages[static_cast<size_t>(i)]) {
      m.dom[static_cast<size_t>(i)] = make_domino_layer(
          dec_out, config.d_emb, config.domino_hidden, rng.next_u64());
    }
    dec_in = dec_out;
  }
  m.classifier = make_conv(dec_in, config.num_classes, 1, 1, 0, rng);

  m.idx = build_param_index(m);
  return m;
}

CrossAttentionResult cross_attention(const SegmentationModel& model,
                                     const Tensor& features,
                                     const std::vector<ClassPrompt>& prompts) {
  const int k_cls = model.cfg.num_classes;
  check_contract(static_cast<int>(prompts.size()) == k_cls,
                 "expected one prompt per class");
  std::set<int> seen;
  for (const auto& p : prompts) {
    check_contract(p.class_id >= 0 && p.class_id < k_cls,
                   "prompt class_id out of range");
    check_contract(seen.insert(p.class_id).second, "duplicate prompt class_id");
    check_contract(static_cast<int>(p.embedding.size()) == model.cfg.d_prompt,
                   "prompt embedding dimension mismatch");
  }

  // Attention computed in class order, reported in the caller's order.
  Tensor rows({k_cls, model.cfg.d_prompt});
  for (const auto& p : prompts) {
    for (int c = 0; c < model.cfg.d_prompt; ++c) {
      rows.at(p.class_id, c) = p.embedding[static_cast<size_t>(c)];
    }
  }

  ForwardTrace tr;
  attention_block(model, features, rows, tr);

  const int h = features.dim(1);
  const int w = features.dim(2);
  const int hw = h * w;
  CrossAttentionResult res;
  res.features = tr.dec_in;
  res.maps = Tensor({k_cls, h, w});
  for (int i = 0; i < k_cls; ++i) {
    const int cls = prompts[static_cast<size_t>(i)].class_id;
    double* mp = res.maps.data() + static_cast<int64_t>(i) * hw;
    for (int t = 0; t < hw; ++t) {
      mp[t] = tr.attn[static_cast<int64_t>(t) * k_cls + cls];
    }
  }
  return res;
}

Tensor forward_trace(const SegmentationModel& model, const Tensor& image,
                     const EmbeddingVector* w, ForwardTrace& trace) {
  run_front(model, image, w, trace);
  const Tensor* x = &trace.dec_in;
  for (int i = 0; i < kNumStages; ++i) {
    run_stage_conv(model, i, *x, trace);
    if (model.cfg.domino_stages[static_cast<size_t>(i)]) {
      trace.dec_act[static_cast<size_t>(i)] = domino_forward(
          model.dom[static_cast<size_t>(i)], trace.dec_conv[static_cast<size_t>(i)],
          *w, trace.dom[static_cast<size_t>(i)]);
    } else {
      trace.dec_act[static_cast<size_t>(i)] = trace.dec_conv[static_cast<size_t>(i)];
    }
    relu_inplace(trace.dec_act[static_cast<size_t>(i)]);
    x = &trace.dec_act[static_cast<size_t>(i)];
  }
  run_classifier(model, trace);
  return trace.logits;
}

Tensor forward(const SegmentationModel& model, const Tensor& image,
               const EmbeddingVector* w) {
  ForwardTrace trace;
  return forward_trace(model, image, w, trace);
}

namespace {

// Everything after the decoder input, reused by both backward paths.
// g_dec_in receives the gradient at the decoder input.
void backward_front(const SegmentationModel& model, const ForwardTrace& tr,
                    const Tensor& g_dec_in, std::vector<Tensor>& grads,
                    bool encoder_grads) {
  const auto& idx = model.idx;
  const int c_b = model.cfg.encoder_channels[kNumStages - 1];
  const int k_cls = model.cfg.num_classes;
  const int hw = tr.dec_in.dim(1) * tr.dec_in.dim(2);

  // Split the concat: residual tokens part and attention-map part.
  Tensor g_out_tokens({hw, c_b});
  for (int ch = 0; ch < c_b; ++ch) {
    const double* gp = g_dec_in.data() + static_cast<int64_t>(ch) * hw;
    for (int t = 0; t < hw; ++t) {
      g_out_tokens[static_cast<int64_t>(t) * c_b + ch] = gp[t];
    }
  }
  Tensor g_attn({hw, k_cls});
  for (int cls = 0; cls < k_cls; ++cls) {
    const double* gp = g_dec_in.data() + static_cast<int64_t>(c_b + cls) * hw;
    for (int t = 0; t < hw; ++t) {
      g_attn[static_cast<int64_t>(t) * k_cls + cls] = gp[t];
    }
  }

  // attended = attn * v; out_tokens = tokens + attended
  Tensor g_tokens = g_out_tokens;  // residual path
  // g_attn += g_attended * v^T
  gemm_abt(hw, k_cls, c_b, g_out_tokens.data(), tr.v.data(), g_attn.data(),
           true);
  // g_v = attn^T * g_attended
  Tensor g_v({k_cls, c_b});
  gemm_atb(hw, c_b, k_cls, tr.attn.data(), g_out_tokens.data(), g_v.data(),
           false);

  Tensor g_scores;
  softmax_rows_backward(tr.attn, g_attn, g_scores);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(model.cfg.attn_dim));

  // scores = q * k^T * inv_sqrt
  Tensor g_q({hw, model.cfg.attn_dim});
  gemm(hw, model.cfg.attn_dim, k_cls, g_scores.data(), tr.k.data(), g_q.data(),
       false, inv_sqrt);
  Tensor g_k({k_cls, model.cfg.attn_dim});
  gemm_atb(hw, model.cfg.attn_dim, k_cls, g_scores.data(), tr.q.data(),
           g_k.data(), false, inv_sqrt);

  // q = tokens * Wq^T
  gemm(hw, c_b, model.cfg.attn_dim, g_q.data(), model.attn_q.weight.data(),
       g_tokens.data(), true);
  gemm_atb(hw, c_b, model.cfg.attn_dim, g_q.data(), tr.tokens.data(),
           grads[static_cast<size_t>(idx.attn_q)].data(), true);

  // k/v from the final prompt rows
  Tensor g_prompts({k_cls, model.cfg.d_prompt});
  gemm(k_cls, model.cfg.d_prompt, model.cfg.attn_dim, g_k.data(),
       model.attn_k.weight.data(), g_prompts.data(), false);
  gemm_atb(k_cls, model.cfg.d_prompt, model.cfg.attn_dim, g_k.data(),
           tr.prompts_final.data(), grads[static_cast<size_t>(idx.attn_k)].data(),
           true);
  gemm(k_cls, model.cfg.d_prompt, c_b, g_v.data(), model.attn_v.weight.data(),
       g_prompts.data(), true);
  gemm_atb(k_cls, model.cfg.d_prompt, c_b, g_v.data(), tr.prompts_final.data(),
           grads[static_cast<size_t>(idx.attn_v)].data(), true);

  // combine: prompts_final = prompts_adapted +/- projected(W)
  if (model.cfg.combine_mode != CombineMode::kNone && model.has_projector) {
    const double sign =
        model.cfg.combine_mode == CombineMode::kAdd ? 1.0 : -1.0;
    Tensor g_proj({1, model.cfg.d_prompt});
    for (int r = 0; r < k_cls; ++r) {
      for (int c = 0; c < model.cfg.d_prompt; ++c) {
        g_proj[c] += sign * g_prompts.at(r, c);
      }
    }
    linear_backward_rows(model.domain_projector, tr.w_row, g_proj, nullptr,
                         &grads[static_cast<size_t>(idx.projector_w)],
                         &grads[static_cast<size_t>(idx.projector_b)]);
  }

  // text adapter and prompt table
  Tensor g_table;
  linear_backward_rows(model.text_adapter, model.prompt_table, g_prompts,
                       &g_table, &grads[static_cast<size_t>(idx.adapter_w)],
                       &grads[static_cast<size_t>(idx.adapter_b)]);
  axpy(1.0, g_table, grads[static_cast<size_t>(idx.prompt_table)]);

  // tokens -> bottleneck map
  Tensor g_bottleneck(tr.enc_act[kNumStages - 1].shape());
  add_tokens_to_map(g_tokens, g_bottleneck);

  // encoder chain
  Tensor g = std::move(g_bottleneck);
  for (int i = kNumStages - 1; i >= 0; --i) {
    Tensor g_pre;
    relu_backward(tr.enc_act[static_cast<size_t>(i)], g, g_pre);
    const Tensor& x = i == 0 ? tr.input : tr.enc_act[static_cast<size_t>(i - 1)];
    Tensor gx;
    const bool need_gx = i > 0;
    if (encoder_grads) {
      conv_backward(model.enc[static_cast<size_t>(i)], x, g_pre,
                    need_gx ? &gx : nullptr,
                    &grads[static_cast<size_t>(idx.enc_w[static_cast<size_t>(i)])],
                    &grads[static_cast<size_t>(idx.enc_b[static_cast<size_t>(i)])]);
    } else if (need_gx) {
      conv_backward(model.enc[static_cast<size_t>(i)], x, g_pre, &gx, nullptr,
                    nullptr);
    }
    if (!need_gx) break;
    g = std::move(gx);
  }
}

// Decoder stage backward below/above the Domino layer.
void backward_stage_conv(const SegmentationModel& model, int i,
                         const ForwardTrace& tr, const Tensor& g_conv,
                         Tensor& g_stage_in, std::vector<Tensor>& grads) {
  const auto& idx = model.idx;
  Tensor g_up;
  conv_backward(model.dec[static_cast<size_t>(i)],
                tr.dec_up[static_cast<size_t>(i)], g_conv, &g_up,
                &grads[static_cast<size_t>(idx.dec_w[static_cast<size_t>(i)])],
                &grads[static_cast<size_t>(idx.dec_b[static_cast<size_t>(i)])]);
  g_stage_in = upsample_nearest2_backward(g_up);
}

}  // namespace

void backward(const SegmentationModel& model, const ForwardTrace& trace,
              const Tensor& g_logits, std::vector<Tensor>& grads,
              bool encoder_grads) {
  const auto& idx = model.idx;

  Tensor g;
  conv_backward(model.classifier, trace.dec_act[kNumStages - 1], g_logits, &g,
                &grads[static_cast<size_t>(idx.cls_w)],
                &grads[static_cast<size_t>(idx.cls_b)]);

  for (int i = kNumStages - 1; i >= 0; --i) {
    Tensor g_pre;
    relu_backward(trace.dec_act[static_cast<size_t>(i)], g, g_pre);
    Tensor g_conv;
    if (model.cfg.domino_stages[static_cast<size_t>(i)]) {
      domino_backward(model.dom[static_cast<size_t>(i)],
                      trace.dom[static_cast<size_t>(i)], g_pre, g_conv,
                      grads[static_cast<size_t>(idx.dom_fc1_w[static_cast<size_t>(i)])],
                      grads[static_cast<size_t>(idx.dom_fc1_b[static_cast<size_t>(i)])],
                      grads[static_cast<size_t>(idx.dom_fc2_w[static_cast<size_t>(i)])],
                      grads[static_cast<size_t>(idx.dom_fc2_b[static_cast<size_t>(i)])]);
    } else {
      g_conv = std::move(g_pre);
    }
    backward_stage_conv(model, i, trace, g_conv, g, grads);
  }

  backward_front(model, trace, g, grads, encoder_grads);
}

BatchScopeRun forward_batch_scope(
    const SegmentationModel& model, const std::vector<const Tensor*>& images,
    const std::vector<const EmbeddingVector*>& ws) {
  const int b = static_cast<int>(images.size());
  check_contract(b >= 1, "empty batch");
  check_contract(ws.size() == images.size(), "W count mismatch");

  BatchScopeRun run;
  run.traces.resize(static_cast<size_t>(b));
  run.logits.resize(static_cast<size_t>(b));

  for (int s = 0; s < b; ++s) {
    check_contract(images[static_cast<size_t>(s)]->same_shape(*images[0]),
                   "batch-scope normalization requires equal image sizes");
    run_front(model, *images[static_cast<size_t>(s)], ws[static_cast<size_t>(s)],
              run.traces[static_cast<size_t>(s)]);
  }

  for (int i = 0; i < kNumStages; ++i) {
    for (int s = 0; s < b; ++s) {
      auto& tr = run.traces[static_cast<size_t>(s)];
      const Tensor& x = i == 0 ? tr.dec_in : tr.dec_act[static_cast<size_t>(i - 1)];
      run_stage_conv(model, i, x, tr);
    }
    if (model.cfg.domino_stages[static_cast<size_t>(i)]) {
      auto& st = run.stages[static_cast<size_t>(i)];
      st.used = true;
      const Tensor& f0 = run.traces[0].dec_conv[static_cast<size_t>(i)];
      const int c = f0.dim(0);
      const int h = f0.dim(1);
      const int w = f0.dim(2);
      // stack along height
      Tensor stacked({c, b * h, w});
      for (int s = 0; s < b; ++s) {
        const Tensor& f = run.traces[static_cast<size_t>(s)].dec_conv[static_cast<size_t>(i)];
        for (int ch = 0; ch < c; ++ch) {
          std::copy(f.data() + static_cast<int64_t>(ch) * h * w,
                    f.data() + static_cast<int64_t>(ch + 1) * h * w,
                    stacked.data() + (static_cast<int64_t>(ch) * b + s) * h * w);
        }
      }
      auto [f_hat, stats] = standardize(stacked);
      st.f_hat_stacked = std::move(f_hat);
      st.stats = std::move(stats);

      st.per_sample.resize(static_cast<size_t>(b));
      for (int s = 0; s < b; ++s) {
        auto& dt = st.per_sample[static_cast<size_t>(s)];
        dt.w = *ws[static_cast<size_t>(s)];
        dt.stats = st.stats;
        dt.f_hat = Tensor({c, h, w});
        for (int ch = 0; ch < c; ++ch) {
          std::copy(st.f_hat_stacked.data() + (static_cast<int64_t>(ch) * b + s) * h * w,
                    st.f_hat_stacked.data() + (static_cast<int64_t>(ch) * b + s + 1) * h * w,
                    dt.f_hat.data() + static_cast<int64_t>(ch) * h * w);
        }
        dt.mod = modulation_params(model.dom[static_cast<size_t>(i)], dt.w);
        {  // rebuild hidden activation for backward
          Tensor win({1, model.cfg.d_emb});
          for (int j = 0; j < model.cfg.d_emb; ++j) win[j] = dt.w[static_cast<size_t>(j)];
          linear_forward_rows(model.dom[static_cast<size_t>(i)].fc1, win, dt.hidden_act);
          for (int64_t j = 0; j < dt.hidden_act.numel(); ++j) {
            dt.hidden_act[j] = std::tanh(dt.hidden_act[j]);
          }
        }
        auto& tr = run.traces[static_cast<size_t>(s)];
        tr.dec_act[static_cast<size_t>(i)] = Tensor({c, h, w});
        for (int ch = 0; ch < c; ++ch) {
          const double a = dt.mod.scale[static_cast<size_t>(ch)];
          const double bb = dt.mod.shift[static_cast<size_t>(ch)];
          const double* hp = dt.f_hat.data() + static_cast<int64_t>(ch) * h * w;
          double* op = tr.dec_act[static_cast<size_t>(i)].data() +
                       static_cast<int64_t>(ch) * h * w;
          for (int t = 0; t < h * w; ++t) op[t] = hp[t] * a + bb;
        }
        relu_inplace(tr.dec_act[static_cast<size_t>(i)]);
      }
    } else {
      for (int s = 0; s < b; ++s) {
        auto& tr = run.traces[static_cast<size_t>(s)];
        tr.dec_act[static_cast<size_t>(i)] = tr.dec_conv[static_cast<size_t>(i)];
        relu_inplace(tr.dec_act[static_cast<size_t>(i)]);
      }
    }
  }

  for (int s = 0; s < b; ++s) {
    run_classifier(model, run.traces[static_cast<size_t>(s)]);
    run.logits[static_cast<size_t>(s)] = run.traces[static_cast<size_t>(s)].logits;
  }
  return run;
}

void backward_batch_scope(const SegmentationModel& model, BatchScopeRun& run,
                          const std::vector<Tensor>& g_logits,
                          std::vector<Tensor>& grads, bool encoder_grads) {
  const int b = static_cast<int>(run.traces.size());
  const auto& idx = model.idx;

  std::vector<Tensor> g(static_cast<size_t>(b));
  for (int s = 0; s < b; ++s) {
    conv_backward(model.classifier,
                  run.traces[static_cast<size_t>(s)].dec_act[kNumStages - 1],
                  g_logits[static_cast<size_t>(s)], &g[static_cast<size_t>(s)],
                  &grads[static_cast<size_t>(idx.cls_w)],
                  &grads[static_cast<size_t>(idx.cls_b)]);
  }

  for (int i = kNumStages - 1; i >= 0; --i) {
    if (model.cfg.domino_stages[static_cast<size_t>(i)]) {
      auto& st = run.stages[static_cast<size_t>(i)];
      const Tensor& f0 = run.traces[0].dec_conv[static_cast<size_t>(i)];
      const int c = f0.dim(0);
      const int h = f0.dim(1);
      const int w = f0.dim(2);
      Tensor g_fhat_stacked({c, b * h, w});
      for (int s = 0; s < b; ++s) {
        auto& tr = run.traces[static_cast<size_t>(s)];
        Tensor g_pre;
        relu_backward(tr.dec_act[static_cast<size_t>(i)], g[static_cast<size_t>(s)],
                      g_pre);
        Tensor g_fhat;
        modulation_backward(model.dom[static_cast<size_t>(i)],
                            st.per_sample[static_cast<size_t>(s)], g_pre, g_fhat,
                            grads[static_cast<size_t>(idx.dom_fc1_w[static_cast<size_t>(i)])],
                            grads[static_cast<size_t>(idx.dom_fc1_b[static_cast<size_t>(i)])],
                            grads[static_cast<size_t>(idx.dom_fc2_w[static_cast<size_t>(i)])],
                            grads[static_cast<size_t>(idx.dom_fc2_b[static_cast<size_t>(i)])]);
        for (int ch = 0; ch < c; ++ch) {
          std::copy(g_fhat.data() + static_cast<int64_t>(ch) * h * w,
                    g_fhat.data() + static_cast<int64_t>(ch + 1) * h * w,
                    g_fhat_stacked.data() + (static_cast<int64_t>(ch) * b + s) * h * w);
        }
      }
      Tensor g_f_stacked;
      standardize_backward(st.f_hat_stacked, st.stats, g_fhat_stacked,
                           g_f_stacked);
      for (int s = 0; s < b; ++s) {
        Tensor g_conv({c, h, w});
        for (int ch = 0; ch < c; ++ch) {
          std::copy(g_f_stacked.data() + (static_cast<int64_t>(ch) * b + s) * h * w,
                    g_f_stacked.data() + (static_cast<int64_t>(ch) * b + s + 1) * h * w,
                    g_conv.data() + static_cast<int64_t>(ch) * h * w);
        }
        backward_stage_conv(model, i, run.traces[static_cast<size_t>(s)], g_conv,
                            g[static_cast<size_t>(s)], grads);
      }
    } else {
      for (int s = 0; s < b; ++s) {
        auto& tr = run.traces[static_cast<size_t>(s)];
        Tensor g_pre;
        relu_backward(tr.dec_act[static_cast<size_t>(i)], g[static_cast<size_t>(s)],
                      g_pre);
        backward_stage_conv(model, i, tr, g_pre, g[static_cast<size_t>(s)], grads);
      }
    }
  }

  for (int s = 0; s < b; ++s) {
    backward_front(model, run.traces[static_cast<size_t>(s)], g[static_cast<size_t>(s)],
                   grads, encoder_grads);
  }
}

}  // namespace domino
