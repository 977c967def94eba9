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

#include "domino/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "domino/common.hpp"
#include "domino/encoders.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace domino {

ClassWeightVector class_weights(const std::vector<LabeledScene>& train_set,
                                int num_classes) {
  check_config(!train_set.empty(), "class weights need a non-empty train set");
  std::vector<uint64_t> counts(static_cast<size_t>(num_classes), 0);
  uint64_t total = 0;
  for (const auto& scene : train_set) {
    for (uint8_t label : scene.labels) {
      check_contract(label < num_classes, "label out of range in train set");
      ++counts[label];
      ++total;
    }
  }
  ClassWeightVector w;
  w.weights.resize(static_cast<size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    check_config(counts[static_cast<size_t>(c)] > 0,
                 "class " + std::to_string(c) + " absent from the train set");
    const double freq =
        static_cast<double>(counts[static_cast<size_t>(c)]) / static_cast<double>(total);
    w.weights[static_cast<size_t>(c)] = std::clamp(1.0 / freq, 0.1, 10.0);
  }
  double mean = 0.0;
  for (double v : w.weights) mean += v;
  mean /= num_classes;
  for (double& v : w.weights) v /= mean;
  return w;
}

namespace {

double wce_impl(const Tensor& logits, const std::vector<uint8_t>& labels,
                const ClassWeightVector& w, Tensor* g_logits) {
  const int k = logits.dim(0);
  const int hw = logits.dim(1) * logits.dim(2);
  check_contract(static_cast<int>(labels.size()) == hw,
                 "label map size mismatch with logits");
  check_contract(static_cast<int>(w.weights.size()) == k,
                 "class weight count mismatch");
  if (g_logits != nullptr && !g_logits->same_shape(logits)) {
    *g_logits = Tensor(logits.shape());
  }

  const double inv_pixels = 1.0 / hw;
  double loss = 0.0;
  std::vector<double> probs(static_cast<size_t>(k));
  for (int i = 0; i < hw; ++i) {
    const int label = labels[static_cast<size_t>(i)];
    check_contract(label < k, "label value out of range");
    double m = logits[i];
    for (int c = 1; c < k; ++c) {
      m = std::max(m, logits[static_cast<int64_t>(c) * hw + i]);
    }
    double z = 0.0;
    for (int c = 0; c < k; ++c) {
      probs[static_cast<size_t>(c)] =
          std::exp(logits[static_cast<int64_t>(c) * hw + i] - m);
      z += probs[static_cast<size_t>(c)];
    }
    const double wl = w.weights[static_cast<size_t>(label)];
    loss += wl * (-(logits[static_cast<int64_t>(label) * hw + i] - m) +
                  std::log(z));
    if (g_logits != nullptr) {
      const double scale = wl * inv_pixels;
      for (int c = 0; c < k; ++c) {
        (*g_logits)[static_cast<int64_t>(c) * hw + i] =
            scale * (probs[static_cast<size_t>(c)] / z - (c == label ? 1.0 : 0.0));
      }
    }
  }
  return loss * inv_pixels;
}

}  // namespace

double weighted_cross_entropy(const Tensor& logits,
                              const std::vector<uint8_t>& labels,
                              const ClassWeightVector& w) {
  return wce_impl(logits, labels, w, nullptr);
}

double weighted_cross_entropy_with_grad(const Tensor& logits,
                                        const std::vector<uint8_t>& labels,
                                        const ClassWeightVector& w,
                                        Tensor& g_logits) {
  return wce_impl(logits, labels, w, &g_logits);
}

double poly_lr(const TrainSchedule& schedule, int t) {
  check_contract(schedule.total_iters >= 1, "schedule needs total_iters >= 1");
  check_contract(t >= 0 && t <= schedule.total_iters,
                 "iteration index out of schedule range");
  const double frac =
      1.0 - static_cast<double>(t) / static_cast<double>(schedule.total_iters);
  return schedule.base_lr * std::pow(frac, schedule.poly_power);
}

AdamWState make_adamw_state(const SegmentationModel& model) {
  AdamWState state;
  state.m = make_grad_buffer(model);
  state.v = make_grad_buffer(model);
  return state;
}

void adamw_update(SegmentationModel& model, const std::vector<Tensor>& grads,
                  AdamWState& state, double lr, double weight_decay) {
  auto refs = model_parameters(model);
  check_contract(refs.size() == grads.size() && refs.size() == state.m.size(),
                 "optimizer state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < refs.size(); ++p) {
    if (refs[p].encoder && model.cfg.freeze_encoder) continue;
    Tensor& param = *refs[p].tensor;
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    const Tensor& g = grads[p];
    for (int64_t i = 0; i < param.numel(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      param[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.epsilon));
      param[i] -= lr * weight_decay * param[i];
    }
  }
}

double train_step(SegmentationModel& model,
                  const std::vector<const LabeledScene*>& batch,
                  const TrainSchedule& schedule, int t,
                  const ClassWeightVector& weights, AdamWState& state,
                  const DomainExtractor* extractor,
                  const std::vector<const EmbeddingVector*>* ws_override) {
  check_contract(t >= 0 && t < schedule.total_iters,
                 "train_step iteration out of range");
  const int b = static_cast<int>(batch.size());
  check_contract(b >= 1, "empty batch");
  const bool needs_w = model.cfg.needs_domain_embedding();
  check_contract(!needs_w || extractor != nullptr || ws_override != nullptr,
                 "model requires domain embeddings but no extractor given");

  std::vector<EmbeddingVector> ws(static_cast<size_t>(b));
  std::vector<const EmbeddingVector*> w_ptrs(static_cast<size_t>(b), nullptr);
  if (needs_w) {
    if (ws_override != nullptr) {
      w_ptrs = *ws_override;
    } else {
      for (int s = 0; s < b; ++s) {
        ws[static_cast<size_t>(s)] =
            extractor->extract(batch[static_cast<size_t>(s)]->image);
        w_ptrs[static_cast<size_t>(s)] = &ws[static_cast<size_t>(s)];
      }
    }
  }

  const bool encoder_grads = !model.cfg.freeze_encoder;
  std::vector<Tensor> grads = make_grad_buffer(model);
  std::vector<double> losses(static_cast<size_t>(b), 0.0);
  const double inv_b = 1.0 / b;

  if (model.cfg.norm_scope == NormScope::kBatch &&
      (model.cfg.domino_stages[0] || model.cfg.domino_stages[1] ||
       model.cfg.domino_stages[2])) {
    // Sequential batch-scope path: pooled Domino statistics.
    std::vector<const Tensor*> images(static_cast<size_t>(b));
    for (int s = 0; s < b; ++s) {
      images[static_cast<size_t>(s)] = &batch[static_cast<size_t>(s)]->image;
    }
    BatchScopeRun run = forward_batch_scope(model, images, w_ptrs);
    std::vector<Tensor> g_logits(static_cast<size_t>(b));
    for (int s = 0; s < b; ++s) {
      losses[static_cast<size_t>(s)] = weighted_cross_entropy_with_grad(
          run.logits[static_cast<size_t>(s)], batch[static_cast<size_t>(s)]->labels,
          weights, g_logits[static_cast<size_t>(s)]);
      for (int64_t i = 0; i < g_logits[static_cast<size_t>(s)].numel(); ++i) {
        g_logits[static_cast<size_t>(s)][i] *= inv_b;
      }
    }
    backward_batch_scope(model, run, g_logits, grads, encoder_grads);
  } else {
    std::vector<std::vector<Tensor>> sample_grads(static_cast<size_t>(b));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int s = 0; s < b; ++s) {
      const auto& scene = *batch[static_cast<size_t>(s)];
      ForwardTrace trace;
      const Tensor logits = forward_trace(
          model, scene.image, needs_w ? w_ptrs[static_cast<size_t>(s)] : nullptr,
          trace);
      Tensor g_logits;
      losses[static_cast<size_t>(s)] = weighted_cross_entropy_with_grad(
          logits, scene.labels, weights, g_logits);
      sample_grads[static_cast<size_t>(s)] = make_grad_buffer(model);
      backward(model, trace, g_logits, sample_grads[static_cast<size_t>(s)],
               encoder_grads);
    }
    // Fixed-order reduction keeps results independent of thread count.
    for (int s = 0; s < b; ++s) {
      for (size_t p = 0; p < grads.size(); ++p) {
        axpy(inv_b, sample_grads[static_cast<size_t>(s)][p], grads[p]);
      }
    }
  }

  double loss = 0.0;
  for (double l : losses) loss += l;
  loss *= inv_b;

  if (!std::isfinite(loss)) {
    std::ostringstream diag;
    diag << "non-finite loss at iter " << t << " (lr=" << poly_lr(schedule, t)
         << "); batch domains=[";
    for (int s = 0; s < b; ++s) {
      diag << (s > 0 ? "," : "") << batch[static_cast<size_t>(s)]->domain_id;
    }
    diag << "] per-sample losses=[";
    for (int s = 0; s < b; ++s) {
      diag << (s > 0 ? "," : "") << losses[static_cast<size_t>(s)];
    }
    diag << "]";
    throw ContractError(diag.str());
  }

  adamw_update(model, grads, state, poly_lr(schedule, t),
               schedule.weight_decay);
  return loss;
}

namespace {

std::vector<DomainDescription> catalog_for(const ExperimentConfig& config) {
  if (config.domain.catalog_path.empty()) return default_catalog();
  return load_catalog(config.domain.catalog_path);
}

json report_record(int iter, const MetricsReport& source,
                   const MetricsReport& cross) {
  json rec;
  rec["iter"] = iter;
  rec["split_metrics"] = {{"val_source", source.to_json()},
                          {"val_target", cross.to_json()}};
  rec["split_metrics"]["miou_percent"] = *cross.miou_percent;
  return rec;
}

}  // namespace

TrainLoopResult train_loop(const ExperimentConfig& config_in,
                           const std::string& out_dir) {
  ExperimentConfig config = config_in;
  config.finalize_and_validate();
  fs::create_directories(out_dir);

  const uint64_t data_seed = derive_seed(config.seed, kSeedStreamData, 0);
  const uint64_t model_seed = derive_seed(config.seed, kSeedStreamModel, 0);
  const uint64_t mixer_seed = derive_seed(config.seed, kSeedStreamMixer, 0);

  const auto train_pool =
      build_dataset(Split::kTrainSource, config.data, data_seed);
  const auto val_source =
      build_dataset(Split::kValSource, config.data, data_seed);
  const auto val_target =
      build_dataset(Split::kValTarget, config.data, data_seed);
  std::vector<LabeledScene> synthetic_pool;
  if (config.data.mix.real_fraction < 1.0) {
    synthetic_pool = build_synthetic_pool(config.data, data_seed);
  }

  const ClassWeightVector weights =
      class_weights(train_pool, config.data.scene.num_classes);

  SegmentationModel model = build_model(config.model, model_seed);
  AdamWState state = make_adamw_state(model);

  const bool needs_w = model.cfg.needs_domain_embedding();
  StatisticalEncoder encoder(config.domain.embedding_dim,
                             config.domain.encoder_seed);
  DomainExtractor extractor(catalog_for(config), encoder,
                            config.domain.temperature);

  // Pool scenes are fixed, so their domain embeddings are too.
  std::vector<EmbeddingVector> real_ws, synth_ws;
  if (needs_w) {
    real_ws.resize(train_pool.size());
    for (size_t i = 0; i < train_pool.size(); ++i) {
      real_ws[i] = extractor.extract(train_pool[i].image);
    }
    synth_ws.resize(synthetic_pool.size());
    for (size_t i = 0; i < synthetic_pool.size(); ++i) {
      synth_ws[i] = extractor.extract(synthetic_pool[i].image);
    }
  }

  const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  const std::string checkpoint_path =
      (fs::path(out_dir) / "checkpoint.dmc").string();
  std::ofstream log(metrics_path, std::ios::trunc);
  check_config(log.good(), "cannot write metrics log: " + metrics_path);

  {
    json start;
    start["event"] = "start";
    start["variant"] = variant_name(config);
    start["seed"] = config.seed;
    start["param_count"] = parameter_count(model);
    start["class_weights"] = weights.weights;
    log << start.dump() << "\n";
  }

  // Frozen-encoder attestation snapshot.
  std::vector<Tensor> frozen_snapshot;
  if (config.model.freeze_encoder) {
    for (const auto& r : model_parameters(model)) {
      if (r.encoder) frozen_snapshot.push_back(*r.tensor);
    }
  }
  auto attest_frozen = [&](int iter) {
    size_t k = 0;
    bool unchanged = true;
    for (const auto& r : model_parameters(model)) {
      if (!r.encoder) continue;
      if (r.tensor->raw() != frozen_snapshot[k].raw()) unchanged = false;
      ++k;
    }
    json rec;
    rec["event"] = "frozen_attestation";
    rec["iter"] = iter;
    rec["unchanged"] = unchanged;
    log << rec.dump() << "\n";
    check_contract(unchanged, "frozen encoder parameters changed");
  };

  const auto draws =
      mixing_indices(static_cast<int>(train_pool.size()),
                     static_cast<int>(synthetic_pool.size()), config.data.mix,
                     mixer_seed,
                     config.train.total_iters * config.train.batch_size);

  auto run_eval = [&](int iter) -> MetricsReport {
    const DomainExtractor* ex = needs_w ? &extractor : nullptr;
    const MetricsReport src = evaluate_dataset(model, val_source, ex);
    const MetricsReport tgt = evaluate_dataset(model, val_target, ex);
    const MetricsReport cross = make_cross_domain_report(src, tgt);
    log << report_record(iter, src, cross).dump() << "\n";
    return cross;
  };

  double last_loss = 0.0;
  for (int t = 0; t < config.train.total_iters; ++t) {
    std::vector<const LabeledScene*> batch(static_cast<size_t>(config.train.batch_size));
    std::vector<const EmbeddingVector*> ws(static_cast<size_t>(config.train.batch_size));
    for (int s = 0; s < config.train.batch_size; ++s) {
      const auto& [pool, index] =
          draws[static_cast<size_t>(t) * config.train.batch_size + s];
      if (pool == 0) {
        batch[static_cast<size_t>(s)] = &train_pool[static_cast<size_t>(index)];
        if (needs_w) ws[static_cast<size_t>(s)] = &real_ws[static_cast<size_t>(index)];
      } else {
        batch[static_cast<size_t>(s)] = &synthetic_pool[static_cast<size_t>(index)];
        if (needs_w) ws[static_cast<size_t>(s)] = &synth_ws[static_cast<size_t>(index)];
      }
    }

    last_loss = train_step(model, batch, config.train, t, weights, state,
                           needs_w ? &extractor : nullptr, needs_w ? &ws : nullptr);

    if (t % config.log_interval == 0 || t == config.train.total_iters - 1) {
      json rec;
      rec["iter"] = t;
      rec["loss"] = last_loss;
      rec["lr"] = poly_lr(config.train, t);
      log << rec.dump() << "\n";
    }
    if (config.model.freeze_encoder && (t + 1) % 100 == 0) attest_frozen(t + 1);
    if ((t + 1) % config.eval_interval == 0 &&
        t + 1 < config.train.total_iters) {
      run_eval(t + 1);
    }
  }

  if (config.model.freeze_encoder) attest_frozen(config.train.total_iters);

  TrainLoopResult result;
  result.final_report = run_eval(config.train.total_iters);
  result.final_loss = last_loss;
  result.checkpoint_path = checkpoint_path;
  result.metrics_path = metrics_path;
  save_checkpoint(checkpoint_path, model, config);
  {
    json done;
    done["event"] = "done";
    done["checkpoint"] = "checkpoint.dmc";
    log << done.dump() << "\n";
  }
  return result;
}

}  // namespace domino
