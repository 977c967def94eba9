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

#include "domino/config.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <set>

#include "domino/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset formats assume a little-endian host");

using json = nlohmann::json;

namespace domino {

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& section) {
  check_config(j.is_object(), "config section '" + section +
                                  "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    check_config(allowed.contains(key),
                 "unknown key '" + key + "' in config section '" + section + "'");
  }
}

template <typename T>
void read_key(const json& j, const std::string& key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value type for key '" + key + "'");
  }
}

std::array<bool, kNumStages> parse_domino_stages(const json& j) {
  std::array<bool, kNumStages> stages{};
  if (j.is_boolean()) {
    stages.fill(j.get<bool>());
    return stages;
  }
  check_config(j.is_array() && j.size() == kNumStages,
               "domino_stages must be a bool or an array of " +
                   std::to_string(kNumStages) + " bools");
  for (int i = 0; i < kNumStages; ++i) {
    check_config(j[static_cast<size_t>(i)].is_boolean(),
                 "domino_stages entries must be bools");
    stages[static_cast<size_t>(i)] = j[static_cast<size_t>(i)].get<bool>();
  }
  return stages;
}

template <size_t N>
std::array<int, N> parse_int_array(const json& j, const std::string& key) {
  check_config(j.is_array() && j.size() == N,
               key + " must be an array of " + std::to_string(N) + " ints");
  std::array<int, N> out{};
  for (size_t i = 0; i < N; ++i) {
    check_config(j[i].is_number_integer(), key + " entries must be integers");
    out[i] = j[i].get<int>();
  }
  return out;
}

}  // namespace

void ExperimentConfig::finalize_and_validate() {
  model.num_classes = data.scene.num_classes;
  model.d_emb = domain.embedding_dim;

  model.validate();
  data.validate();
  check_config(data.scene.height % 8 == 0 && data.scene.width % 8 == 0,
               "canvas dimensions must be multiples of 8 for the model");
  check_config(train.total_iters >= 0, "total_iters must be >= 0");
  check_config(train.batch_size >= 1, "batch_size must be >= 1");
  check_config(train.base_lr > 0.0, "base_lr must be positive");
  check_config(train.weight_decay >= 0.0, "weight_decay must be >= 0");
  check_config(train.poly_power > 0.0, "poly_power must be positive");
  check_config(eval_interval >= 1, "eval_interval must be >= 1");
  check_config(log_interval >= 1, "log_interval must be >= 1");
  check_config(domain.temperature > 0.0, "temperature must be positive");
  check_config(domain.embedding_dim >= 1, "embedding_dim must be positive");
}

json ExperimentConfig::to_json() const {
  json m;
  m["combination_mode"] = to_string(model.combine_mode);
  m["domino_stages"] = {model.domino_stages[0], model.domino_stages[1],
                        model.domino_stages[2]};
  m["freeze_encoder"] = model.freeze_encoder;
  m["norm_scope"] = to_string(model.norm_scope);
  m["encoder_channels"] = {model.encoder_channels[0], model.encoder_channels[1],
                           model.encoder_channels[2]};
  m["decoder_channels"] = {model.decoder_channels[0], model.decoder_channels[1],
                           model.decoder_channels[2]};
  m["attn_dim"] = model.attn_dim;
  m["prompt_dim"] = model.d_prompt;
  m["domino_hidden"] = model.domino_hidden;

  json d;
  d["canvas_height"] = data.scene.height;
  d["canvas_width"] = data.scene.width;
  d["num_classes"] = data.scene.num_classes;
  d["min_shapes"] = data.scene.min_shapes;
  d["max_shapes"] = data.scene.max_shapes;
  d["train_size"] = data.train_size;
  d["val_source_size"] = data.val_source_size;
  d["val_target_size"] = data.val_target_size;
  d["target_domains"] = data.target_domains;
  d["synthetic_domains"] = data.synthetic_domains;
  d["allow_target_leakage"] = data.allow_target_leakage;
  d["real_fraction"] = data.mix.real_fraction;
  d["jitter_px"] = data.jitter_px;
  d["train_offset"] = data.train_offset;
  d["val_source_offset"] = data.val_source_offset;
  d["val_target_offset"] = data.val_target_offset;

  json t;
  t["total_iters"] = train.total_iters;
  t["batch_size"] = train.batch_size;
  t["base_lr"] = train.base_lr;
  t["weight_decay"] = train.weight_decay;
  t["poly_power"] = train.poly_power;
  t["seed"] = seed;
  t["eval_interval"] = eval_interval;
  t["log_interval"] = log_interval;

  json dom;
  dom["catalog_path"] = domain.catalog_path;
  dom["temperature"] = domain.temperature;
  dom["embedding_dim"] = domain.embedding_dim;
  dom["encoder_seed"] = domain.encoder_seed;

  return json{{"model", m}, {"data", d}, {"train", t}, {"domain", dom}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, {"model", "data", "train", "domain"}, "<top level>");
  ExperimentConfig cfg;

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"combination_mode", "domino_stages", "freeze_encoder",
                "norm_scope", "encoder_channels", "decoder_channels",
                "attn_dim", "prompt_dim", "domino_hidden"},
               "model");
    if (m.contains("combination_mode")) {
      cfg.model.combine_mode =
          combine_mode_from_string(m.at("combination_mode").get<std::string>());
    }
    if (m.contains("domino_stages")) {
      cfg.model.domino_stages = parse_domino_stages(m.at("domino_stages"));
    }
    read_key(m, "freeze_encoder", cfg.model.freeze_encoder);
    if (m.contains("norm_scope")) {
      cfg.model.norm_scope =
          norm_scope_from_string(m.at("norm_scope").get<std::string>());
    }
    if (m.contains("encoder_channels")) {
      cfg.model.encoder_channels =
          parse_int_array<kNumStages>(m.at("encoder_channels"), "encoder_channels");
    }
    if (m.contains("decoder_channels")) {
      cfg.model.decoder_channels =
          parse_int_array<kNumStages>(m.at("decoder_channels"), "decoder_channels");
    }
    read_key(m, "attn_dim", cfg.model.attn_dim);
    read_key(m, "prompt_dim", cfg.model.d_prompt);
    read_key(m, "domino_hidden", cfg.model.domino_hidden);
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d,
               {"canvas_height", "canvas_width", "num_classes", "min_shapes",
                "max_shapes", "train_size", "val_source_size",
                "val_target_size", "target_domains", "synthetic_domains",
                "allow_target_leakage", "real_fraction", "jitter_px",
                "train_offset", "val_source_offset", "val_target_offset"},
               "data");
    read_key(d, "canvas_height", cfg.data.scene.height);
    read_key(d, "canvas_width", cfg.data.scene.width);
    read_key(d, "num_classes", cfg.data.scene.num_classes);
    read_key(d, "min_shapes", cfg.data.scene.min_shapes);
    read_key(d, "max_shapes", cfg.data.scene.max_shapes);
    read_key(d, "train_size", cfg.data.train_size);
    read_key(d, "val_source_size", cfg.data.val_source_size);
    read_key(d, "val_target_size", cfg.data.val_target_size);
    read_key(d, "target_domains", cfg.data.target_domains);
    read_key(d, "synthetic_domains", cfg.data.synthetic_domains);
    read_key(d, "allow_target_leakage", cfg.data.allow_target_leakage);
    read_key(d, "real_fraction", cfg.data.mix.real_fraction);
    read_key(d, "jitter_px", cfg.data.jitter_px);
    read_key(d, "train_offset", cfg.data.train_offset);
    read_key(d, "val_source_offset", cfg.data.val_source_offset);
    read_key(d, "val_target_offset", cfg.data.val_target_offset);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"total_iters", "batch_size", "base_lr", "weight_decay",
                "poly_power", "seed", "eval_interval", "log_interval"},
               "train");
    read_key(t, "total_iters", cfg.train.total_iters);
    read_key(t, "batch_size", cfg.train.batch_size);
    read_key(t, "base_lr", cfg.train.base_lr);
    read_key(t, "weight_decay", cfg.train.weight_decay);
    read_key(t, "poly_power", cfg.train.poly_power);
    read_key(t, "seed", cfg.seed);
    read_key(t, "eval_interval", cfg.eval_interval);
    read_key(t, "log_interval", cfg.log_interval);
  }

  if (j.contains("domain")) {
    const json& dom = j.at("domain");
    check_keys(dom, {"catalog_path", "temperature", "embedding_dim", "encoder_seed"},
               "domain");
    read_key(dom, "catalog_path", cfg.domain.catalog_path);
    read_key(dom, "temperature", cfg.domain.temperature);
    read_key(dom, "embedding_dim", cfg.domain.embedding_dim);
    read_key(dom, "encoder_seed", cfg.domain.encoder_seed);
  }

  cfg.finalize_and_validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  check_config(in.good(), "cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config JSON in " + path + ": " + e.what());
  }
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  if (!cfg.domain.catalog_path.empty()) {
    check_config(std::filesystem::exists(cfg.domain.catalog_path),
                 "catalog_path does not exist: " + cfg.domain.catalog_path);
  }
  return cfg;
}

std::string variant_name(const ExperimentConfig& config) {
  const auto& m = config.model;
  const bool any_domino =
      m.domino_stages[0] || m.domino_stages[1] || m.domino_stages[2];
  if (m.freeze_encoder && m.combine_mode == CombineMode::kNone && !any_domino) {
    return "frozen";
  }
  if (!m.freeze_encoder && m.combine_mode == CombineMode::kNone && !any_domino) {
    return "baseline";
  }
  if (!m.freeze_encoder && m.combine_mode == CombineMode::kAdd && any_domino) {
    return "domino-add";
  }
  if (!m.freeze_encoder && m.combine_mode == CombineMode::kSub && any_domino) {
    return "domino-sub";
  }
  return "custom";
}

void save_checkpoint(const std::string& path, const SegmentationModel& model,
                     const ExperimentConfig& config) {
  const auto refs = model_parameters(model);
  json header;
  header["format"] = "domino-checkpoint";
  header["version"] = 1;
  header["seed"] = config.seed;
  header["config"] = config.to_json();
  header["params"] = json::array();
  for (const auto& r : refs) {
    header["params"].push_back({{"name", r.name}, {"shape", r.tensor->shape()}});
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check_config(out.good(), "cannot write checkpoint: " + path);
  out << header.dump() << "\n";
  std::vector<float> buf;
  for (const auto& r : refs) {
    buf.resize(static_cast<size_t>(r.tensor->numel()));
    for (int64_t i = 0; i < r.tensor->numel(); ++i) {
      buf[static_cast<size_t>(i)] = static_cast<float>((*r.tensor)[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  check_config(out.good(), "short write to checkpoint: " + path);
}

json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_config(in.good(), "cannot open checkpoint: " + path);
  std::string line;
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint header in " + path + ": " + e.what());
  }
  check_config(header.value("format", "") == "domino-checkpoint",
               "not a domino checkpoint: " + path);
  return header;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const json header = read_checkpoint_header(path);
  LoadedCheckpoint out{ExperimentConfig::from_json(header.at("config")),
                       SegmentationModel{}};
  out.config.seed = header.at("seed").get<uint64_t>();
  out.model = build_model(out.config.model, derive_seed(out.config.seed, 102, 0));

  std::ifstream in(path, std::ios::binary);
  std::string line;
  std::getline(in, line);  // skip header

  auto refs = model_parameters(out.model);
  const json& manifest = header.at("params");
  check_config(manifest.size() == refs.size(),
               "checkpoint manifest size mismatch");
  std::vector<float> buf;
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& entry = manifest[i];
    check_config(entry.at("name").get<std::string>() == refs[i].name,
                 "checkpoint manifest order mismatch at " + refs[i].name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    check_config(shape == refs[i].tensor->shape(),
                 "checkpoint shape mismatch for " + refs[i].name);
    buf.resize(static_cast<size_t>(refs[i].tensor->numel()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    check_config(in.gcount() ==
                     static_cast<std::streamsize>(buf.size() * sizeof(float)),
                 "truncated checkpoint at " + refs[i].name);
    for (int64_t k = 0; k < refs[i].tensor->numel(); ++k) {
      (*refs[i].tensor)[k] = static_cast<double>(buf[static_cast<size_t>(k)]);
    }
  }
  return out;
}

}  // namespace domino
