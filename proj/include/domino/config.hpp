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
#include <string>

#include <nlohmann/json.hpp>

#include "domino/data.hpp"
#include "domino/model.hpp"

namespace domino {

// Substreams of the experiment seed.
constexpr uint64_t kSeedStreamData = 101;
constexpr uint64_t kSeedStreamModel = 102;
constexpr uint64_t kSeedStreamMixer = 103;

struct TrainSchedule {
  int total_iters = 2000;
  double base_lr = 1e-3;
  double weight_decay = 1e-3;
  double poly_power = 0.9;
  int batch_size = 8;
};

struct DomainConfig {
  std::string catalog_path;  // empty = built-in default catalog
  double temperature = 1.0;
  int embedding_dim = 32;
  uint64_t encoder_seed = 20240;
};

// One experiment recipe; JSON sections: model, data, train, domain.
// Unknown keys are a hard error.
struct ExperimentConfig {
  ModelConfig model;
  DataConfig data;
  TrainSchedule train;
  uint64_t seed = 1;
  int eval_interval = 500;
  int log_interval = 50;
  DomainConfig domain;

  // Syncs derived model fields (num_classes, d_emb) and validates
  // everything, including cross-section constraints.
  void finalize_and_validate();

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_experiment_config(const std::string& path);

// Table-2 style variant name derived from the model section:
// baseline | frozen | domino-add | domino-sub | custom.
std::string variant_name(const ExperimentConfig& config);

// Checkpoint: one JSON header line {format, version, seed, config, params:
// [{name, shape}...]} followed by raw little-endian float32 blocks in
// manifest order.
void save_checkpoint(const std::string& path, const SegmentationModel& model,
                     const ExperimentConfig& config);

struct LoadedCheckpoint {
  ExperimentConfig config;
  SegmentationModel model;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Header-only read (no parameter blobs), for reporting.
nlohmann::json read_checkpoint_header(const std::string& path);

}  // namespace domino
