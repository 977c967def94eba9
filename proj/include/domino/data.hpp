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
#include <vector>

#include "domino/tensor.hpp"

namespace domino {

enum class Provenance { kRealAnalog, kSyntheticAnalog };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// One benchmark sample: a 3-channel image in [0,1] (CHW, values quantized
// to float32 so the on-disk round trip is exact) plus a per-pixel class map.
struct LabeledScene {
  Tensor image;                 // [3, H, W]
  std::vector<uint8_t> labels;  // H*W, row-major
  int height = 0;
  int width = 0;
  std::string domain_id = "clear";
  Provenance provenance = Provenance::kRealAnalog;
  uint64_t seed = 0;
};

// Photometric, label-preserving domain shift. Applied as
// blur -> contrast/brightness -> additive noise -> clamp to [0,1].
struct DomainTransform {
  std::string domain_id;
  double brightness_shift = 0.0;  // [-1, 1]
  double contrast_gain = 1.0;     // (0, 3]
  double noise_std = 0.0;         // [0, 0.5]
  int blur_radius = 0;            // [0, 4]
};

// Built-in domain analogs: clear, fog, rain, night, snow.
const std::vector<DomainTransform>& domain_registry();
const DomainTransform& find_transform(const std::string& domain_id);
bool is_known_domain(const std::string& domain_id);

struct SceneConfig {
  int height = 64;
  int width = 64;
  int num_classes = 4;  // background + shape classes
  int min_shapes = 3;
  int max_shapes = 6;
};

struct MixSpec {
  double real_fraction = 1.0;  // probability of drawing from the real pool
};

enum class Split { kTrainSource, kValSource, kValTarget };
std::string to_string(Split s);

struct DataConfig {
  SceneConfig scene;
  int train_size = 512;
  int val_source_size = 64;
  int val_target_size = 64;
  std::vector<std::string> target_domains = {"night", "fog"};
  std::vector<std::string> synthetic_domains = {"rain", "snow"};
  bool allow_target_leakage = false;
  MixSpec mix;
  int jitter_px = 1;
  // Scene seeds are base_seed + offset + index; -1 means "packed after the
  // previous split". Overlapping ranges are rejected.
  int64_t train_offset = 0;
  int64_t val_source_offset = -1;
  int64_t val_target_offset = -1;

  void validate() const;
};

LabeledScene generate_scene(uint64_t seed, const SceneConfig& config);

LabeledScene apply_domain_transform(const LabeledScene& scene,
                                    const DomainTransform& t, uint64_t seed);

std::vector<LabeledScene> build_dataset(Split split, const DataConfig& config,
                                        uint64_t base_seed);

// Source scenes re-rendered through randomly drawn non-target transforms
// plus a small image-only translation jitter; shares train labels.
std::vector<LabeledScene> build_synthetic_pool(const DataConfig& config,
                                               uint64_t base_seed);

std::vector<LabeledScene> mixing_sampler(
    const std::vector<LabeledScene>& real_pool,
    const std::vector<LabeledScene>& synthetic_pool, const MixSpec& mix,
    uint64_t seed, int n);

// (pool, index) draws backing mixing_sampler; pool 0 = real, 1 = synthetic.
std::vector<std::pair<int, int>> mixing_indices(int real_size,
                                                int synthetic_size,
                                                const MixSpec& mix,
                                                uint64_t seed, int n);

double mean_luminance(const Tensor& image);

// Disk layout: <dir>/<index>.img (raw little-endian float32 HWC),
// <dir>/<index>.lbl (raw uint8 HW), <dir>/manifest.json.
// Existing identical files are left untouched; returns number of files
// actually (re)written.
int save_split(const std::string& dir, const std::string& split_name,
               const std::vector<LabeledScene>& scenes,
               const DataConfig& config, uint64_t base_seed);

std::vector<LabeledScene> load_split(const std::string& dir);

}  // namespace domino
