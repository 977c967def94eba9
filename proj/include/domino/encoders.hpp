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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "domino/domain_embedding.hpp"
#include "domino/tensor.hpp"

namespace domino {

constexpr int kNumImageStats = 7;

// Global photometric statistics: mean luminance, luminance std, mean
// gradient magnitude, high-frequency energy fraction, per-channel means.
std::array<double, kNumImageStats> image_stats(const Tensor& image);

// Deterministic CLIP stand-in. Images are mapped to standardized global
// statistics projected through a seeded orthonormal matrix. Texts whose
// lowercase form contains a known domain id are mapped to that domain's
// canonical statistics signature (mean stats of reference scenes under the
// domain transform); any other string maps to a hash-derived unit vector.
class StatisticalEncoder : public EncoderPair {
 public:
  explicit StatisticalEncoder(int embedding_dim = 32, uint64_t seed = 20240);

  EmbeddingVector text_encode(const std::string& text) const override;
  EmbeddingVector image_encode(const Tensor& image) const override;
  int embedding_dim() const override { return dim_; }

  // Longest registry domain id contained in the lowercase text; empty if none.
  std::string match_domain_id(const std::string& text) const;

 private:
  EmbeddingVector project(const std::array<double, kNumImageStats>& stats) const;

  int dim_;
  uint64_t seed_;
  std::vector<double> projection_;  // [dim_, kNumImageStats], orthonormal columns
  std::map<std::string, EmbeddingVector> signatures_;
};

}  // namespace domino
