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

#include "domino/tensor.hpp"

namespace domino {

using EmbeddingVector = std::vector<double>;

struct DomainDescription {
  std::string id;    // short unique key, e.g. "rain"
  std::string text;  // free-form description, e.g. "a photo taken on a rainy day"
};

// Softmax weights over a description catalog; order-aligned with it.
struct DomainWeights {
  std::vector<double> alpha;
};

// Paired text/image encoders producing vectors in a shared embedding
// space. Implementations must be deterministic and read-only after
// construction.
class EncoderPair {
 public:
  virtual ~EncoderPair() = default;
  virtual EmbeddingVector text_encode(const std::string& text) const = 0;
  virtual EmbeddingVector image_encode(const Tensor& image) const = 0;
  virtual int embedding_dim() const = 0;
};

std::vector<EmbeddingVector> encode_descriptions(
    const std::vector<DomainDescription>& catalog, const EncoderPair& enc);

// alpha_i = softmax_i( cos(I, d_i) / temperature ). Zero-norm vectors are
// rejected: a cosine against them is undefined.
DomainWeights domain_weights(
    const EmbeddingVector& image_embedding,
    const std::vector<EmbeddingVector>& description_embeddings,
    double temperature = 1.0);

// Returns (alpha, W) with W = sum_i alpha_i * d_i.
std::pair<DomainWeights, EmbeddingVector> extract_domain_embedding(
    const Tensor& image, const std::vector<DomainDescription>& catalog,
    const EncoderPair& enc, double temperature = 1.0);

void validate_catalog(const std::vector<DomainDescription>& catalog);

// JSON array of {"id": ..., "text": ...}; file order defines alpha order.
std::vector<DomainDescription> load_catalog(const std::string& path);
void save_catalog(const std::string& path,
                  const std::vector<DomainDescription>& catalog);
std::vector<DomainDescription> default_catalog();

// Catalog embeddings precomputed once for per-sample extraction in
// training and evaluation loops.
class DomainExtractor {
 public:
  DomainExtractor(std::vector<DomainDescription> catalog,
                  const EncoderPair& enc, double temperature);

  EmbeddingVector extract(const Tensor& image) const;
  std::pair<DomainWeights, EmbeddingVector> extract_full(
      const Tensor& image) const;

  const std::vector<DomainDescription>& catalog() const { return catalog_; }
  const std::vector<EmbeddingVector>& description_embeddings() const {
    return desc_embeddings_;
  }
  double temperature() const { return temperature_; }

 private:
  std::vector<DomainDescription> catalog_;
  const EncoderPair* enc_;
  std::vector<EmbeddingVector> desc_embeddings_;
  double temperature_;
};

}  // namespace domino
