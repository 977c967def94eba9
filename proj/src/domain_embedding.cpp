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

#include "domino/domain_embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "domino/common.hpp"

using json = nlohmann::json;

namespace domino {

namespace {

double norm(const EmbeddingVector& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

void validate_catalog(const std::vector<DomainDescription>& catalog) {
  check_config(!catalog.empty(), "domain catalog is empty");
  std::set<std::string> ids;
  for (const auto& d : catalog) {
    check_config(!d.id.empty(), "catalog entry with empty id");
    check_config(!d.text.empty(), "catalog entry '" + d.id + "' has empty text");
    check_config(ids.insert(d.id).second, "duplicate catalog id: " + d.id);
  }
}

std::vector<EmbeddingVector> encode_descriptions(
    const std::vector<DomainDescription>& catalog, const EncoderPair& enc) {
  validate_catalog(catalog);
  std::vector<EmbeddingVector> out;
  out.reserve(catalog.size());
  for (const auto& d : catalog) {
    EmbeddingVector e = enc.text_encode(d.text);
    check_contract(static_cast<int>(e.size()) == enc.embedding_dim(),
                   "text encoder returned wrong dimension for '" + d.id + "'");
    for (double v : e) {
      check_contract(std::isfinite(v),
                     "non-finite text embedding for '" + d.id + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

DomainWeights domain_weights(
    const EmbeddingVector& image_embedding,
    const std::vector<EmbeddingVector>& description_embeddings,
    double temperature) {
  check_config(temperature > 0.0, "temperature must be positive");
  check_contract(!description_embeddings.empty(),
                 "no description embeddings given");

  const double image_norm = norm(image_embedding);
  if (image_norm < 1e-12) {
    throw DegenerateInputError("zero-norm image embedding");
  }

  const size_t n = description_embeddings.size();
  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& d = description_embeddings[i];
    check_contract(d.size() == image_embedding.size(),
                   "description embedding dimension mismatch");
    const double dn = norm(d);
    if (dn < 1e-12) {
      throw DegenerateInputError("zero-norm description embedding at index " +
                                 std::to_string(i));
    }
    scores[i] = dot(image_embedding, d) / (image_norm * dn) / temperature;
  }

  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  DomainWeights w;
  w.alpha.resize(n);
  for (size_t i = 0; i < n; ++i) {
    w.alpha[i] = std::exp(scores[i] - m);
    z += w.alpha[i];
  }
  for (double& a : w.alpha) a /= z;
  return w;
}

std::pair<DomainWeights, EmbeddingVector> extract_domain_embedding(
    const Tensor& image, const std::vector<DomainDescription>& catalog,
    const EncoderPair& enc, double temperature) {
  const auto desc_embeddings = encode_descriptions(catalog, enc);
  const EmbeddingVector image_embedding = enc.image_encode(image);
  DomainWeights alpha =
      domain_weights(image_embedding, desc_embeddings, temperature);

  EmbeddingVector w(static_cast<size_t>(enc.embedding_dim()), 0.0);
  for (size_t i = 0; i < desc_embeddings.size(); ++i) {
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] += alpha.alpha[i] * desc_embeddings[i][j];
    }
  }
  return {std::move(alpha), std::move(w)};
}

std::vector<DomainDescription> load_catalog(const std::string& path) {
  std::ifstream in(path);
  check_config(in.good(), "cannot open catalog file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed catalog JSON in " + path + ": " + e.what());
  }
  check_config(j.is_array(), "catalog must be a JSON array: " + path);
  std::vector<DomainDescription> catalog;
  for (const auto& item : j) {
    check_config(item.is_object() && item.contains("id") && item.contains("text"),
                 "catalog entries must be {id, text} objects: " + path);
    catalog.push_back({item.at("id").get<std::string>(),
                       item.at("text").get<std::string>()});
  }
  validate_catalog(catalog);
  return catalog;
}

void save_catalog(const std::string& path,
                  const std::vector<DomainDescription>& catalog) {
  json j = json::array();
  for (const auto& d : catalog) {
    j.push_back({{"id", d.id}, {"text", d.text}});
  }
  std::ofstream out(path);
  check_config(out.good(), "cannot write catalog file: " + path);
  out << j.dump(2) << "\n";
}

std::vector<DomainDescription> default_catalog() {
  return {
      {"clear", "a photo taken on a clear sunny day"},
      {"fog", "a photo taken in dense fog"},
      {"rain", "a photo taken on a rainy day"},
      {"night", "a photo taken at night"},
  };
}

DomainExtractor::DomainExtractor(std::vector<DomainDescription> catalog,
                                 const EncoderPair& enc, double temperature)
    : catalog_(std::move(catalog)), enc_(&enc), temperature_(temperature) {
  check_config(temperature_ > 0.0, "temperature must be positive");
  desc_embeddings_ = encode_descriptions(catalog_, enc);
}

EmbeddingVector DomainExtractor::extract(const Tensor& image) const {
  return extract_full(image).second;
}

std::pair<DomainWeights, EmbeddingVector> DomainExtractor::extract_full(
    const Tensor& image) const {
  const EmbeddingVector image_embedding = enc_->image_encode(image);
  DomainWeights alpha =
      domain_weights(image_embedding, desc_embeddings_, temperature_);
  EmbeddingVector w(static_cast<size_t>(enc_->embedding_dim()), 0.0);
  for (size_t i = 0; i < desc_embeddings_.size(); ++i) {
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] += alpha.alpha[i] * desc_embeddings_[i][j];
    }
  }
  return {std::move(alpha), std::move(w)};
}

}  // namespace domino
