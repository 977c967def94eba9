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

#include "domino/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "domino/common.hpp"
#include "domino/data.hpp"
#include "domino/rng.hpp"

namespace domino {

namespace {

// Fixed standardization so each statistic contributes comparably to the
// cosine. Centers/scales chosen from the generator's output ranges.
constexpr double kStatCenter[kNumImageStats] = {0.45, 0.055, 0.040, 0.50,
                                                0.46, 0.46, 0.44};
constexpr double kStatScale[kNumImageStats] = {0.30, 0.030, 0.030, 0.20,
                                               0.30, 0.30, 0.30};

// Reference scenes for canonical domain signatures; independent of any
// dataset seed.
constexpr uint64_t kSignatureSeedBase = 0x515caf75ULL;
constexpr int kSignatureScenes = 24;

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::array<double, kNumImageStats> image_stats(const Tensor& image) {
  check_contract(image.rank() == 3 && image.dim(0) == 3,
                 "image must be [3,H,W]");
  const int h = image.dim(1);
  const int w = image.dim(2);
  const double npix = static_cast<double>(h) * w;

  std::vector<double> lum(static_cast<size_t>(h) * w);
  double mean_r = 0.0, mean_g = 0.0, mean_b = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = image.at(0, y, x);
      const double g = image.at(1, y, x);
      const double b = image.at(2, y, x);
      lum[static_cast<size_t>(y) * w + x] = 0.299 * r + 0.587 * g + 0.114 * b;
      mean_r += r;
      mean_g += g;
      mean_b += b;
    }
  }
  mean_r /= npix;
  mean_g /= npix;
  mean_b /= npix;

  double mean_lum = 0.0;
  for (double v : lum) mean_lum += v;
  mean_lum /= npix;
  double var_lum = 0.0;
  for (double v : lum) var_lum += (v - mean_lum) * (v - mean_lum);
  var_lum /= npix;
  const double std_lum = std::sqrt(var_lum);

  // Mean gradient magnitude over interior pixels (central differences).
  double grad = 0.0;
  int grad_count = 0;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double gx = 0.5 * (lum[static_cast<size_t>(y) * w + x + 1] -
                               lum[static_cast<size_t>(y) * w + x - 1]);
      const double gy = 0.5 * (lum[static_cast<size_t>(y + 1) * w + x] -
                               lum[static_cast<size_t>(y - 1) * w + x]);
      grad += std::sqrt(gx * gx + gy * gy);
      ++grad_count;
    }
  }
  grad /= std::max(1, grad_count);

  // Fraction of luminance variance left after a 3x3 box smooth.
  double hf = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ky = -1; ky <= 1; ++ky) {
        const int yy = std::clamp(y + ky, 0, h - 1);
        for (int kx = -1; kx <= 1; ++kx) {
          const int xx = std::clamp(x + kx, 0, w - 1);
          acc += lum[static_cast<size_t>(yy) * w + xx];
        }
      }
      const double d = lum[static_cast<size_t>(y) * w + x] - acc / 9.0;
      hf += d * d;
    }
  }
  hf /= npix;
  const double hf_fraction = std::min(3.0, hf / (var_lum + 1e-8));

  return {mean_lum, std_lum, grad, hf_fraction, mean_r, mean_g, mean_b};
}

StatisticalEncoder::StatisticalEncoder(int embedding_dim, uint64_t seed)
    : dim_(embedding_dim), seed_(seed) {
  check_config(dim_ >= kNumImageStats,
               "embedding_dim must be >= " + std::to_string(kNumImageStats));

  // Seeded Gaussian matrix, Gram-Schmidt over the stat columns.
  projection_.assign(static_cast<size_t>(dim_) * kNumImageStats, 0.0);
  Rng rng(derive_seed(seed_, 11, 0));
  for (auto& v : projection_) v = rng.normal();
  for (int c = 0; c < kNumImageStats; ++c) {
    for (int p = 0; p < c; ++p) {
      double d = 0.0;
      for (int r = 0; r < dim_; ++r) {
        d += projection_[static_cast<size_t>(r) * kNumImageStats + c] *
             projection_[static_cast<size_t>(r) * kNumImageStats + p];
      }
      for (int r = 0; r < dim_; ++r) {
        projection_[static_cast<size_t>(r) * kNumImageStats + c] -=
            d * projection_[static_cast<size_t>(r) * kNumImageStats + p];
      }
    }
    double n = 0.0;
    for (int r = 0; r < dim_; ++r) {
      const double v = projection_[static_cast<size_t>(r) * kNumImageStats + c];
      n += v * v;
    }
    n = std::sqrt(n);
    check_contract(n > 1e-9, "projection column collapsed during Gram-Schmidt");
    for (int r = 0; r < dim_; ++r) {
      projection_[static_cast<size_t>(r) * kNumImageStats + c] /= n;
    }
  }

  // Canonical per-domain signatures: mean stats of reference scenes pushed
  // through each registry transform.
  SceneConfig ref_config;
  std::vector<LabeledScene> refs;
  refs.reserve(kSignatureScenes);
  for (int i = 0; i < kSignatureScenes; ++i) {
    refs.push_back(generate_scene(kSignatureSeedBase + static_cast<uint64_t>(i),
                                  ref_config));
  }
  for (const auto& t : domain_registry()) {
    std::array<double, kNumImageStats> mean{};
    for (int i = 0; i < kSignatureScenes; ++i) {
      const LabeledScene transformed = apply_domain_transform(
          refs[static_cast<size_t>(i)], t,
          derive_seed(kSignatureSeedBase, 13, static_cast<uint64_t>(i)));
      const auto stats = image_stats(transformed.image);
      for (int k = 0; k < kNumImageStats; ++k) mean[static_cast<size_t>(k)] += stats[static_cast<size_t>(k)];
    }
    for (int k = 0; k < kNumImageStats; ++k) mean[static_cast<size_t>(k)] /= kSignatureScenes;
    signatures_[t.domain_id] = project(mean);
  }
}

EmbeddingVector StatisticalEncoder::project(
    const std::array<double, kNumImageStats>& stats) const {
  EmbeddingVector out(static_cast<size_t>(dim_), 0.0);
  for (int r = 0; r < dim_; ++r) {
    double acc = 0.0;
    for (int c = 0; c < kNumImageStats; ++c) {
      const double standardized =
          (stats[static_cast<size_t>(c)] - kStatCenter[c]) / kStatScale[c];
      acc += projection_[static_cast<size_t>(r) * kNumImageStats + c] * standardized;
    }
    out[static_cast<size_t>(r)] = acc;
  }
  return out;
}

std::string StatisticalEncoder::match_domain_id(const std::string& text) const {
  const std::string lower = to_lower(text);
  std::string best;
  for (const auto& [id, sig] : signatures_) {
    if (lower.find(id) != std::string::npos && id.size() > best.size()) {
      best = id;
    }
  }
  return best;
}

EmbeddingVector StatisticalEncoder::text_encode(const std::string& text) const {
  const std::string id = match_domain_id(text);
  if (!id.empty()) return signatures_.at(id);

  Rng rng(derive_seed(seed_, 17, fnv1a(text)));
  EmbeddingVector out(static_cast<size_t>(dim_));
  double n = 0.0;
  for (auto& v : out) {
    v = rng.normal();
    n += v * v;
  }
  n = std::sqrt(n);
  for (auto& v : out) v /= n;
  return out;
}

EmbeddingVector StatisticalEncoder::image_encode(const Tensor& image) const {
  return project(image_stats(image));
}

}  // namespace domino
