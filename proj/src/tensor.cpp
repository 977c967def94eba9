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

#include "domino/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "domino/common.hpp"

namespace domino {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  int64_t n = 1;
  for (int d : shape_) {
    check_contract(d >= 1, "tensor dimensions must be >= 1");
    n *= d;
  }
  data_.assign(static_cast<size_t>(n), 0.0);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reset_shape(std::vector<int> shape) {
  int64_t n = 1;
  for (int d : shape) {
    check_contract(d >= 1, "tensor dimensions must be >= 1");
    n *= d;
  }
  shape_ = std::move(shape);
  data_.resize(static_cast<size_t>(n));
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  check_contract(x.numel() == y.numel(), "axpy size mismatch");
  const double* xp = x.data();
  double* yp = y.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yp[i] += alpha * xp[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_contract(a.numel() == b.numel(), "max_abs_diff size mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace domino
