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

#include "domino/rng.hpp"
#include "domino/tensor.hpp"

namespace domino {

// C[m,n] (+)= A[m,k] * B[k,n]
void gemm(int m, int n, int k, const double* a, const double* b, double* c,
          bool accumulate, double scale = 1.0);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_abt(int m, int n, int k, const double* a, const double* b, double* c,
              bool accumulate, double scale = 1.0);
// C[k,n] (+)= A[m,k]^T * B[m,n]
void gemm_atb(int m, int n, int k, const double* a, const double* b, double* c,
              bool accumulate, double scale = 1.0);

struct Linear {
  int in_dim = 0;
  int out_dim = 0;
  bool has_bias = true;
  Tensor weight;  // [out_dim, in_dim]
  Tensor bias;    // [out_dim]
};

Linear make_linear(int in_dim, int out_dim, bool has_bias, double weight_std,
                   Rng& rng);
Linear make_identity_linear(int dim);

// y[R,out] = x[R,in] * W^T + b
void linear_forward_rows(const Linear& lin, const Tensor& x, Tensor& y);
// Accumulates parameter grads; gx may be null.
void linear_backward_rows(const Linear& lin, const Tensor& x, const Tensor& gy,
                          Tensor* gx, Tensor* gw, Tensor* gb);

struct Conv2d {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 3;
  int stride = 1;
  int pad = 1;
  Tensor weight;  // [out_ch, in_ch*ksize*ksize]
  Tensor bias;    // [out_ch]
};

Conv2d make_conv(int in_ch, int out_ch, int ksize, int stride, int pad,
                 Rng& rng);

int conv_out_size(int in, int ksize, int stride, int pad);

// cols: [in_ch*k*k, out_h*out_w]
void im2col(const Tensor& x, int ksize, int stride, int pad, Tensor& cols);
void col2im(const Tensor& cols, int in_ch, int h, int w, int ksize, int stride,
            int pad, Tensor& gx);

void conv_forward(const Conv2d& conv, const Tensor& x, Tensor& y);
// gx may be null (e.g. at the input image).
void conv_backward(const Conv2d& conv, const Tensor& x, const Tensor& gy,
                   Tensor* gx, Tensor* gw, Tensor* gb);

void relu_inplace(Tensor& x);
// gx = gy masked by the saved relu output.
void relu_backward(const Tensor& y, const Tensor& gy, Tensor& gx);

Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_nearest2_backward(const Tensor& gy);

}  // namespace domino
