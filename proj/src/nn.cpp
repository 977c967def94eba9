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

#include "domino/nn.hpp"

#include <algorithm>
#include <cmath>

#include "domino/common.hpp"

namespace domino {

namespace {

// Column-tile width keeping B/C tiles cache resident; fixed blocking keeps
// summation order (and therefore results) independent of anything runtime.
constexpr int kColBlock = 1024;
constexpr int kDotBlock = 2048;

}  // namespace

void gemm(int m, int n, int k, const double* a, const double* b, double* c,
          bool accumulate, double scale) {
  if (!accumulate) {
    std::fill(c, c + static_cast<int64_t>(m) * n, 0.0);
  }
  for (int j0 = 0; j0 < n; j0 += kColBlock) {
    const int jn = std::min(kColBlock, n - j0);
    int i0 = 0;
    for (; i0 + 4 <= m; i0 += 4) {
      double* __restrict c0 = c + static_cast<int64_t>(i0) * n + j0;
      double* __restrict c1 = c + static_cast<int64_t>(i0 + 1) * n + j0;
      double* __restrict c2 = c + static_cast<int64_t>(i0 + 2) * n + j0;
      double* __restrict c3 = c + static_cast<int64_t>(i0 + 3) * n + j0;
      for (int p = 0; p < k; ++p) {
        const double a0 = scale * a[static_cast<int64_t>(i0) * k + p];
        const double a1 = scale * a[static_cast<int64_t>(i0 + 1) * k + p];
        const double a2 = scale * a[static_cast<int64_t>(i0 + 2) * k + p];
        const double a3 = scale * a[static_cast<int64_t>(i0 + 3) * k + p];
        const double* __restrict bp = b + static_cast<int64_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) {
          const double bv = bp[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i0 < m; ++i0) {
      double* __restrict ci = c + static_cast<int64_t>(i0) * n + j0;
      for (int p = 0; p < k; ++p) {
        const double av = scale * a[static_cast<int64_t>(i0) * k + p];
        const double* __restrict bp = b + static_cast<int64_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

void gemm_abt(int m, int n, int k, const double* a, const double* b, double* c,
              bool accumulate, double scale) {
  if (!accumulate) {
    std::fill(c, c + static_cast<int64_t>(m) * n, 0.0);
  }
  for (int p0 = 0; p0 < k; p0 += kDotBlock) {
    const int pn = std::min(kDotBlock, k - p0);
    for (int j = 0; j < n; ++j) {
      const double* __restrict bj = b + static_cast<int64_t>(j) * k + p0;
      for (int i = 0; i < m; ++i) {
        const double* __restrict ai = a + static_cast<int64_t>(i) * k + p0;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (int p = 0; p < pn; ++p) acc += ai[p] * bj[p];
        c[static_cast<int64_t>(i) * n + j] += scale * acc;
      }
    }
  }
}

void gemm_atb(int m, int n, int k, const double* a, const double* b, double* c,
              bool accumulate, double scale) {
  if (!accumulate) {
    std::fill(c, c + static_cast<int64_t>(k) * n, 0.0);
  }
  for (int j0 = 0; j0 < n; j0 += kColBlock) {
    const int jn = std::min(kColBlock, n - j0);
    int i0 = 0;
    for (; i0 + 4 <= m; i0 += 4) {
      const double* __restrict b0 = b + static_cast<int64_t>(i0) * n + j0;
      const double* __restrict b1 = b + static_cast<int64_t>(i0 + 1) * n + j0;
      const double* __restrict b2 = b + static_cast<int64_t>(i0 + 2) * n + j0;
      const double* __restrict b3 = b + static_cast<int64_t>(i0 + 3) * n + j0;
      for (int p = 0; p < k; ++p) {
        const double a0 = scale * a[static_cast<int64_t>(i0) * k + p];
        const double a1 = scale * a[static_cast<int64_t>(i0 + 1) * k + p];
        const double a2 = scale * a[static_cast<int64_t>(i0 + 2) * k + p];
        const double a3 = scale * a[static_cast<int64_t>(i0 + 3) * k + p];
        double* __restrict cp = c + static_cast<int64_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) {
          cp[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
      }
    }
    for (; i0 < m; ++i0) {
      const double* __restrict bi = b + static_cast<int64_t>(i0) * n + j0;
      for (int p = 0; p < k; ++p) {
        const double av = scale * a[static_cast<int64_t>(i0) * k + p];
        if (av == 0.0) continue;
        double* __restrict cp = c + static_cast<int64_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) cp[j] += av * bi[j];
      }
    }
  }
}

Linear make_linear(int in_dim, int out_dim, bool has_bias, double weight_std,
                   Rng& rng) {
  Linear lin;
  lin.in_dim = in_dim;
  lin.out_dim = out_dim;
  lin.has_bias = has_bias;
  lin.weight = Tensor({out_dim, in_dim});
  for (int64_t i = 0; i < lin.weight.numel(); ++i) {
    lin.weight[i] = weight_std * rng.normal();
  }
  if (has_bias) lin.bias = Tensor({out_dim});
  return lin;
}

Linear make_identity_linear(int dim) {
  Linear lin;
  lin.in_dim = dim;
  lin.out_dim = dim;
  lin.has_bias = true;
  lin.weight = Tensor({dim, dim});
  for (int i = 0; i < dim; ++i) lin.weight.at(i, i) = 1.0;
  lin.bias = Tensor({dim});
  return lin;
}

void linear_forward_rows(const Linear& lin, const Tensor& x, Tensor& y) {
  const int rows = x.dim(0);
  check_contract(x.dim(1) == lin.in_dim, "linear input dimension mismatch");
  if (y.rank() != 2 || y.dim(0) != rows || y.dim(1) != lin.out_dim) {
    y = Tensor({rows, lin.out_dim});
  }
  gemm_abt(rows, lin.out_dim, lin.in_dim, x.data(), lin.weight.data(), y.data(),
           false);
  if (lin.has_bias) {
    for (int r = 0; r < rows; ++r) {
      for (int o = 0; o < lin.out_dim; ++o) y.at(r, o) += lin.bias[o];
    }
  }
}

void linear_backward_rows(const Linear& lin, const Tensor& x, const Tensor& gy,
                          Tensor* gx, Tensor* gw, Tensor* gb) {
  const int rows = x.dim(0);
  if (gx != nullptr) {
    if (!gx->same_shape(x)) *gx = Tensor(x.shape());
    gemm(rows, lin.in_dim, lin.out_dim, gy.data(), lin.weight.data(), gx->data(),
         false);
  }
  if (gw != nullptr) {
    gemm_atb(rows, lin.in_dim, lin.out_dim, gy.data(), x.data(), gw->data(),
             true);
  }
  if (gb != nullptr && lin.has_bias) {
    for (int r = 0; r < rows; ++r) {
      for (int o = 0; o < lin.out_dim; ++o) (*gb)[o] += gy.at(r, o);
    }
  }
}

Conv2d make_conv(int in_ch, int out_ch, int ksize, int stride, int pad,
                 Rng& rng) {
  Conv2d conv;
  conv.in_ch = in_ch;
  conv.out_ch = out_ch;
  conv.ksize = ksize;
  conv.stride = stride;
  conv.pad = pad;
  conv.weight = Tensor({out_ch, in_ch * ksize * ksize});
  const double std = std::sqrt(2.0 / (in_ch * ksize * ksize));
  for (int64_t i = 0; i < conv.weight.numel(); ++i) {
    conv.weight[i] = std * rng.normal();
  }
  conv.bias = Tensor({out_ch});
  return conv;
}

int conv_out_size(int in, int ksize, int stride, int pad) {
  return (in + 2 * pad - ksize) / stride + 1;
}

void im2col(const Tensor& x, int ksize, int stride, int pad, Tensor& cols) {
  const int in_ch = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  const int oh = conv_out_size(h, ksize, stride, pad);
  const int ow = conv_out_size(w, ksize, stride, pad);
  const int kk = in_ch * ksize * ksize;
  cols.reset_shape({kk, oh * ow});
  double* cp = cols.data();
  for (int c = 0; c < in_ch; ++c) {
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx) {
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) *cp++ = 0.0;
            continue;
          }
          const double* xr = x.data() + (static_cast<int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            *cp++ = (ix < 0 || ix >= w) ? 0.0 : xr[ix];
          }
        }
      }
    }
  }
}

void col2im(const Tensor& cols, int in_ch, int h, int w, int ksize, int stride,
            int pad, Tensor& gx) {
  const int oh = conv_out_size(h, ksize, stride, pad);
  const int ow = conv_out_size(w, ksize, stride, pad);
  if (gx.rank() != 3 || gx.dim(0) != in_ch || gx.dim(1) != h || gx.dim(2) != w) {
    gx = Tensor({in_ch, h, w});
  } else {
    gx.fill(0.0);
  }
  const double* cp = cols.data();
  for (int c = 0; c < in_ch; ++c) {
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx) {
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            cp += ow;
            continue;
          }
          double* gr = gx.data() + (static_cast<int64_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) gr[ix] += *cp;
            ++cp;
          }
        }
      }
    }
  }
}

namespace {

// Per-thread scratch keeps the hot conv paths free of alloc/zero churn.
Tensor& conv_scratch(int slot) {
  thread_local std::array<Tensor, 2> pool;
  return pool[static_cast<size_t>(slot)];
}

}  // namespace

void conv_forward(const Conv2d& conv, const Tensor& x, Tensor& y) {
  check_contract(x.dim(0) == conv.in_ch, "conv input channel mismatch");
  const int oh = conv_out_size(x.dim(1), conv.ksize, conv.stride, conv.pad);
  const int ow = conv_out_size(x.dim(2), conv.ksize, conv.stride, conv.pad);
  if (y.rank() != 3 || y.dim(0) != conv.out_ch || y.dim(1) != oh ||
      y.dim(2) != ow) {
    y.reset_shape({conv.out_ch, oh, ow});
  }
  const int hw = oh * ow;
  if (conv.ksize == 1 && conv.stride == 1 && conv.pad == 0) {
    gemm(conv.out_ch, hw, conv.in_ch, conv.weight.data(), x.data(), y.data(),
         false);
  } else {
    Tensor& cols = conv_scratch(0);
    im2col(x, conv.ksize, conv.stride, conv.pad, cols);
    gemm(conv.out_ch, hw, conv.in_ch * conv.ksize * conv.ksize,
         conv.weight.data(), cols.data(), y.data(), false);
  }
  for (int o = 0; o < conv.out_ch; ++o) {
    double* yo = y.data() + static_cast<int64_t>(o) * hw;
    const double b = conv.bias[o];
    for (int i = 0; i < hw; ++i) yo[i] += b;
  }
}

void conv_backward(const Conv2d& conv, const Tensor& x, const Tensor& gy,
                   Tensor* gx, Tensor* gw, Tensor* gb) {
  const int oh = gy.dim(1);
  const int ow = gy.dim(2);
  const int hw = oh * ow;
  const int kk = conv.in_ch * conv.ksize * conv.ksize;

  if (gb != nullptr) {
    for (int o = 0; o < conv.out_ch; ++o) {
      const double* go = gy.data() + static_cast<int64_t>(o) * hw;
      double acc = 0.0;
      for (int i = 0; i < hw; ++i) acc += go[i];
      (*gb)[o] += acc;
    }
  }

  const bool pointwise =
      conv.ksize == 1 && conv.stride == 1 && conv.pad == 0;
  if (pointwise) {
    if (gw != nullptr) {
      gemm_abt(conv.out_ch, kk, hw, gy.data(), x.data(), gw->data(), true);
    }
    if (gx != nullptr) {
      if (!gx->same_shape(x)) *gx = Tensor(x.shape());
      gemm_atb(conv.out_ch, hw, kk, conv.weight.data(), gy.data(), gx->data(),
               false);
    }
    return;
  }

  Tensor& cols = conv_scratch(0);
  im2col(x, conv.ksize, conv.stride, conv.pad, cols);
  if (gw != nullptr) {
    gemm_abt(conv.out_ch, kk, hw, gy.data(), cols.data(), gw->data(), true);
  }
  if (gx != nullptr) {
    Tensor& gcols = conv_scratch(1);
    gcols.reset_shape({kk, hw});
    gemm_atb(conv.out_ch, hw, kk, conv.weight.data(), gy.data(), gcols.data(),
             false);
    col2im(gcols, conv.in_ch, x.dim(1), x.dim(2), conv.ksize, conv.stride,
           conv.pad, *gx);
  }
}

void relu_inplace(Tensor& x) {
  double* p = x.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    if (p[i] < 0.0) p[i] = 0.0;
  }
}

void relu_backward(const Tensor& y, const Tensor& gy, Tensor& gx) {
  if (!gx.same_shape(y)) gx = Tensor(y.shape());
  const int64_t n = y.numel();
  for (int64_t i = 0; i < n; ++i) {
    gx[i] = y[i] > 0.0 ? gy[i] : 0.0;
  }
}

Tensor upsample_nearest2(const Tensor& x) {
  const int c = x.dim(0);
  const int h = x.dim(1);
  const int w = x.dim(2);
  Tensor y({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    for (int yy = 0; yy < 2 * h; ++yy) {
      const double* xr =
          x.data() + (static_cast<int64_t>(ch) * h + yy / 2) * w;
      double* yr = y.data() + (static_cast<int64_t>(ch) * 2 * h + yy) * 2 * w;
      for (int xx = 0; xx < 2 * w; ++xx) yr[xx] = xr[xx / 2];
    }
  }
  return y;
}

Tensor upsample_nearest2_backward(const Tensor& gy) {
  const int c = gy.dim(0);
  const int h = gy.dim(1) / 2;
  const int w = gy.dim(2) / 2;
  Tensor gx;
  gx.reset_shape({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const double* g0 =
          gy.data() + (static_cast<int64_t>(ch) * 2 * h + 2 * y) * 2 * w;
      const double* g1 = g0 + 2 * w;
      double* xr = gx.data() + (static_cast<int64_t>(ch) * h + y) * w;
      for (int x = 0; x < w; ++x) {
        xr[x] = g0[2 * x] + g0[2 * x + 1] + g1[2 * x] + g1[2 * x + 1];
      }
    }
  }
  return gx;
}

}  // namespace domino
