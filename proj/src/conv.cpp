// Copyright 2026 The ast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// NCHW convolutions via im2col + GEMM, plus channel norm and the small
// spatial ops the U-Net needs.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "ast/tensor.h"

namespace ast {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace {

struct ConvDims {
  int n, ci, h, w;       // input
  int co, kh, kw;        // kernel
  int sh, sw, ph, pw;    // stride / pad
  int ho, wo;            // output
};

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// x [C,H,W] -> cols [C*kh*kw, ho*wo]; zero where the window leaves the image.
void im2col(const float* x, const ConvDims& d, float* cols) {
  const int span = d.ho * d.wo;
  for (int c = 0; c < d.ci; ++c) {
    const float* xc = x + static_cast<size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        float* row = cols + (static_cast<size_t>(c) * d.kh * d.kw +
                             static_cast<size_t>(ki) * d.kw + kj) * span;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.sh - d.ph + ki;
          float* dst = row + static_cast<size_t>(oy) * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.wo, 0.f);
            continue;
          }
          const float* src = xc + static_cast<size_t>(iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.sw - d.pw + kj;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.f;
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
void col2im_add(const float* cols, const ConvDims& d, float* x) {
  const int span = d.ho * d.wo;
  for (int c = 0; c < d.ci; ++c) {
    float* xc = x + static_cast<size_t>(c) * d.h * d.w;
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const float* row = cols + (static_cast<size_t>(c) * d.kh * d.kw +
                                   static_cast<size_t>(ki) * d.kw + kj) * span;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.sh - d.ph + ki;
          if (iy < 0 || iy >= d.h) continue;
          const float* src = row + static_cast<size_t>(oy) * d.wo;
          float* dst = xc + static_cast<size_t>(iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.sw - d.pw + kj;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

ConvDims conv_dims(const TensorPtr& x, const TensorPtr& w, int sh, int sw,
                   int ph, int pw) {
  require(x->rank() == 4 && w->rank() == 4, ErrorCategory::kDimension,
          "conv2d: x must be [N,C,H,W], w [Co,Ci,kh,kw]");
  ConvDims d;
  d.n = x->dim(0);
  d.ci = x->dim(1);
  d.h = x->dim(2);
  d.w = x->dim(3);
  d.co = w->dim(0);
  d.kh = w->dim(2);
  d.kw = w->dim(3);
  d.sh = sh;
  d.sw = sw;
  d.ph = ph;
  d.pw = pw;
  require(w->dim(1) == d.ci, ErrorCategory::kDimension,
          "conv2d: channel mismatch");
  d.ho = conv_out(d.h, d.kh, sh, ph);
  d.wo = conv_out(d.w, d.kw, sw, pw);
  require(d.ho > 0 && d.wo > 0, ErrorCategory::kDimension,
          "conv2d: output would be empty");
  return d;
}

}  // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride_h, int stride_w, int pad_h, int pad_w) {
  const ConvDims d = conv_dims(x, w, stride_h, stride_w, pad_h, pad_w);
  if (b)
    require(b->numel() == d.co, ErrorCategory::kDimension,
            "conv2d: bias must be [Co]");
  const int ckk = d.ci * d.kh * d.kw;
  const int span = d.ho * d.wo;
  auto out = Tensor::zeros({d.n, d.co, d.ho, d.wo});
  std::vector<float> cols(static_cast<size_t>(ckk) * span);
  ECMap wm(w->data.data(), d.co, ckk);
  for (int n = 0; n < d.n; ++n) {
    im2col(x->data.data() + static_cast<size_t>(n) * d.ci * d.h * d.w, d,
           cols.data());
    EMap om(out->data.data() + static_cast<size_t>(n) * d.co * span, d.co, span);
    om.noalias() = wm * ECMap(cols.data(), ckk, span);
    if (b)
      for (int c = 0; c < d.co; ++c)
        om.row(c).array() += b->data[static_cast<size_t>(c)];
  }
  Tape* t = active_tape();
  const bool need =
      t && (x->requires_grad || w->requires_grad || (b && b->requires_grad));
  if (need) {
    out->requires_grad = true;
    t->record({out}, [x, w, b, out, d, ckk, span] {
      if (out->grad.empty()) return;
      std::vector<float> cols(static_cast<size_t>(ckk) * span);
      for (int n = 0; n < d.n; ++n) {
        ECMap og(out->grad.data() + static_cast<size_t>(n) * d.co * span, d.co,
                 span);
        if (w->requires_grad) {
          w->ensure_grad();
          im2col(x->data.data() + static_cast<size_t>(n) * d.ci * d.h * d.w, d,
                 cols.data());
          EMap(w->grad.data(), d.co, ckk).noalias() +=
              og * ECMap(cols.data(), ckk, span).transpose();
        }
        if (b && b->requires_grad) {
          b->ensure_grad();
          for (int c = 0; c < d.co; ++c)
            b->grad[static_cast<size_t>(c)] += og.row(c).sum();
        }
        if (x->requires_grad) {
          x->ensure_grad();
          EMap(cols.data(), ckk, span).noalias() =
              ECMap(w->data.data(), d.co, ckk).transpose() * og;
          col2im_add(cols.data(), d,
                     x->grad.data() + static_cast<size_t>(n) * d.ci * d.h * d.w);
        }
      }
    });
  }
  return out;
}

// w is [Ci,Co,kh,kw]; output spatial size (H-1)*s - 2p + k.
TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w,
                           const TensorPtr& b, int stride_h, int stride_w,
                           int pad_h, int pad_w) {
  require(x->rank() == 4 && w->rank() == 4, ErrorCategory::kDimension,
          "conv_transpose2d: x must be [N,C,H,W], w [Ci,Co,kh,kw]");
  const int n = x->dim(0), ci = x->dim(1), h = x->dim(2), wd = x->dim(3);
  require(w->dim(0) == ci, ErrorCategory::kDimension,
          "conv_transpose2d: channel mismatch");
  const int co = w->dim(1), kh = w->dim(2), kw = w->dim(3);
  const int ho = (h - 1) * stride_h - 2 * pad_h + kh;
  const int wo = (wd - 1) * stride_w - 2 * pad_w + kw;
  require(ho > 0 && wo > 0, ErrorCategory::kDimension,
          "conv_transpose2d: output would be empty");
  if (b)
    require(b->numel() == co, ErrorCategory::kDimension,
            "conv_transpose2d: bias must be [Co]");

  // Forward here is, exactly, the data-gradient of a conv2d whose input is
  // the [N,Co,ho,wo] output; reuse the same im2col geometry.
  ConvDims d;
  d.n = n;
  d.ci = co;
  d.h = ho;
  d.w = wo;
  d.co = ci;
  d.kh = kh;
  d.kw = kw;
  d.sh = stride_h;
  d.sw = stride_w;
  d.ph = pad_h;
  d.pw = pad_w;
  d.ho = h;
  d.wo = wd;
  const int ckk = co * kh * kw;
  const int span = h * wd;

  auto out = Tensor::zeros({n, co, ho, wo});
  std::vector<float> cols(static_cast<size_t>(ckk) * span);
  ECMap wm(w->data.data(), ci, ckk);
  for (int i = 0; i < n; ++i) {
    ECMap xm(x->data.data() + static_cast<size_t>(i) * ci * span, ci, span);
    EMap(cols.data(), ckk, span).noalias() = wm.transpose() * xm;
    float* o = out->data.data() + static_cast<size_t>(i) * co * ho * wo;
    col2im_add(cols.data(), d, o);
    if (b)
      for (int c = 0; c < co; ++c) {
        float* oc = o + static_cast<size_t>(c) * ho * wo;
        const float bv = b->data[static_cast<size_t>(c)];
        for (int j = 0; j < ho * wo; ++j) oc[j] += bv;
      }
  }
  Tape* t = active_tape();
  const bool need =
      t && (x->requires_grad || w->requires_grad || (b && b->requires_grad));
  if (need) {
    out->requires_grad = true;
    t->record({out}, [x, w, b, out, d, ckk, span, n, ci, co, ho, wo] {
      if (out->grad.empty()) return;
      std::vector<float> cols(static_cast<size_t>(ckk) * span);
      for (int i = 0; i < n; ++i) {
        const float* og = out->grad.data() + static_cast<size_t>(i) * co * ho * wo;
        im2col(og, d, cols.data());
        if (x->requires_grad) {
          x->ensure_grad();
          EMap(x->grad.data() + static_cast<size_t>(i) * ci * span, ci, span)
              .noalias() += ECMap(w->data.data(), ci, ckk) *
                            ECMap(cols.data(), ckk, span);
        }
        if (w->requires_grad) {
          w->ensure_grad();
          EMap(w->grad.data(), ci, ckk).noalias() +=
              ECMap(x->data.data() + static_cast<size_t>(i) * ci * span, ci,
                    span) *
              ECMap(cols.data(), ckk, span).transpose();
        }
        if (b && b->requires_grad) {
          b->ensure_grad();
          for (int c = 0; c < co; ++c) {
            const float* oc = og + static_cast<size_t>(c) * ho * wo;
            float s = 0.f;
            for (int j = 0; j < ho * wo; ++j) s += oc[j];
            b->grad[static_cast<size_t>(c)] += s;
          }
        }
      }
    });
  }
  return out;
}

TensorPtr channel_norm(const TensorPtr& x, const TensorPtr& gamma,
                       const TensorPtr& beta, float eps) {
  require(x->rank() == 4, ErrorCategory::kDimension,
          "channel_norm: need [N,C,H,W]");
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  require(gamma->numel() == c && beta->numel() == c, ErrorCategory::kDimension,
          "channel_norm: gamma/beta must be [C]");
  const int hw = h * w;
  auto out = Tensor::zeros(x->shape);
  auto xhat = std::make_shared<std::vector<float>>(x->data.size());
  auto inv_std =
      std::make_shared<std::vector<float>>(static_cast<size_t>(n) * hw);
  const float invc = 1.f / static_cast<float>(c);
  for (int i = 0; i < n; ++i) {
    const float* xb = x->data.data() + static_cast<size_t>(i) * c * hw;
    float* ob = out->data.data() + static_cast<size_t>(i) * c * hw;
    float* hb = xhat->data() + static_cast<size_t>(i) * c * hw;
    for (int p = 0; p < hw; ++p) {
      float m = 0.f;
      for (int ch = 0; ch < c; ++ch) m += xb[static_cast<size_t>(ch) * hw + p];
      m *= invc;
      float v = 0.f;
      for (int ch = 0; ch < c; ++ch) {
        const float dv = xb[static_cast<size_t>(ch) * hw + p] - m;
        v += dv * dv;
      }
      v *= invc;
      const float is = 1.f / std::sqrt(v + eps);
      (*inv_std)[static_cast<size_t>(i) * hw + p] = is;
      for (int ch = 0; ch < c; ++ch) {
        const float xh = (xb[static_cast<size_t>(ch) * hw + p] - m) * is;
        hb[static_cast<size_t>(ch) * hw + p] = xh;
        ob[static_cast<size_t>(ch) * hw + p] =
            xh * gamma->data[static_cast<size_t>(ch)] +
            beta->data[static_cast<size_t>(ch)];
      }
    }
  }
  Tape* t = active_tape();
  if (t && (x->requires_grad || gamma->requires_grad || beta->requires_grad)) {
    out->requires_grad = true;
    t->record({out}, [x, gamma, beta, out, xhat, inv_std, n, c, hw, invc] {
      if (out->grad.empty()) return;
      for (int i = 0; i < n; ++i) {
        const float* gb = out->grad.data() + static_cast<size_t>(i) * c * hw;
        const float* hb = xhat->data() + static_cast<size_t>(i) * c * hw;
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          for (int ch = 0; ch < c; ++ch) {
            float s = 0.f;
            for (int p = 0; p < hw; ++p)
              s += gb[static_cast<size_t>(ch) * hw + p] *
                   hb[static_cast<size_t>(ch) * hw + p];
            gamma->grad[static_cast<size_t>(ch)] += s;
          }
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          for (int ch = 0; ch < c; ++ch) {
            float s = 0.f;
            for (int p = 0; p < hw; ++p) s += gb[static_cast<size_t>(ch) * hw + p];
            beta->grad[static_cast<size_t>(ch)] += s;
          }
        }
        if (x->requires_grad) {
          x->ensure_grad();
          float* xg = x->grad.data() + static_cast<size_t>(i) * c * hw;
          for (int p = 0; p < hw; ++p) {
            const float is = (*inv_std)[static_cast<size_t>(i) * hw + p];
            float sum_t = 0.f, sum_tx = 0.f;
            for (int ch = 0; ch < c; ++ch) {
              const float tj = gb[static_cast<size_t>(ch) * hw + p] *
                               gamma->data[static_cast<size_t>(ch)];
              sum_t += tj;
              sum_tx += tj * hb[static_cast<size_t>(ch) * hw + p];
            }
            for (int ch = 0; ch < c; ++ch) {
              const float tj = gb[static_cast<size_t>(ch) * hw + p] *
                               gamma->data[static_cast<size_t>(ch)];
              xg[static_cast<size_t>(ch) * hw + p] +=
                  is * (tj - invc * sum_t -
                        hb[static_cast<size_t>(ch) * hw + p] * invc * sum_tx);
            }
          }
        }
      }
    });
  }
  return out;
}

TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& v) {
  require(x->rank() == 4 && v->rank() == 2 && v->dim(0) == x->dim(0) &&
              v->dim(1) == x->dim(1),
          ErrorCategory::kDimension, "add_channel_bias: need [N,C,H,W] + [N,C]");
  const int n = x->dim(0), c = x->dim(1), hw = x->dim(2) * x->dim(3);
  auto out = Tensor::zeros(x->shape);
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float bv = v->data[static_cast<size_t>(i) * c + ch];
      const float* src =
          x->data.data() + (static_cast<size_t>(i) * c + ch) * hw;
      float* dst = out->data.data() + (static_cast<size_t>(i) * c + ch) * hw;
      for (int p = 0; p < hw; ++p) dst[p] = src[p] + bv;
    }
  if (Tape* t = active_tape(); t && (x->requires_grad || v->requires_grad)) {
    out->requires_grad = true;
    t->record({out}, [x, v, out, n, c, hw] {
      if (out->grad.empty()) return;
      if (x->requires_grad) {
        x->ensure_grad();
        for (size_t i = 0; i < x->grad.size(); ++i)
          x->grad[i] += out->grad[i];
      }
      if (v->requires_grad) {
        v->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int ch = 0; ch < c; ++ch) {
            const float* g =
                out->grad.data() + (static_cast<size_t>(i) * c + ch) * hw;
            float s = 0.f;
            for (int p = 0; p < hw; ++p) s += g[p];
            v->grad[static_cast<size_t>(i) * c + ch] += s;
          }
      }
    });
  }
  return out;
}

TensorPtr broadcast_to_chw(const TensorPtr& v, int h, int w) {
  require(v->rank() == 2, ErrorCategory::kDimension,
          "broadcast_to_chw: need [N,C]");
  const int n = v->dim(0), c = v->dim(1), hw = h * w;
  auto out = Tensor::zeros({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float val = v->data[static_cast<size_t>(i) * c + ch];
      float* dst = out->data.data() + (static_cast<size_t>(i) * c + ch) * hw;
      std::fill(dst, dst + hw, val);
    }
  if (Tape* t = active_tape(); t && v->requires_grad) {
    out->requires_grad = true;
    t->record({out}, [v, out, n, c, hw] {
      if (out->grad.empty()) return;
      v->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          const float* g =
              out->grad.data() + (static_cast<size_t>(i) * c + ch) * hw;
          float s = 0.f;
          for (int p = 0; p < hw; ++p) s += g[p];
          v->grad[static_cast<size_t>(i) * c + ch] += s;
        }
    });
  }
  return out;
}

TensorPtr global_avg_pool(const TensorPtr& x) {
  require(x->rank() == 4, ErrorCategory::kDimension,
          "global_avg_pool: need [N,C,H,W]");
  const int n = x->dim(0), c = x->dim(1), hw = x->dim(2) * x->dim(3);
  const float inv = 1.f / static_cast<float>(hw);
  auto out = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float* src =
          x->data.data() + (static_cast<size_t>(i) * c + ch) * hw;
      float s = 0.f;
      for (int p = 0; p < hw; ++p) s += src[p];
      out->data[static_cast<size_t>(i) * c + ch] = s * inv;
    }
  if (Tape* t = active_tape(); t && x->requires_grad) {
    out->requires_grad = true;
    t->record({out}, [x, out, n, c, hw, inv] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          const float g = out->grad[static_cast<size_t>(i) * c + ch] * inv;
          float* dst = x->grad.data() + (static_cast<size_t>(i) * c + ch) * hw;
          for (int p = 0; p < hw; ++p) dst[p] += g;
        }
    });
  }
  return out;
}

TensorPtr upsample_nearest2x(const TensorPtr& x) {
  require(x->rank() == 4, ErrorCategory::kDimension,
          "upsample_nearest2x: need [N,C,H,W]");
  const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  auto out = Tensor::zeros({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n * c; ++i) {
    const float* src = x->data.data() + static_cast<size_t>(i) * h * w;
    float* dst = out->data.data() + static_cast<size_t>(i) * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const float v = src[static_cast<size_t>(y) * w + xx];
        float* d0 = dst + static_cast<size_t>(2 * y) * 2 * w + 2 * xx;
        d0[0] = v;
        d0[1] = v;
        d0[2 * w] = v;
        d0[2 * w + 1] = v;
      }
  }
  if (Tape* t = active_tape(); t && x->requires_grad) {
    out->requires_grad = true;
    t->record({out}, [x, out, n, c, h, w] {
      if (out->grad.empty()) return;
      x->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        float* dst = x->grad.data() + static_cast<size_t>(i) * h * w;
        const float* g = out->grad.data() + static_cast<size_t>(i) * 4 * h * w;
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const float* g0 = g + static_cast<size_t>(2 * y) * 2 * w + 2 * xx;
            dst[static_cast<size_t>(y) * w + xx] +=
                g0[0] + g0[1] + g0[2 * w] + g0[2 * w + 1];
          }
      }
    });
  }
  return out;
}

}  // namespace ast
