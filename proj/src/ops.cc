// Copyright (c) the prefilter Authors. All rights reserved.
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

#include "prefilter/ops.h"

#include <cmath>
#include <cstring>

namespace prefilter {
namespace ops {

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

void check_same_shape(const Var a, const Var b, const char* op) {
  if (!(a->value.shape() == b->value.shape()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a->value.shape().str() + " vs " +
                                b->value.shape().str());
}

// Gathers k x k x in_c patches (zero padded) into rows of `cols`,
// one row per output pixel.
void im2col(const Tensor& x, int k, int stride, int pt, int pl, int oh, int ow,
            double* cols) {
  const int ih = x.h(), iw = x.w(), ci = x.c();
  const int64_t row_len = int64_t(k) * k * ci;
  const double* src = x.data();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = cols + (int64_t(oy) * ow + ox) * row_len;
      for (int ky = 0; ky < k; ++ky) {
        const int y = oy * stride - pt + ky;
        double* seg = row + int64_t(ky) * k * ci;
        if (y < 0 || y >= ih) {
          std::memset(seg, 0, sizeof(double) * k * ci);
          continue;
        }
        for (int kx = 0; kx < k; ++kx) {
          const int xx = ox * stride - pl + kx;
          if (xx < 0 || xx >= iw) {
            std::memset(seg + int64_t(kx) * ci, 0, sizeof(double) * ci);
          } else {
            std::memcpy(seg + int64_t(kx) * ci, src + (int64_t(y) * iw + xx) * ci,
                        sizeof(double) * ci);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds rows of `cols` back into `img`.
void col2im_add(const double* cols, int k, int stride, int pt, int pl, int oh,
                int ow, Tensor& img) {
  const int ih = img.h(), iw = img.w(), ci = img.c();
  const int64_t row_len = int64_t(k) * k * ci;
  double* dst = img.data();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double* row = cols + (int64_t(oy) * ow + ox) * row_len;
      for (int ky = 0; ky < k; ++ky) {
        const int y = oy * stride - pt + ky;
        if (y < 0 || y >= ih) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int xx = ox * stride - pl + kx;
          if (xx < 0 || xx >= iw) continue;
          const double* s = row + (int64_t(ky) * k + kx) * ci;
          double* d = dst + (int64_t(y) * iw + xx) * ci;
          for (int c = 0; c < ci; ++c) d[c] += s[c];
        }
      }
    }
  }
}

thread_local std::vector<double> tl_cols;

double* scratch(int64_t n) {
  if (int64_t(tl_cols.size()) < n) tl_cols.resize(n);
  return tl_cols.data();
}

double stable_sigmoid(double v) {
  if (v >= 0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double norm_cdf(double t) { return 0.5 * std::erfc(-t * M_SQRT1_2); }
double norm_pdf(double t) { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }

template <typename F>
Var unary(Tape& t, Var a, F fwd, std::function<void(Node&, Var)> bw) {
  Tensor out(a->value.shape());
  const double* s = a->value.data();
  double* d = out.data();
  for (int64_t i = 0; i < out.size(); ++i) d[i] = fwd(s[i]);
  return t.make(std::move(out), a->requires_grad,
                [a, bw](Node& n) { bw(n, a); });
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return t.make(std::move(out), a->requires_grad || b->requires_grad,
                [a, b](Node& n) {
                  Tape::add_grad(a, n.grad);
                  Tape::add_grad(b, n.grad);
                });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return t.make(std::move(out), a->requires_grad || b->requires_grad,
                [a, b](Node& n) {
                  Tape::add_grad(a, n.grad);
                  if (b->requires_grad) {
                    Tape::ensure_grad(b);
                    for (int64_t i = 0; i < n.grad.size(); ++i)
                      b->grad[i] -= n.grad[i];
                  }
                });
}

Var mul(Tape& t, Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return t.make(std::move(out), a->requires_grad || b->requires_grad,
                [a, b](Node& n) {
                  if (a->requires_grad) {
                    Tape::ensure_grad(a);
                    for (int64_t i = 0; i < n.grad.size(); ++i)
                      a->grad[i] += n.grad[i] * b->value[i];
                  }
                  if (b->requires_grad) {
                    Tape::ensure_grad(b);
                    for (int64_t i = 0; i < n.grad.size(); ++i)
                      b->grad[i] += n.grad[i] * a->value[i];
                  }
                });
}

Var div(Tape& t, Var a, Var b) {
  check_same_shape(a, b, "div");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
  return t.make(std::move(out), a->requires_grad || b->requires_grad,
                [a, b](Node& n) {
                  if (a->requires_grad) {
                    Tape::ensure_grad(a);
                    for (int64_t i = 0; i < n.grad.size(); ++i)
                      a->grad[i] += n.grad[i] / b->value[i];
                  }
                  if (b->requires_grad) {
                    Tape::ensure_grad(b);
                    for (int64_t i = 0; i < n.grad.size(); ++i)
                      b->grad[i] -= n.grad[i] * n.value[i] / b->value[i];
                  }
                });
}

Var scale(Tape& t, Var a, double k) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * k;
  return t.make(std::move(out), a->requires_grad, [a, k](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * k;
  });
}

Var add_const(Tape& t, Var a, const Tensor& c) {
  if (!(a->value.shape() == c.shape()))
    throw std::invalid_argument("add_const: shape mismatch");
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + c[i];
  return t.make(std::move(out), a->requires_grad,
                [a](Node& n) { Tape::add_grad(a, n.grad); });
}

Var square(Tape& t, Var a) {
  return unary(
      t, a, [](double v) { return v * v; },
      [](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i)
          a->grad[i] += 2.0 * a->value[i] * n.grad[i];
      });
}

Var sqrt(Tape& t, Var a) {
  return unary(
      t, a, [](double v) { return std::sqrt(v); },
      [](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i)
          a->grad[i] += 0.5 / std::max(n.value[i], 1e-300) * n.grad[i];
      });
}

Var relu(Tape& t, Var a) {
  return unary(
      t, a, [](double v) { return v > 0 ? v : 0.0; },
      [](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i)
          if (a->value[i] > 0) a->grad[i] += n.grad[i];
      });
}

Var sigmoid(Tape& t, Var a) {
  return unary(
      t, a, [](double v) { return stable_sigmoid(v); },
      [](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i) {
          const double s = n.value[i];
          a->grad[i] += n.grad[i] * s * (1.0 - s);
        }
      });
}

Var softplus(Tape& t, Var a) {
  return unary(
      t, a,
      [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i)
          a->grad[i] += n.grad[i] * stable_sigmoid(a->value[i]);
      });
}

Var pow_const(Tape& t, Var a, double p) {
  return unary(
      t, a, [p](double v) { return std::pow(v, p); },
      [p](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i)
          a->grad[i] +=
              n.grad[i] * p * std::pow(std::max(a->value[i], 1e-300), p - 1.0);
      });
}

Var clamp_min(Tape& t, Var a, double lo) {
  return unary(
      t, a, [lo](double v) { return v > lo ? v : lo; },
      [lo](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i)
          if (a->value[i] > lo) a->grad[i] += n.grad[i];
      });
}

Var clamp01(Tape& t, Var a) {
  return unary(
      t, a, [](double v) { return v < 0 ? 0.0 : (v > 1 ? 1.0 : v); },
      [](Node& n, Var a) {
        if (!a->requires_grad) return;
        Tape::ensure_grad(a);
        for (int64_t i = 0; i < n.grad.size(); ++i) {
          const double v = a->value[i];
          if (v >= 0.0 && v <= 1.0) a->grad[i] += n.grad[i];
        }
      });
}

Var sum(Tape& t, Var a) {
  Tensor out = Tensor::scalar(a->value.sum());
  return t.make(std::move(out), a->requires_grad, [a](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    const double g = n.grad[0];
    for (int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

Var mean(Tape& t, Var a) {
  const double inv = 1.0 / double(a->value.size());
  Tensor out = Tensor::scalar(a->value.sum() * inv);
  return t.make(std::move(out), a->requires_grad, [a, inv](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    const double g = n.grad[0] * inv;
    for (int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

Var global_avg_pool(Tape& t, Var a) {
  const int n_pix = a->value.h() * a->value.w();
  const int c = a->value.c();
  Tensor out(1, 1, c);
  for (int64_t p = 0; p < n_pix; ++p)
    for (int ch = 0; ch < c; ++ch) out[ch] += a->value[p * c + ch];
  for (int ch = 0; ch < c; ++ch) out[ch] /= n_pix;
  return t.make(std::move(out), a->requires_grad, [a, n_pix, c](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    for (int64_t p = 0; p < n_pix; ++p)
      for (int ch = 0; ch < c; ++ch)
        a->grad[p * c + ch] += n.grad[ch] / n_pix;
  });
}

Var concat_c(Tape& t, Var a, Var b) {
  if (a->value.h() != b->value.h() || a->value.w() != b->value.w())
    throw std::invalid_argument("concat_c: spatial mismatch");
  const int h = a->value.h(), w = a->value.w();
  const int ca = a->value.c(), cb = b->value.c();
  Tensor out(h, w, ca + cb);
  for (int64_t p = 0; p < int64_t(h) * w; ++p) {
    std::memcpy(out.data() + p * (ca + cb), a->value.data() + p * ca,
                sizeof(double) * ca);
    std::memcpy(out.data() + p * (ca + cb) + ca, b->value.data() + p * cb,
                sizeof(double) * cb);
  }
  return t.make(std::move(out), a->requires_grad || b->requires_grad,
                [a, b, h, w, ca, cb](Node& n) {
                  if (a->requires_grad) {
                    Tape::ensure_grad(a);
                    for (int64_t p = 0; p < int64_t(h) * w; ++p)
                      for (int c = 0; c < ca; ++c)
                        a->grad[p * ca + c] += n.grad[p * (ca + cb) + c];
                  }
                  if (b->requires_grad) {
                    Tape::ensure_grad(b);
                    for (int64_t p = 0; p < int64_t(h) * w; ++p)
                      for (int c = 0; c < cb; ++c)
                        b->grad[p * cb + c] += n.grad[p * (ca + cb) + ca + c];
                  }
                });
}

Var crop(Tape& t, Var a, int y0, int x0, int h, int w) {
  const int c = a->value.c(), iw = a->value.w();
  if (y0 < 0 || x0 < 0 || y0 + h > a->value.h() || x0 + w > iw)
    throw std::invalid_argument("crop: out of bounds");
  Tensor out(h, w, c);
  for (int y = 0; y < h; ++y)
    std::memcpy(out.data() + int64_t(y) * w * c,
                a->value.data() + (int64_t(y + y0) * iw + x0) * c,
                sizeof(double) * w * c);
  return t.make(std::move(out), a->requires_grad, [a, y0, x0, h, w, c, iw](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    for (int y = 0; y < h; ++y) {
      const double* s = n.grad.data() + int64_t(y) * w * c;
      double* d = a->grad.data() + (int64_t(y + y0) * iw + x0) * c;
      for (int i = 0; i < w * c; ++i) d[i] += s[i];
    }
  });
}

Var pad_zero(Tape& t, Var a, int top, int bottom, int left, int right) {
  const int h = a->value.h(), w = a->value.w(), c = a->value.c();
  Tensor out(h + top + bottom, w + left + right, c);
  for (int y = 0; y < h; ++y)
    std::memcpy(out.data() + ((int64_t(y + top)) * out.w() + left) * c,
                a->value.data() + int64_t(y) * w * c, sizeof(double) * w * c);
  return t.make(std::move(out), a->requires_grad, [a, top, left, h, w, c](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    for (int y = 0; y < h; ++y) {
      const double* s = n.grad.data() + ((int64_t(y + top)) * n.grad.w() + left) * c;
      double* d = a->grad.data() + int64_t(y) * w * c;
      for (int i = 0; i < w * c; ++i) d[i] += s[i];
    }
  });
}

namespace {
inline int sym_index(int i, int n) {
  if (i < 0) i = -1 - i;
  if (i >= n) i = 2 * n - 1 - i;
  return i;
}
}  // namespace

Var pad_symmetric(Tape& t, Var a, int top, int bottom, int left, int right) {
  const int h = a->value.h(), w = a->value.w(), c = a->value.c();
  if (top > h || bottom > h || left > w || right > w)
    throw std::invalid_argument("pad_symmetric: pad exceeds dimension");
  const int oh = h + top + bottom, ow = w + left + right;
  Tensor out(oh, ow, c);
  for (int y = 0; y < oh; ++y) {
    const int sy = sym_index(y - top, h);
    for (int x = 0; x < ow; ++x) {
      const int sx = sym_index(x - left, w);
      std::memcpy(out.data() + (int64_t(y) * ow + x) * c,
                  a->value.data() + (int64_t(sy) * w + sx) * c,
                  sizeof(double) * c);
    }
  }
  return t.make(std::move(out), a->requires_grad,
                [a, top, left, h, w, c, oh, ow](Node& n) {
                  if (!a->requires_grad) return;
                  Tape::ensure_grad(a);
                  for (int y = 0; y < oh; ++y) {
                    const int sy = sym_index(y - top, h);
                    for (int x = 0; x < ow; ++x) {
                      const int sx = sym_index(x - left, w);
                      const double* s = n.grad.data() + (int64_t(y) * ow + x) * c;
                      double* d = a->grad.data() + (int64_t(sy) * w + sx) * c;
                      for (int ch = 0; ch < c; ++ch) d[ch] += s[ch];
                    }
                  }
                });
}

Var broadcast_c(Tape& t, Var a, int h, int w) {
  if (a->value.h() != 1 || a->value.w() != 1)
    throw std::invalid_argument("broadcast_c: input must be 1x1xC");
  const int c = a->value.c();
  Tensor out(h, w, c);
  for (int64_t p = 0; p < int64_t(h) * w; ++p)
    std::memcpy(out.data() + p * c, a->value.data(), sizeof(double) * c);
  return t.make(std::move(out), a->requires_grad, [a, h, w, c](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    for (int64_t p = 0; p < int64_t(h) * w; ++p)
      for (int ch = 0; ch < c; ++ch) a->grad[ch] += n.grad[p * c + ch];
  });
}

Var avg_pool2(Tape& t, Var a) {
  const int h = a->value.h() / 2, w = a->value.w() / 2, c = a->value.c();
  const int iw = a->value.w();
  Tensor out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        out.at(y, x, ch) = 0.25 * (a->value.at(2 * y, 2 * x, ch) +
                                   a->value.at(2 * y, 2 * x + 1, ch) +
                                   a->value.at(2 * y + 1, 2 * x, ch) +
                                   a->value.at(2 * y + 1, 2 * x + 1, ch));
  (void)iw;
  return t.make(std::move(out), a->requires_grad, [a, h, w, c](Node& n) {
    if (!a->requires_grad) return;
    Tape::ensure_grad(a);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) {
          const double g = 0.25 * n.grad.at(y, x, ch);
          a->grad.at(2 * y, 2 * x, ch) += g;
          a->grad.at(2 * y, 2 * x + 1, ch) += g;
          a->grad.at(2 * y + 1, 2 * x, ch) += g;
          a->grad.at(2 * y + 1, 2 * x + 1, ch) += g;
        }
  });
}

Var conv2d(Tape& t, Var x, Var w, Var b, int k, int stride, int pad_top,
           int pad_left, int out_h, int out_w) {
  const int ci = x->value.c();
  const int co = int(w->value.shape().w);
  const int64_t row_len = int64_t(k) * k * ci;
  if (w->value.shape().h != row_len)
    throw std::invalid_argument("conv2d: weight rows != k*k*in_c");

  Tensor out(out_h, out_w, co);
  {
    double* cols = scratch(int64_t(out_h) * out_w * row_len);
    im2col(x->value, k, stride, pad_top, pad_left, out_h, out_w, cols);
    ConstMapRM cm(cols, int64_t(out_h) * out_w, row_len);
    ConstMapRM wm(w->value.data(), row_len, co);
    out.mat(int64_t(out_h) * out_w, co).noalias() = cm * wm;
  }
  if (b) {
    double* d = out.data();
    const double* bb = b->value.data();
    for (int64_t p = 0; p < int64_t(out_h) * out_w; ++p)
      for (int c = 0; c < co; ++c) d[p * co + c] += bb[c];
  }
  const bool req = x->requires_grad || w->requires_grad || (b && b->requires_grad);
  return t.make(
      std::move(out), req,
      [x, w, b, k, stride, pad_top, pad_left, out_h, out_w, ci, co,
       row_len](Node& n) {
        MapRM dy(n.grad.data(), int64_t(out_h) * out_w, co);
        if (b && b->requires_grad) {
          Tape::ensure_grad(b);
          MapRM db(b->grad.data(), 1, co);
          db.noalias() += dy.colwise().sum();
        }
        if (w->requires_grad) {
          Tape::ensure_grad(w);
          double* cols = scratch(int64_t(out_h) * out_w * row_len);
          im2col(x->value, k, stride, pad_top, pad_left, out_h, out_w, cols);
          ConstMapRM cm(cols, int64_t(out_h) * out_w, row_len);
          MapRM dw(w->grad.data(), row_len, co);
          dw.noalias() += cm.transpose() * dy;
        }
        if (x->requires_grad) {
          Tape::ensure_grad(x);
          // dcols = dy * W^T, then scatter back.
          ConstMapRM wm(w->value.data(), row_len, co);
          double* dcols = scratch(int64_t(out_h) * out_w * row_len);
          MapRM dcm(dcols, int64_t(out_h) * out_w, row_len);
          dcm.noalias() = dy * wm.transpose();
          col2im_add(dcols, k, stride, pad_top, pad_left, out_h, out_w, x->grad);
        }
      });
}

Var conv2d_transpose(Tape& t, Var x, Var w, Var b, int k, int stride, int out_h,
                     int out_w) {
  const int ih = x->value.h(), iw = x->value.w(), ci = x->value.c();
  const int co = int(w->value.shape().w) == ci
                     ? int(w->value.shape().h / (int64_t(k) * k))
                     : -1;
  if (co <= 0 || w->value.shape().h != int64_t(k) * k * co ||
      w->value.shape().w != ci)
    throw std::invalid_argument("conv2d_transpose: bad weight shape");
  if ((out_h + stride - 1) / stride != ih || (out_w + stride - 1) / stride != iw)
    throw std::invalid_argument("conv2d_transpose: target/source mismatch");

  // Geometry of the virtual SAME conv mapping (out_h, out_w) -> (ih, iw).
  const int pad_h = std::max(0, (ih - 1) * stride + k - out_h);
  const int pad_w = std::max(0, (iw - 1) * stride + k - out_w);
  const int pt = pad_h / 2, pl = pad_w / 2;
  const int64_t row_len = int64_t(k) * k * co;

  Tensor out(out_h, out_w, co);
  {
    ConstMapRM xm(x->value.data(), int64_t(ih) * iw, ci);
    ConstMapRM wm(w->value.data(), row_len, ci);
    double* cols = scratch(int64_t(ih) * iw * row_len);
    MapRM cm(cols, int64_t(ih) * iw, row_len);
    cm.noalias() = xm * wm.transpose();
    col2im_add(cols, k, stride, pt, pl, ih, iw, out);
  }
  if (b) {
    double* d = out.data();
    const double* bb = b->value.data();
    for (int64_t p = 0; p < int64_t(out_h) * out_w; ++p)
      for (int c = 0; c < co; ++c) d[p * co + c] += bb[c];
  }
  const bool req = x->requires_grad || w->requires_grad || (b && b->requires_grad);
  return t.make(
      std::move(out), req,
      [x, w, b, k, stride, out_h, out_w, ih, iw, ci, co, pt, pl,
       row_len](Node& n) {
        if (b && b->requires_grad) {
          Tape::ensure_grad(b);
          MapRM dy(n.grad.data(), int64_t(out_h) * out_w, co);
          MapRM db(b->grad.data(), 1, co);
          db.noalias() += dy.colwise().sum();
        }
        if (!x->requires_grad && !w->requires_grad) return;
        double* dcols = scratch(int64_t(ih) * iw * row_len);
        im2col(n.grad, k, stride, pt, pl, ih, iw, dcols);
        ConstMapRM dcm(dcols, int64_t(ih) * iw, row_len);
        if (x->requires_grad) {
          Tape::ensure_grad(x);
          ConstMapRM wm(w->value.data(), row_len, ci);
          MapRM dx(x->grad.data(), int64_t(ih) * iw, ci);
          dx.noalias() += dcm * wm;
        }
        if (w->requires_grad) {
          Tape::ensure_grad(w);
          ConstMapRM xm(x->value.data(), int64_t(ih) * iw, ci);
          MapRM dw(w->grad.data(), row_len, ci);
          dw.noalias() += dcm.transpose() * xm;
        }
      });
}

Var depthwise_valid(Tape& t, Var x, const Tensor& kernel2d) {
  const int kh = kernel2d.h(), kw = kernel2d.w();
  const int h = x->value.h(), w = x->value.w(), c = x->value.c();
  const int oh = h - kh + 1, ow = w - kw + 1;
  if (oh <= 0 || ow <= 0)
    throw std::invalid_argument("depthwise_valid: kernel larger than input");
  Tensor out(oh, ow, c);
  const double* src = x->value.data();
  for (int y = 0; y < oh; ++y)
    for (int xx = 0; xx < ow; ++xx) {
      double* d = out.data() + (int64_t(y) * ow + xx) * c;
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx) {
          const double kv = kernel2d[int64_t(ky) * kw + kx];
          const double* s = src + (int64_t(y + ky) * w + (xx + kx)) * c;
          for (int ch = 0; ch < c; ++ch) d[ch] += kv * s[ch];
        }
    }
  Tensor kern = kernel2d;
  return t.make(std::move(out), x->requires_grad,
                [x, kern, kh, kw, w, c, oh, ow](Node& n) {
                  if (!x->requires_grad) return;
                  Tape::ensure_grad(x);
                  double* dx = x->grad.data();
                  const double* dy = n.grad.data();
                  for (int y = 0; y < oh; ++y)
                    for (int xx = 0; xx < ow; ++xx) {
                      const double* g = dy + (int64_t(y) * ow + xx) * c;
                      for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                          const double kv = kern[int64_t(ky) * kw + kx];
                          double* d = dx + (int64_t(y + ky) * w + (xx + kx)) * c;
                          for (int ch = 0; ch < c; ++ch) d[ch] += kv * g[ch];
                        }
                    }
                });
}

Var gdn(Tape& t, Var x, Var beta_hat, Var gamma_hat, bool inverse) {
  const int c = x->value.c();
  const int64_t n_pix = int64_t(x->value.h()) * x->value.w();
  if (beta_hat->value.c() != c || gamma_hat->value.h() != c ||
      gamma_hat->value.w() != c)
    throw std::invalid_argument("gdn: parameter shape mismatch");

  // beta = beta_hat^2 + 1e-6, gamma = gamma_hat^2 (keeps them positive).
  Eigen::VectorXd beta(c);
  for (int i = 0; i < c; ++i)
    beta[i] = beta_hat->value[i] * beta_hat->value[i] + 1e-6;
  MatrixRM gamma(c, c);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      const double g = gamma_hat->value[int64_t(i) * c + j];
      gamma(i, j) = g * g;
    }

  ConstMapRM xm(x->value.data(), n_pix, c);
  Tensor z_store(x->value.h(), x->value.w(), c);
  MapRM z(z_store.data(), n_pix, c);
  z.noalias() = xm.cwiseProduct(xm) * gamma.transpose();
  z.rowwise() += beta.transpose();

  Tensor out(x->value.shape());
  MapRM om(out.data(), n_pix, c);
  if (inverse)
    om = xm.cwiseProduct(z.cwiseSqrt());
  else
    om = xm.cwiseProduct(z.cwiseSqrt().cwiseInverse());

  const bool req = x->requires_grad || beta_hat->requires_grad ||
                   gamma_hat->requires_grad;
  return t.make(
      std::move(out), req,
      [x, beta_hat, gamma_hat, inverse, z_store, gamma = std::move(gamma), c,
       n_pix](Node& n) {
        ConstMapRM xm(x->value.data(), n_pix, c);
        ConstMapRM zm(z_store.data(), n_pix, c);
        ConstMapRM gm(n.grad.data(), n_pix, c);
        // T = g .* x .* z^(-3/2) for gdn, g .* x .* z^(-1/2) for igdn.
        MatrixRM tm(n_pix, c);
        if (inverse)
          tm = gm.cwiseProduct(xm).cwiseProduct(zm.cwiseSqrt().cwiseInverse());
        else
          tm = gm.cwiseProduct(xm).cwiseProduct(
              zm.cwiseProduct(zm.cwiseSqrt()).cwiseInverse());
        const double sign = inverse ? 0.5 : -0.5;
        if (x->requires_grad) {
          Tape::ensure_grad(x);
          MapRM dx(x->grad.data(), n_pix, c);
          if (inverse)
            dx.noalias() += gm.cwiseProduct(zm.cwiseSqrt());
          else
            dx.noalias() += gm.cwiseProduct(zm.cwiseSqrt().cwiseInverse());
          dx.noalias() += (2.0 * sign) * xm.cwiseProduct(tm * gamma);
        }
        if (beta_hat->requires_grad) {
          Tape::ensure_grad(beta_hat);
          Eigen::RowVectorXd dbeta = sign * tm.colwise().sum();
          for (int i = 0; i < c; ++i)
            beta_hat->grad[i] += dbeta[i] * 2.0 * beta_hat->value[i];
        }
        if (gamma_hat->requires_grad) {
          Tape::ensure_grad(gamma_hat);
          MatrixRM dgamma = sign * (tm.transpose() * xm.cwiseProduct(xm));
          for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j)
              gamma_hat->grad[int64_t(i) * c + j] +=
                  dgamma(i, j) * 2.0 * gamma_hat->value[int64_t(i) * c + j];
        }
      });
}

Var gaussian_bits(Tape& t, Var y, Var mu, Var sigma) {
  check_same_shape(y, mu, "gaussian_bits");
  check_same_shape(y, sigma, "gaussian_bits");
  Tensor out(y->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    const double s = sigma->value[i];
    const double d = y->value[i] - mu->value[i];
    const double p = norm_cdf((d + 0.5) / s) - norm_cdf((d - 0.5) / s);
    out[i] = -std::log2(std::max(p, kLikelihoodFloor));
  }
  const bool req =
      y->requires_grad || mu->requires_grad || sigma->requires_grad;
  return t.make(std::move(out), req, [y, mu, sigma](Node& n) {
    for (int64_t i = 0; i < n.grad.size(); ++i) {
      const double g = n.grad[i];
      if (g == 0.0) continue;
      const double s = sigma->value[i];
      const double d = y->value[i] - mu->value[i];
      const double a = (d - 0.5) / s, b = (d + 0.5) / s;
      const double p = norm_cdf(b) - norm_cdf(a);
      if (p <= kLikelihoodFloor) continue;  // clamped: zero gradient
      const double coef = -1.0 / (p * kLn2);
      const double dpdy = (norm_pdf(b) - norm_pdf(a)) / s;
      const double dpds = -(norm_pdf(b) * b - norm_pdf(a) * a) / s;
      if (y->requires_grad) {
        Tape::ensure_grad(y);
        y->grad[i] += g * coef * dpdy;
      }
      if (mu->requires_grad) {
        Tape::ensure_grad(mu);
        mu->grad[i] -= g * coef * dpdy;
      }
      if (sigma->requires_grad) {
        Tape::ensure_grad(sigma);
        sigma->grad[i] += g * coef * dpds;
      }
    }
  });
}

Var straight_through(Tape& t, Var x, Tensor forward_value) {
  if (!(forward_value.shape() == x->value.shape()))
    throw std::invalid_argument("straight_through: shape mismatch");
  return t.make(std::move(forward_value), x->requires_grad,
                [x](Node& n) { Tape::add_grad(x, n.grad); });
}

Var detach(Tape& t, Var a) { return t.leaf(a->value, false); }

Var cross_entropy_logits(Tape& t, Var logits, int label) {
  const int k = int(logits->value.size());
  if (label < 0 || label >= k)
    throw std::invalid_argument("cross_entropy_logits: bad label");
  double m = logits->value[0];
  for (int i = 1; i < k; ++i) m = std::max(m, logits->value[i]);
  double lse = 0;
  for (int i = 0; i < k; ++i) lse += std::exp(logits->value[i] - m);
  lse = m + std::log(lse);
  Tensor out = Tensor::scalar(lse - logits->value[label]);
  return t.make(std::move(out), logits->requires_grad,
                [logits, label, k, lse](Node& n) {
                  if (!logits->requires_grad) return;
                  Tape::ensure_grad(logits);
                  const double g = n.grad[0];
                  for (int i = 0; i < k; ++i) {
                    const double soft = std::exp(logits->value[i] - lse);
                    logits->grad[i] += g * (soft - (i == label ? 1.0 : 0.0));
                  }
                });
}

Var affine(Tape& t, const std::vector<std::pair<double, Var>>& terms,
           double bias) {
  double v = bias;
  bool req = false;
  for (const auto& [c, x] : terms) {
    if (x->value.size() != 1)
      throw std::invalid_argument("affine: terms must be scalars");
    v += c * x->value[0];
    req = req || x->requires_grad;
  }
  return t.make(Tensor::scalar(v), req, [terms](Node& n) {
    for (const auto& [c, x] : terms) {
      if (!x->requires_grad) continue;
      Tape::ensure_grad(x);
      x->grad[0] += c * n.grad[0];
    }
  });
}

}  // namespace ops
}  // namespace prefilter
