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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "prefilter/image.h"
#include "prefilter/nn.h"
#include "prefilter/ops.h"
#include "testutil.h"

using namespace prefilter;
using testutil::grad_check;
using testutil::random_tensor;

namespace {

// Builds the graph, runs backward from f(x), and returns (value, dx).
std::pair<double, Tensor> value_and_grad(
    const std::function<Var(Tape&, Var)>& build, const Tensor& x) {
  Tape tape;
  Var xv = tape.leaf(x, true);
  Var out = build(tape, xv);
  tape.backward(out);
  return {out->value.item(), xv->grad.empty() ? Tensor::zeros(x.shape())
                                              : xv->grad.clone()};
}

double fd_vs_analytic(const std::function<Var(Tape&, Var)>& build,
                      const Tensor& x, double h = 1e-5) {
  auto [val, grad] = value_and_grad(build, x);
  (void)val;
  auto f = [&](const Tensor& xt) {
    Tape tape;
    Var xv = tape.leaf(xt, false);
    return build(tape, xv)->value.item();
  };
  return grad_check(f, x.clone(), grad, h);
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t(2, 3, 4);
  CHECK(t.size() == 24);
  t.at(1, 2, 3) = 5.0;
  CHECK(t[23] == 5.0);
  Tensor shallow = t;
  shallow.at(0, 0, 0) = 7.0;
  CHECK(t.at(0, 0, 0) == 7.0);  // copies share the buffer
  Tensor deep = t.clone();
  deep.at(0, 0, 0) = 9.0;
  CHECK(t.at(0, 0, 0) == 7.0);
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(42);
  Tensor x = random_tensor({3, 4, 2}, rng, 0.1, 0.9);

  auto cases = std::vector<std::pair<const char*, std::function<Var(Tape&, Var)>>>{
      {"mean", [](Tape& t, Var v) { return ops::mean(t, v); }},
      {"sum_square",
       [](Tape& t, Var v) { return ops::sum(t, ops::square(t, v)); }},
      {"sigmoid",
       [](Tape& t, Var v) { return ops::mean(t, ops::sigmoid(t, v)); }},
      {"softplus",
       [](Tape& t, Var v) { return ops::mean(t, ops::softplus(t, v)); }},
      {"sqrt", [](Tape& t, Var v) { return ops::mean(t, ops::sqrt(t, v)); }},
      {"pow1.7",
       [](Tape& t, Var v) { return ops::mean(t, ops::pow_const(t, v, 1.7)); }},
      {"mul_self",
       [](Tape& t, Var v) { return ops::mean(t, ops::mul(t, v, v)); }},
      {"gap",
       [](Tape& t, Var v) {
         return ops::mean(t, ops::global_avg_pool(t, v));
       }},
      {"avg_pool2",
       [](Tape& t, Var v) { return ops::mean(t, ops::avg_pool2(t, v)); }},
      {"pad_sym",
       [](Tape& t, Var v) {
         return ops::mean(t, ops::pad_symmetric(t, v, 2, 1, 2, 3));
       }},
      {"pad_zero_crop",
       [](Tape& t, Var v) {
         Var p = ops::pad_zero(t, v, 1, 1, 1, 1);
         return ops::mean(t, ops::crop(t, p, 0, 0, 3, 4));
       }},
  };
  for (auto& [name, build] : cases) {
    CAPTURE(name);
    CHECK(fd_vs_analytic(build, x) < 1e-6);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  const int k = 3, ci = 2, co = 3;
  Tensor x = random_tensor({5, 6, ci}, rng, -1.0, 1.0);
  Tensor w = random_tensor({k * k * ci, co, 1}, rng, -0.5, 0.5);
  Tensor b = random_tensor({1, 1, co}, rng, -0.1, 0.1);

  for (int stride : {1, 2}) {
    const int oh = conv_out(5, stride), ow = conv_out(6, stride);
    const int ph = std::max(0, (oh - 1) * stride + k - 5);
    const int pw = std::max(0, (ow - 1) * stride + k - 6);
    auto run = [&](const Tensor& xv, const Tensor& wv, const Tensor& bv,
                   int wrt) -> std::pair<double, Tensor> {
      Tape t;
      Var X = t.leaf(xv, wrt == 0);
      Var W = t.leaf(wv, wrt == 1);
      Var B = t.leaf(bv, wrt == 2);
      Var y = ops::conv2d(t, X, W, B, k, stride, ph / 2, pw / 2, oh, ow);
      Var loss = ops::mean(t, ops::square(t, y));
      t.backward(loss);
      Var v = wrt == 0 ? X : (wrt == 1 ? W : B);
      return {loss->value.item(), v->grad.clone()};
    };
    for (int wrt = 0; wrt < 3; ++wrt) {
      CAPTURE(stride);
      CAPTURE(wrt);
      Tensor target = wrt == 0 ? x : (wrt == 1 ? w : b);
      auto [val, grad] = run(x, w, b, wrt);
      auto f = [&](const Tensor& tv) {
        Tensor xs = wrt == 0 ? tv : x, ws = wrt == 1 ? tv : w,
               bs = wrt == 2 ? tv : b;
        Tape t;
        Var y = ops::conv2d(t, t.leaf(xs), t.leaf(ws), t.leaf(bs), k, stride,
                            ph / 2, pw / 2, oh, ow);
        return ops::mean(t, ops::square(t, y))->value.item();
      };
      CHECK(grad_check(f, target.clone(), grad) < 1e-6);
    }
  }
}

TEST_CASE("conv2d_transpose gradients match finite differences") {
  Rng rng(11);
  const int k = 5, ci = 3, co = 2, stride = 2;
  for (auto [oh, ow] : std::vector<std::pair<int, int>>{{8, 8}, {7, 9}}) {
    const int ih = conv_out(oh, stride), iw = conv_out(ow, stride);
    Tensor x = random_tensor({ih, iw, ci}, rng, -1.0, 1.0);
    Tensor w = random_tensor({k * k * co, ci, 1}, rng, -0.5, 0.5);
    Tensor b = random_tensor({1, 1, co}, rng, -0.1, 0.1);
    for (int wrt = 0; wrt < 3; ++wrt) {
      CAPTURE(oh);
      CAPTURE(wrt);
      Tape t;
      Var X = t.leaf(x, wrt == 0);
      Var W = t.leaf(w, wrt == 1);
      Var B = t.leaf(b, wrt == 2);
      Var y = ops::conv2d_transpose(t, X, W, B, k, stride, oh, ow);
      CHECK(y->value.h() == oh);
      CHECK(y->value.w() == ow);
      Var loss = ops::mean(t, ops::square(t, y));
      t.backward(loss);
      Var v = wrt == 0 ? X : (wrt == 1 ? W : B);
      Tensor grad = v->grad.clone();
      Tensor target = wrt == 0 ? x : (wrt == 1 ? w : b);
      auto f = [&](const Tensor& tv) {
        Tensor xs = wrt == 0 ? tv : x, ws = wrt == 1 ? tv : w,
               bs = wrt == 2 ? tv : b;
        Tape tt;
        Var y2 = ops::conv2d_transpose(tt, tt.leaf(xs), tt.leaf(ws),
                                       tt.leaf(bs), k, stride, oh, ow);
        return ops::mean(tt, ops::square(tt, y2))->value.item();
      };
      CHECK(grad_check(f, target.clone(), grad) < 1e-6);
    }
  }
}

TEST_CASE("gdn gradients match finite differences") {
  Rng rng(13);
  const int c = 4;
  Tensor x = random_tensor({3, 3, c}, rng, -1.5, 1.5);
  Tensor bh = random_tensor({1, 1, c}, rng, 0.5, 1.5);
  Tensor gh = random_tensor({c, c, 1}, rng, 0.05, 0.4);
  for (bool inverse : {false, true}) {
    for (int wrt = 0; wrt < 3; ++wrt) {
      CAPTURE(inverse);
      CAPTURE(wrt);
      Tape t;
      Var X = t.leaf(x, wrt == 0);
      Var B = t.leaf(bh, wrt == 1);
      Var G = t.leaf(gh, wrt == 2);
      Var y = ops::gdn(t, X, B, G, inverse);
      Var loss = ops::mean(t, ops::square(t, y));
      t.backward(loss);
      Var v = wrt == 0 ? X : (wrt == 1 ? B : G);
      Tensor grad = v->grad.clone();
      Tensor target = wrt == 0 ? x : (wrt == 1 ? bh : gh);
      auto f = [&](const Tensor& tv) {
        Tensor xs = wrt == 0 ? tv : x, bs = wrt == 1 ? tv : bh,
               gs = wrt == 2 ? tv : gh;
        Tape tt;
        Var y2 = ops::gdn(tt, tt.leaf(xs), tt.leaf(bs), tt.leaf(gs), inverse);
        return ops::mean(tt, ops::square(tt, y2))->value.item();
      };
      CHECK(grad_check(f, target.clone(), grad) < 1e-6);
    }
  }
}

TEST_CASE("gaussian_bits value and gradients") {
  // Unit Gaussian, symmetric unit bin around 0:
  // -log2(Phi(0.5) - Phi(-0.5)) = 1.3850857592405417 bits.
  Tape t;
  Var y = t.leaf(Tensor::scalar(0.0), true);
  Var mu = t.leaf(Tensor::scalar(0.0), false);
  Var sg = t.leaf(Tensor::scalar(1.0), false);
  Var bits = ops::gaussian_bits(t, y, mu, sg);
  const double expected = -std::log2(0.5 * std::erfc(-0.5 * M_SQRT1_2) -
                                     0.5 * std::erfc(0.5 * M_SQRT1_2));
  CHECK(bits->value.item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(bits->value.item() == doctest::Approx(1.3848665342909897).epsilon(1e-9));

  // Gradients w.r.t. y, mu, sigma all match finite differences.
  Rng rng(3);
  Tensor yv = random_tensor({2, 2, 3}, rng, -2.0, 2.0);
  Tensor mv = random_tensor({2, 2, 3}, rng, -1.0, 1.0);
  Tensor sv = random_tensor({2, 2, 3}, rng, 0.4, 2.0);
  for (int wrt = 0; wrt < 3; ++wrt) {
    CAPTURE(wrt);
    Tape tt;
    Var Y = tt.leaf(yv, wrt == 0);
    Var M = tt.leaf(mv, wrt == 1);
    Var S = tt.leaf(sv, wrt == 2);
    Var loss = ops::mean(tt, ops::gaussian_bits(tt, Y, M, S));
    tt.backward(loss);
    Var v = wrt == 0 ? Y : (wrt == 1 ? M : S);
    Tensor grad = v->grad.clone();
    Tensor target = wrt == 0 ? yv : (wrt == 1 ? mv : sv);
    auto f = [&](const Tensor& tv) {
      Tensor ys = wrt == 0 ? tv : yv, ms = wrt == 1 ? tv : mv,
             ss = wrt == 2 ? tv : sv;
      Tape t3;
      return ops::mean(t3, ops::gaussian_bits(t3, t3.leaf(ys), t3.leaf(ms),
                                              t3.leaf(ss)))
          ->value.item();
    };
    CHECK(grad_check(f, target.clone(), grad) < 1e-6);
  }

  // At the likelihood floor the bits are clamped, never NaN.
  Tape tf;
  Var yf = tf.leaf(Tensor::scalar(1e9), false);
  Var bf = ops::gaussian_bits(tf, yf, tf.leaf(Tensor::scalar(0.0)),
                              tf.leaf(Tensor::scalar(1.0)));
  CHECK(bf->value.item() == doctest::Approx(-std::log2(1e-9)).epsilon(1e-12));
  CHECK(std::isfinite(bf->value.item()));
}

TEST_CASE("depthwise_valid matches brute force and its gradient checks") {
  Rng rng(5);
  Tensor x = random_tensor({7, 8, 3}, rng);
  Tensor k(3, 3, 1);
  for (int i = 0; i < 9; ++i) k[i] = rng.uniform(-1, 1);

  Tape t;
  Var X = t.leaf(x, true);
  Var y = ops::depthwise_valid(t, X, k);
  // brute force
  for (int yy = 0; yy < 5; ++yy)
    for (int xx = 0; xx < 6; ++xx)
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            s += k[ky * 3 + kx] * x.at(yy + ky, xx + kx, c);
        CHECK(y->value.at(yy, xx, c) == doctest::Approx(s).epsilon(1e-12));
      }
  auto build = [&](Tape& tt, Var v) {
    return ops::mean(tt, ops::square(tt, ops::depthwise_valid(tt, v, k)));
  };
  CHECK(fd_vs_analytic(build, x) < 1e-6);
}

TEST_CASE("straight_through passes gradient unchanged") {
  Rng rng(9);
  Tensor x = random_tensor({4, 4, 3}, rng);
  Tensor forward = random_tensor({4, 4, 3}, rng);  // pretend codec output
  Tape t;
  Var X = t.leaf(x, true);
  Var st = ops::straight_through(t, X, forward);
  CHECK(st->value.at(1, 1, 1) == forward.at(1, 1, 1));
  Var loss = ops::mean(t, ops::square(t, st));
  t.backward(loss);
  // dL/dX == dL/d(st), bit for bit
  for (int64_t i = 0; i < x.size(); ++i) {
    const bool identical = X->grad[i] == st->grad[i];
    CHECK(identical);
  }
}

TEST_CASE("cross entropy matches manual softmax") {
  Tape t;
  Tensor logits(1, 1, 4);
  logits[0] = 0.3;
  logits[1] = -1.2;
  logits[2] = 2.0;
  logits[3] = 0.0;
  Var L = t.leaf(logits, true);
  Var ce = ops::cross_entropy_logits(t, L, 2);
  double z = 0;
  for (int i = 0; i < 4; ++i) z += std::exp(logits[i]);
  CHECK(ce->value.item() == doctest::Approx(-std::log(std::exp(2.0) / z)));
  t.backward(ce);
  for (int i = 0; i < 4; ++i) {
    const double soft = std::exp(logits[i]) / z;
    CHECK(L->grad[i] == doctest::Approx(soft - (i == 2 ? 1 : 0)).epsilon(1e-10));
  }
}

TEST_CASE("residual block and layers gradcheck end to end") {
  Rng rng(21);
  ResidualBlock rb("rb", 3, rng);
  Tensor x = random_tensor({5, 5, 3}, rng, -1, 1);
  auto build = [&](Tape& t, Var v) { return ops::mean(t, ops::square(t, rb(t, v))); };
  CHECK(fd_vs_analytic(build, x) < 1e-6);

  // Parameter gradients flow.
  Tape t;
  Var X = t.leaf(x, false);
  Var loss = ops::mean(t, ops::square(t, rb(t, X)));
  t.backward(loss);
  Var w1 = t.param(rb.conv1.w);
  CHECK_FALSE(w1->grad.empty());
}

TEST_CASE("adam determinism and basic descent") {
  auto make = [&](uint64_t seed) {
    Rng rng(seed);
    Parameter p;
    p.name = "p";
    p.value = random_tensor({1, 1, 8}, rng, -1, 1);
    return p;
  };
  Parameter p1 = make(3), p2 = make(3);
  Adam a1({&p1}), a2({&p2});
  for (int step = 0; step < 50; ++step) {
    for (auto* pr : {&p1, &p2}) {
      Adam& a = pr == &p1 ? a1 : a2;
      // grad of 0.5*|p|^2 is p
      std::vector<Tensor> g{pr->value.clone()};
      a.step(1e-2, g);
    }
  }
  for (int i = 0; i < 8; ++i) CHECK(p1.value[i] == p2.value[i]);
  double norm = 0;
  for (int i = 0; i < 8; ++i) norm += p1.value[i] * p1.value[i];
  CHECK(norm < 1.0);  // descended
}

TEST_CASE("image u8 round trip and resize") {
  Rng rng(2);
  Tensor t = random_tensor({10, 12, 3}, rng);
  ImageU8 img = tensor_to_u8(t);
  Tensor back = u8_to_tensor(img);
  for (int64_t i = 0; i < t.size(); ++i)
    CHECK(std::abs(back[i] - t[i]) <= 0.5 / 255.0 + 1e-12);
  ImageU8 up = bilinear_resize(img, 20, 24);
  CHECK(up.h == 20);
  CHECK(up.w == 24);
  ImageU8 same = bilinear_resize(img, 10, 12);
  for (size_t i = 0; i < same.rgb.size(); ++i) CHECK(same.rgb[i] == img.rgb[i]);
}
