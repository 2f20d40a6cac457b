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

#include "prefilter/distortion.h"
#include "testutil.h"

using namespace prefilter;
using testutil::random_tensor;

namespace {

// Independent MS-SSIM reference: direct windowed statistics, no autodiff
// machinery. Mirrors the canonical definition (valid 11x11 Gaussian
// windows, per-channel stats, 2x2 mean downsampling, weights renormalized
// over the scales used).
constexpr double kRefWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::vector<double> ref_window() {
  std::vector<double> k(11 * 11);
  double sum = 0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const double dy = y - 5, dx = x - 5;
      k[size_t(y) * 11 + x] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
      sum += k[size_t(y) * 11 + x];
    }
  for (double& v : k) v /= sum;
  return k;
}

Tensor ref_downsample(const Tensor& t) {
  Tensor out(t.h() / 2, t.w() / 2, t.c());
  for (int y = 0; y < out.h(); ++y)
    for (int x = 0; x < out.w(); ++x)
      for (int c = 0; c < t.c(); ++c)
        out.at(y, x, c) =
            (t.at(2 * y, 2 * x, c) + t.at(2 * y, 2 * x + 1, c) +
             t.at(2 * y + 1, 2 * x, c) + t.at(2 * y + 1, 2 * x + 1, c)) /
            4.0;
  return out;
}

void ref_scale_stats(const Tensor& a, const Tensor& b, double* mean_cs,
                     double* mean_lcs) {
  const std::vector<double> win = ref_window();
  const double c1 = 1e-4, c2 = 9e-4;
  double cs_acc = 0, lcs_acc = 0;
  int64_t count = 0;
  for (int y = 0; y + 11 <= a.h(); ++y)
    for (int x = 0; x + 11 <= a.w(); ++x)
      for (int c = 0; c < a.c(); ++c) {
        double m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
        for (int ky = 0; ky < 11; ++ky)
          for (int kx = 0; kx < 11; ++kx) {
            const double w = win[size_t(ky) * 11 + kx];
            const double va = a.at(y + ky, x + kx, c);
            const double vb = b.at(y + ky, x + kx, c);
            m1 += w * va;
            m2 += w * vb;
            s11 += w * va * va;
            s22 += w * vb * vb;
            s12 += w * va * vb;
          }
        s11 -= m1 * m1;
        s22 -= m2 * m2;
        s12 -= m1 * m2;
        const double cs = (2 * s12 + c2) / (s11 + s22 + c2);
        const double l = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        cs_acc += std::max(cs, 1e-12);
        lcs_acc += std::max(l * cs, 1e-12);
        ++count;
      }
  *mean_cs = cs_acc / double(count);
  *mean_lcs = lcs_acc / double(count);
}

double msssim_reference(Tensor a, Tensor b, int scales) {
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += kRefWeights[s];
  double result = 1.0;
  for (int s = 0; s < scales; ++s) {
    if (s > 0) {
      a = ref_downsample(a);
      b = ref_downsample(b);
    }
    double mean_cs = 0, mean_lcs = 0;
    ref_scale_stats(a, b, &mean_cs, &mean_lcs);
    const double term = (s + 1 < scales) ? mean_cs : mean_lcs;
    result *= std::pow(term, kRefWeights[s] / wsum);
  }
  return result;
}

Tensor perturb(const Tensor& t, Rng& rng, double amp) {
  Tensor out = t.clone();
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(out[i] + rng.uniform(-amp, amp), 0.0, 1.0);
  return out;
}

}  // namespace

TEST_CASE("mse identities and brute force equality") {
  Rng rng(1);
  Tensor x = random_tensor({9, 7, 3}, rng);
  CHECK(mse(x, x) == 0.0);

  Tensor zeros = Tensor::zeros({4, 4, 3});
  Tensor ones = Tensor::full({4, 4, 3}, 1.0);
  CHECK(mse(zeros, ones) == 1.0);

  Tensor y = random_tensor({9, 7, 3}, rng);
  double acc = 0;
  for (int yy = 0; yy < 9; ++yy)
    for (int xx = 0; xx < 7; ++xx)
      for (int c = 0; c < 3; ++c) {
        const double d = x.at(yy, xx, c) - y.at(yy, xx, c);
        acc += d * d;
      }
  acc /= 9 * 7 * 3;
  CHECK(mse(x, y) == doctest::Approx(acc).epsilon(1e-14));

  CHECK_THROWS(mse(x, Tensor::zeros({9, 8, 3})));
}

TEST_CASE("ms_ssim identity and reference cross-check") {
  Rng rng(2);
  Tensor x = random_tensor({64, 64, 3}, rng);
  CHECK(ms_ssim(x, x) == 1.0);  // exact

  // 20 random pairs vs the independent implementation, within 1e-6.
  for (int i = 0; i < 20; ++i) {
    const int h = 44 + (i % 3) * 10, w = 48 + (i % 4) * 8;
    Tensor a = random_tensor({h, w, 3}, rng);
    Tensor b = perturb(a, rng, 0.05 + 0.01 * i);
    const int scales = max_msssim_scales(h, w);
    const double ours = ms_ssim(a, b, scales);
    const double ref = msssim_reference(a, b, scales);
    CHECK(std::abs(ours - ref) < 1e-6);
  }
}

TEST_CASE("ms_ssim scale selection and errors") {
  CHECK(max_msssim_scales(176, 176) == 5);
  CHECK(max_msssim_scales(175, 176) == 4);
  CHECK(max_msssim_scales(64, 64) == 3);
  CHECK(max_msssim_scales(11, 11) == 1);
  CHECK(max_msssim_scales(10, 64) == 0);

  Rng rng(3);
  Tensor a = random_tensor({64, 64, 3}, rng);
  Tensor b = random_tensor({64, 64, 3}, rng);
  CHECK_THROWS(ms_ssim(a, b, 5));  // too small for an explicit 5-scale request
  CHECK_NOTHROW(ms_ssim(a, b, 3));
  CHECK_NOTHROW(ms_ssim(a, b));  // auto-reduced
}

TEST_CASE("ms_ssim gradient matches finite differences") {
  Rng rng(4);
  // 48x48 keeps the FD loop affordable; 2 scales exercise the full path.
  Tensor a = random_tensor({48, 48, 1}, rng, 0.2, 0.8);
  Tensor b = perturb(a, rng, 0.1);

  Tape t;
  Var av = t.leaf(a, true);
  Var bv = t.leaf(b, false);
  Var ms = ms_ssim_graph(t, av, bv, 2);
  t.backward(ms);
  Tensor grad = av->grad.clone();

  auto f = [&](const Tensor& xt) {
    Tape tt;
    return ms_ssim_graph(tt, tt.leaf(xt), tt.leaf(b), 2)->value.item();
  };
  // Spot check a subset of coordinates (full FD over 2304 pixels is slow).
  Rng pick(5);
  double worst = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int64_t i = pick.next() % a.size();
    Tensor xp = a.clone();
    const double h = 1e-5;
    xp[i] = a[i] + h;
    const double fp = f(xp);
    xp[i] = a[i] - h;
    const double fm = f(xp);
    const double fd = (fp - fm) / (2 * h);
    const double err =
        std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("perceptual loss basics") {
  FeatureExtractor fx(99);
  Rng rng(6);
  Tensor a = random_tensor({32, 32, 3}, rng);
  Tensor b = perturb(a, rng, 0.2);
  CHECK(perceptual_loss(a, a, fx) == 0.0);
  const double ab = perceptual_loss(a, b, fx);
  const double ba = perceptual_loss(b, a, fx);
  CHECK(ab > 0.0);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
}

TEST_CASE("lambda_t mapping is exact") {
  CHECK(resolve_lambda_t(0, 0.1) == 50.0);
  CHECK(resolve_lambda_t(0, 0.2) == 100.0);
  CHECK(resolve_lambda_t(0, 0.4) == 200.0);
  CHECK(resolve_lambda_t(77.0, 0.4) == 77.0);  // explicit value wins
}

TEST_CASE("filter_loss composition per mode") {
  Tape t;
  Var rate = t.leaf(Tensor::scalar(0.75));
  Var msssim = t.leaf(Tensor::scalar(0.9));
  Var gan = t.leaf(Tensor::scalar(0.25));
  Var vgg = t.leaf(Tensor::scalar(2.0));
  Var l2 = t.leaf(Tensor::scalar(0.01));
  Var ce = t.leaf(Tensor::scalar(1.5));

  LossWeights w;
  w.lambda_t = resolve_lambda_t(0, 0.2);

  FilterLossTerms terms;
  terms.rate_bpp = rate;
  terms.msssim = msssim;
  Var lm = filter_loss(t, FilterMode::kMsssimRetarget, terms, w);
  CHECK(lm->value.item() == doctest::Approx(0.75 + 100.0 * 0.1).epsilon(1e-12));

  terms.gan_loss = gan;
  terms.vgg_loss = vgg;
  terms.mse_loss = l2;
  Var lg = filter_loss(t, FilterMode::kGan, terms, w);
  CHECK(lg->value.item() ==
        doctest::Approx(5.0 * 0.25 + 0.01 * 2.0 + 0.001 * 0.01 + 0.75)
            .epsilon(1e-12));

  terms.task_ce = ce;
  Var lt = filter_loss(t, FilterMode::kTask, terms, w);
  CHECK(lt->value.item() ==
        doctest::Approx(0.75 + 1.0 * 1.5 + 0.001 * 0.01).epsilon(1e-12));

  // All gammas zero and lambda_t = 0 collapses to the rate term.
  LossWeights zero;
  zero.gamma_gan = zero.gamma_vgg = zero.gamma_mse = 0.0;
  zero.lambda_t = 0;  // would auto-derive; force explicit zero here
  FilterLossTerms rt;
  rt.rate_bpp = rate;
  rt.msssim = msssim;
  LossWeights zw = zero;
  zw.lambda_t = 0.0;
  Var lz = filter_loss(t, FilterMode::kMsssimRetarget, rt, zw);
  CHECK(lz->value.item() == 0.75);

  // Linearity in each weighted component.
  FilterLossTerms t2 = terms;
  t2.gan_loss = t.leaf(Tensor::scalar(0.25 + 1.0));
  Var lg2 = filter_loss(t, FilterMode::kGan, t2, w);
  CHECK(lg2->value.item() - lg->value.item() == doctest::Approx(5.0).epsilon(1e-12));

  // Missing component is rejected.
  FilterLossTerms missing;
  missing.rate_bpp = rate;
  CHECK_THROWS_AS(filter_loss(t, FilterMode::kGan, missing, w),
                  std::invalid_argument);
}

TEST_CASE("msssim db helper") {
  CHECK(msssim_db(0.9) == doctest::Approx(10.0));
  CHECK(msssim_db(0.99) == doctest::Approx(20.0));
}
