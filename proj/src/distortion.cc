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

#include "prefilter/distortion.h"

#include <cmath>

namespace prefilter {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr double kMsssimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kCsFloor = 1e-12;

const Tensor& gauss_row() {
  static const Tensor k = [] {
    Tensor t(1, kWindow, 1);
    double s = 0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - (kWindow - 1) / 2.0;
      t[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
      s += t[i];
    }
    for (int i = 0; i < kWindow; ++i) t[i] /= s;
    return t;
  }();
  return k;
}

const Tensor& gauss_col() {
  static const Tensor k = [] {
    Tensor t(kWindow, 1, 1);
    const Tensor& row = gauss_row();
    for (int i = 0; i < kWindow; ++i) t[i] = row[i];
    return t;
  }();
  return k;
}

Var blur(Tape& t, Var x) {
  return ops::depthwise_valid(t, ops::depthwise_valid(t, x, gauss_row()),
                              gauss_col());
}

void check_pair(const Var a, const Var b, const char* where) {
  if (!(a->value.shape() == b->value.shape()))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                a->value.shape().str() + " vs " +
                                b->value.shape().str());
}

}  // namespace

double resolve_lambda_t(double lambda_t, double lambda_s) {
  if (lambda_t > 0) return lambda_t;
  return 500.0 * lambda_s;
}

Var mse_graph(Tape& t, Var a, Var b) {
  check_pair(a, b, "mse");
  return ops::mean(t, ops::square(t, ops::sub(t, a, b)));
}

double mse(const Tensor& a, const Tensor& b) {
  Tape t;
  return mse_graph(t, t.leaf(a), t.leaf(b))->value.item();
}

int max_msssim_scales(int h, int w) {
  int scales = 0;
  int m = std::min(h, w);
  while (scales < 5 && m >= kWindow) {
    ++scales;
    m /= 2;
  }
  return scales;
}

Var ms_ssim_graph(Tape& t, Var a, Var b, int scales) {
  check_pair(a, b, "ms_ssim");
  const int feasible = max_msssim_scales(a->value.h(), a->value.w());
  if (scales <= 0) scales = std::min(5, feasible);
  if (scales > feasible)
    throw std::invalid_argument(
        "ms_ssim: input " + a->value.shape().str() + " too small for " +
        std::to_string(scales) + " scales (supports " +
        std::to_string(feasible) + ")");
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += kMsssimWeights[s];

  Var result = nullptr;
  for (int s = 0; s < scales; ++s) {
    if (s > 0) {
      a = ops::avg_pool2(t, a);
      b = ops::avg_pool2(t, b);
    }
    Var mu1 = blur(t, a);
    Var mu2 = blur(t, b);
    Var s11 = ops::sub(t, blur(t, ops::mul(t, a, a)), ops::mul(t, mu1, mu1));
    Var s22 = ops::sub(t, blur(t, ops::mul(t, b, b)), ops::mul(t, mu2, mu2));
    Var s12 = ops::sub(t, blur(t, ops::mul(t, a, b)), ops::mul(t, mu1, mu2));

    Tensor c2 = Tensor::full(s12->value.shape(), kC2);
    Var cs = ops::div(t, ops::add_const(t, ops::scale(t, s12, 2.0), c2),
                      ops::add_const(t, ops::add(t, s11, s22), c2));
    Var term;
    if (s + 1 < scales) {
      term = cs;
    } else {
      Tensor c1 = Tensor::full(s12->value.shape(), kC1);
      Var l = ops::div(
          t, ops::add_const(t, ops::scale(t, ops::mul(t, mu1, mu2), 2.0), c1),
          ops::add_const(
              t, ops::add(t, ops::mul(t, mu1, mu1), ops::mul(t, mu2, mu2)), c1));
      term = ops::mul(t, l, cs);
    }
    Var m = ops::mean(t, ops::clamp_min(t, term, kCsFloor));
    Var p = ops::pow_const(t, m, kMsssimWeights[s] / wsum);
    result = result ? ops::mul(t, result, p) : p;
  }
  return result;
}

double ms_ssim(const Tensor& a, const Tensor& b, int scales) {
  Tape t;
  return ms_ssim_graph(t, t.leaf(a), t.leaf(b), scales)->value.item();
}

FeatureExtractor::FeatureExtractor(uint64_t seed) {
  Rng rng(derive_seed(seed, "feature_extractor"));
  conv1_ = Conv2d("fx.conv1", 3, 16, 3, 2, 2.0, rng);
  conv2_ = Conv2d("fx.conv2", 16, 32, 3, 2, 2.0, rng);
  conv3_ = Conv2d("fx.conv3", 32, 64, 3, 2, 2.0, rng);
  for (Parameter* p : params()) p->trainable = false;
}

std::vector<Var> FeatureExtractor::features(Tape& t, Var image) const {
  std::vector<Var> out;
  Var h = ops::relu(t, conv1_(t, image));
  out.push_back(h);
  h = ops::relu(t, conv2_(t, h));
  out.push_back(h);
  h = ops::relu(t, conv3_(t, h));
  out.push_back(h);
  return out;
}

ParamList FeatureExtractor::params() {
  ParamList p;
  conv1_.collect(p);
  conv2_.collect(p);
  conv3_.collect(p);
  return p;
}

Var perceptual_loss_graph(Tape& t, Var a, Var b, const FeatureExtractor& fx) {
  check_pair(a, b, "perceptual_loss");
  std::vector<Var> fa = fx.features(t, a);
  std::vector<Var> fb = fx.features(t, b);
  std::vector<std::pair<double, Var>> terms;
  const double w = 1.0 / double(fa.size());
  for (size_t i = 0; i < fa.size(); ++i)
    terms.emplace_back(w, ops::mean(t, ops::square(t, ops::sub(t, fa[i], fb[i]))));
  return ops::affine(t, terms);
}

double perceptual_loss(const Tensor& a, const Tensor& b,
                       const FeatureExtractor& fx) {
  Tape t;
  return perceptual_loss_graph(t, t.leaf(a), t.leaf(b), fx)->value.item();
}

std::string to_string(FilterMode m) {
  switch (m) {
    case FilterMode::kMsssimRetarget:
      return "msssim_retarget";
    case FilterMode::kGan:
      return "gan";
    case FilterMode::kTask:
      return "task";
  }
  return "?";
}

FilterMode filter_mode_from_string(const std::string& s) {
  if (s == "msssim_retarget" || s == "msssim") return FilterMode::kMsssimRetarget;
  if (s == "gan") return FilterMode::kGan;
  if (s == "task") return FilterMode::kTask;
  throw std::invalid_argument("unknown filter mode: " + s);
}

Var filter_loss(Tape& t, FilterMode mode, const FilterLossTerms& terms,
                const LossWeights& w) {
  auto need = [&](Var v, const char* name) {
    if (!v)
      throw std::invalid_argument("filter_loss(" + to_string(mode) +
                                  "): missing component " + name);
    if (v->value.size() != 1)
      throw std::invalid_argument("filter_loss: components must be scalar");
    return v;
  };
  switch (mode) {
    case FilterMode::kMsssimRetarget:
      return ops::affine(t,
                         {{1.0, need(terms.rate_bpp, "rate_bpp")},
                          {-w.lambda_t, need(terms.msssim, "msssim")}},
                         w.lambda_t);
    case FilterMode::kGan:
      return ops::affine(t, {{w.gamma_gan, need(terms.gan_loss, "gan_loss")},
                             {w.gamma_vgg, need(terms.vgg_loss, "vgg_loss")},
                             {w.gamma_mse, need(terms.mse_loss, "mse_loss")},
                             {1.0, need(terms.rate_bpp, "rate_bpp")}});
    case FilterMode::kTask:
      return ops::affine(t, {{1.0, need(terms.rate_bpp, "rate_bpp")},
                             {w.lambda_task, need(terms.task_ce, "task_ce")},
                             {w.gamma_mse, need(terms.mse_loss, "mse_loss")}});
  }
  throw std::logic_error("bad filter mode");
}

double msssim_db(double v) { return -10.0 * std::log10(1.0 - v); }

}  // namespace prefilter
