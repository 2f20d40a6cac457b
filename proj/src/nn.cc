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

#include "prefilter/nn.h"

#include <cmath>

namespace prefilter {

Var Tape::param(Parameter& p) {
  auto it = param_cache_.find(&p);
  if (it != param_cache_.end()) return it->second;
  Var v = leaf(p.value, p.trainable);
  param_cache_.emplace(&p, v);
  return v;
}

void init_normal(Tensor& t, int fan_in, double gain, Rng& rng) {
  const double stddev = std::sqrt(gain / double(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
}

Conv2d::Conv2d(std::string name, int in_c, int out_c, int k, int stride,
               double gain, Rng& rng, PadKind pad)
    : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
  if (pad == PadKind::kSymmetric && stride != 1)
    throw std::invalid_argument("Conv2d: symmetric padding needs stride 1");
  w.name = name + ".w";
  w.value = Tensor(k * k * in_c, out_c, 1);
  init_normal(w.value, k * k * in_c, gain, rng);
  b.name = name + ".b";
  b.value = Tensor(1, 1, out_c);
}

Var Conv2d::operator()(Tape& t, Var x) const {
  const int ih = x->value.h(), iw = x->value.w();
  const int oh = conv_out(ih, stride_), ow = conv_out(iw, stride_);
  const int pad_h = std::max(0, (oh - 1) * stride_ + k_ - ih);
  const int pad_w = std::max(0, (ow - 1) * stride_ + k_ - iw);
  Var in = x;
  int pt = pad_h / 2, pl = pad_w / 2;
  if (pad_ == PadKind::kSymmetric && (pad_h || pad_w)) {
    in = ops::pad_symmetric(t, x, pad_h / 2, pad_h - pad_h / 2, pad_w / 2,
                            pad_w - pad_w / 2);
    pt = pl = 0;
  }
  return ops::conv2d(t, in, t.param(const_cast<Parameter&>(w)),
                     t.param(const_cast<Parameter&>(b)), k_, stride_, pt, pl,
                     oh, ow);
}

void Conv2d::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

ConvTranspose2d::ConvTranspose2d(std::string name, int in_c, int out_c, int k,
                                 int stride, double gain, Rng& rng)
    : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride) {
  w.name = name + ".w";
  w.value = Tensor(k * k * out_c, in_c, 1);
  init_normal(w.value, k * k * in_c / (stride * stride), gain, rng);
  b.name = name + ".b";
  b.value = Tensor(1, 1, out_c);
}

Var ConvTranspose2d::operator()(Tape& t, Var x, int out_h, int out_w) const {
  return ops::conv2d_transpose(t, x, t.param(const_cast<Parameter&>(w)),
                               t.param(const_cast<Parameter&>(b)), k_, stride_,
                               out_h, out_w);
}

void ConvTranspose2d::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

GdnLayer::GdnLayer(std::string name, int channels, bool inverse)
    : inverse_(inverse) {
  beta_hat.name = name + ".beta_hat";
  beta_hat.value = Tensor::full({1, 1, channels}, 1.0);
  gamma_hat.name = name + ".gamma_hat";
  gamma_hat.value = Tensor(channels, channels, 1);
  for (int i = 0; i < channels; ++i)
    for (int j = 0; j < channels; ++j)
      gamma_hat.value[int64_t(i) * channels + j] =
          (i == j) ? std::sqrt(0.1) : std::sqrt(2.5e-3);
}

Var GdnLayer::operator()(Tape& t, Var x) const {
  return ops::gdn(t, x, t.param(const_cast<Parameter&>(beta_hat)),
                  t.param(const_cast<Parameter&>(gamma_hat)), inverse_);
}

void GdnLayer::collect(ParamList& out) {
  out.push_back(&beta_hat);
  out.push_back(&gamma_hat);
}

ResidualBlock::ResidualBlock(std::string name, int channels, Rng& rng,
                             PadKind pad)
    : conv1(name + ".conv1", channels, channels, 3, 1, 2.0, rng, pad),
      conv2(name + ".conv2", channels, channels, 3, 1, 2.0, rng, pad) {}

Var ResidualBlock::operator()(Tape& t, Var x) const {
  Var h = conv1(t, ops::relu(t, x));
  h = conv2(t, ops::relu(t, h));
  return ops::add(t, x, h);
}

void ResidualBlock::collect(ParamList& out) {
  conv1.collect(out);
  conv2.collect(out);
}

Adam::Adam(ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i] = Tensor::zeros(params_[i]->value.shape());
    v_[i] = Tensor::zeros(params_[i]->value.shape());
  }
}

void Adam::step(double lr, const std::vector<Tensor>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i]->trainable || grads[i].empty()) continue;
    Tensor& p = params_[i]->value;
    const Tensor& g = grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p[j] -= lr * mh / (std::sqrt(vh) + eps_);
    }
  }
}

uint64_t params_hash(const ParamList& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Parameter* p : params) {
    h = hash_str(h, p->name);
    h = fnv1a(p->value.data(), sizeof(double) * p->value.size(), h);
  }
  return h;
}

}  // namespace prefilter
