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

#include "prefilter/surrogate.h"

#include <cmath>

#include "prefilter/image.h"

namespace prefilter {

namespace {

constexpr double kSigmaFloor = 0.01;

Tensor uniform_noise(Shape s, uint64_t seed) {
  Rng rng(seed);
  Tensor n(s);
  for (int64_t i = 0; i < n.size(); ++i) n[i] = rng.uniform() - 0.5;
  return n;
}

Tensor round_tensor(const Tensor& t) {
  Tensor r(t.shape());
  for (int64_t i = 0; i < t.size(); ++i) r[i] = std::nearbyint(t[i]);
  return r;
}

Var quantize(Tape& t, Var y, QuantMode mode, uint64_t seed) {
  switch (mode) {
    case QuantMode::kNoise:
      return ops::add_const(t, y, uniform_noise(y->value.shape(), seed));
    case QuantMode::kRound:
      return ops::straight_through(t, y, round_tensor(y->value));
    case QuantMode::kNone:
      return y;
  }
  throw std::logic_error("bad quant mode");
}

}  // namespace

std::string to_string(DistortionKind d) {
  return d == DistortionKind::kMse ? "mse" : "ms_ssim";
}

DistortionKind distortion_from_string(const std::string& s) {
  if (s == "mse") return DistortionKind::kMse;
  if (s == "ms_ssim" || s == "msssim") return DistortionKind::kMsSsim;
  throw std::invalid_argument("unknown distortion: " + s);
}

void check_image_input(const Tensor& image, const char* where) {
  if (image.c() != 3)
    throw std::invalid_argument(std::string(where) + ": expected 3 channels, got " +
                                std::to_string(image.c()));
  if (image.h() < 8 || image.w() < 8)
    throw std::invalid_argument(std::string(where) + ": minimum size is 8x8, got " +
                                image.shape().str());
  if (!image.all_finite())
    throw std::invalid_argument(std::string(where) + ": non-finite input values");
}

SurrogateModel::SurrogateModel(const SurrogateConfig& cfg) : cfg_(cfg) {
  if (cfg.latent_channels <= 0 || cfg.hidden_channels <= 0)
    throw std::invalid_argument("surrogate: channel counts must be positive");
  if (cfg.lambda_s <= 0)
    throw std::invalid_argument("surrogate: lambda_s must be positive");
  const int n = cfg.hidden_channels, c = cfg.latent_channels;
  Rng rng(derive_seed(cfg.seed, "surrogate_init"));
  enc1_ = Conv2d("enc1", 3, n, 5, 2, 1.0, rng);
  gdn1_ = GdnLayer("gdn1", n, false);
  enc2_ = Conv2d("enc2", n, n, 5, 2, 1.0, rng);
  gdn2_ = GdnLayer("gdn2", n, false);
  enc3_ = Conv2d("enc3", n, n, 5, 2, 1.0, rng);
  gdn3_ = GdnLayer("gdn3", n, false);
  enc4_ = Conv2d("enc4", n, c, 5, 2, 1.0, rng);

  dec1_ = ConvTranspose2d("dec1", c, n, 5, 2, 1.0, rng);
  igdn1_ = GdnLayer("igdn1", n, true);
  dec2_ = ConvTranspose2d("dec2", n, n, 5, 2, 1.0, rng);
  igdn2_ = GdnLayer("igdn2", n, true);
  dec3_ = ConvTranspose2d("dec3", n, n, 5, 2, 1.0, rng);
  igdn3_ = GdnLayer("igdn3", n, true);
  dec4_ = ConvTranspose2d("dec4", n, 3, 5, 2, 1.0, rng);

  hyper_enc1_ = Conv2d("hyper_enc1", c, n, 3, 1, 2.0, rng);
  hyper_enc2_ = Conv2d("hyper_enc2", n, n, 5, 2, 2.0, rng);
  hyper_enc3_ = Conv2d("hyper_enc3", n, n, 5, 2, 1.0, rng);
  hyper_dec1_ = ConvTranspose2d("hyper_dec1", n, n, 5, 2, 2.0, rng);
  hyper_dec2_ = ConvTranspose2d("hyper_dec2", n, n, 5, 2, 2.0, rng);
  hyper_dec3_ = Conv2d("hyper_dec3", n, 2 * c, 3, 1, 1.0, rng);
  // Initial conditional scale ~1: softplus(0.54) + 0.01.
  for (int i = c; i < 2 * c; ++i) hyper_dec3_.b.value[i] = 0.54;

  z_mean_.name = "z_mean";
  z_mean_.value = Tensor(1, 1, n);
  z_raw_scale_.name = "z_raw_scale";
  z_raw_scale_.value = Tensor::full({1, 1, n}, 0.54);
}

ParamList SurrogateModel::params() {
  ParamList p = encoder_params();
  dec1_.collect(p);
  igdn1_.collect(p);
  dec2_.collect(p);
  igdn2_.collect(p);
  dec3_.collect(p);
  igdn3_.collect(p);
  dec4_.collect(p);
  hyper_enc1_.collect(p);
  hyper_enc2_.collect(p);
  hyper_enc3_.collect(p);
  hyper_dec1_.collect(p);
  hyper_dec2_.collect(p);
  hyper_dec3_.collect(p);
  p.push_back(&z_mean_);
  p.push_back(&z_raw_scale_);
  return p;
}

ParamList SurrogateModel::encoder_params() {
  ParamList p;
  enc1_.collect(p);
  gdn1_.collect(p);
  enc2_.collect(p);
  gdn2_.collect(p);
  enc3_.collect(p);
  gdn3_.collect(p);
  enc4_.collect(p);
  return p;
}

Var SurrogateModel::build_encoder(Tape& t, Var x) const {
  x = gdn1_(t, enc1_(t, x));
  x = gdn2_(t, enc2_(t, x));
  x = gdn3_(t, enc3_(t, x));
  return enc4_(t, x);
}

SurrogateModel::Graph SurrogateModel::build_rate_graph(Tape& t, Var image,
                                                       QuantMode mode,
                                                       uint64_t noise_seed) const {
  Graph g;
  g.orig_h = image->value.h();
  g.orig_w = image->value.w();
  const int pb = pad_to_multiple(g.orig_h, 16);
  const int pr = pad_to_multiple(g.orig_w, 16);
  g.padded_h = g.orig_h + pb;
  g.padded_w = g.orig_w + pr;
  Var padded = (pb || pr) ? ops::pad_symmetric(t, image, 0, pb, 0, pr) : image;
  g.padded_image = padded;

  Var y = build_encoder(t, padded);
  g.y_hat = quantize(t, y, mode, derive_seed(noise_seed, "noise_y"));

  // Hyper latent from the continuous code.
  Var z = ops::relu(t, hyper_enc1_(t, y));
  z = ops::relu(t, hyper_enc2_(t, z));
  z = hyper_enc3_(t, z);
  g.z_hat = quantize(t, z, mode, derive_seed(noise_seed, "noise_z"));

  const int lh = y->value.h(), lw = y->value.w();
  Var h = ops::relu(t, hyper_dec1_(t, g.z_hat, conv_out(lh, 2), conv_out(lw, 2)));
  h = ops::relu(t, hyper_dec2_(t, h, lh, lw));
  h = hyper_dec3_(t, h);
  const int c = cfg_.latent_channels;
  // Split 2C channels into mean and raw scale.
  {
    Tensor mu_v(lh, lw, c), rs_v(lh, lw, c);
    for (int64_t p = 0; p < int64_t(lh) * lw; ++p)
      for (int ch = 0; ch < c; ++ch) {
        mu_v[p * c + ch] = h->value[p * 2 * c + ch];
        rs_v[p * c + ch] = h->value[p * 2 * c + c + ch];
      }
    Var hsrc = h;
    g.mu = t.make(std::move(mu_v), h->requires_grad, [hsrc, c, lh, lw](Node& n) {
      if (!hsrc->requires_grad) return;
      Tape::ensure_grad(hsrc);
      for (int64_t p = 0; p < int64_t(lh) * lw; ++p)
        for (int ch = 0; ch < c; ++ch)
          hsrc->grad[p * 2 * c + ch] += n.grad[p * c + ch];
    });
    Var raw = t.make(std::move(rs_v), h->requires_grad, [hsrc, c, lh, lw](Node& n) {
      if (!hsrc->requires_grad) return;
      Tape::ensure_grad(hsrc);
      for (int64_t p = 0; p < int64_t(lh) * lw; ++p)
        for (int ch = 0; ch < c; ++ch)
          hsrc->grad[p * 2 * c + c + ch] += n.grad[p * c + ch];
    });
    Tensor floor_t = Tensor::full({lh, lw, c}, kSigmaFloor);
    g.sigma = ops::add_const(t, ops::softplus(t, raw), floor_t);
  }
  g.bits_y = ops::gaussian_bits(t, g.y_hat, g.mu, g.sigma);

  // Factorized per-channel Gaussian prior over the hyper latent.
  const int zh = g.z_hat->value.h(), zw = g.z_hat->value.w();
  Var zm = ops::broadcast_c(t, t.param(const_cast<Parameter&>(z_mean_)), zh, zw);
  Var zs = ops::broadcast_c(
      t,
      ops::add(t, ops::softplus(t, t.param(const_cast<Parameter&>(z_raw_scale_))),
               t.leaf(Tensor::full({1, 1, z_mean_.value.c()}, kSigmaFloor))),
      zh, zw);
  g.bits_z = ops::gaussian_bits(t, g.z_hat, zm, zs);

  const double inv_pix = 1.0 / (double(g.orig_h) * g.orig_w);
  g.y_bpp = ops::scale(t, ops::sum(t, g.bits_y), inv_pix);
  g.total_bpp = ops::affine(
      t, {{inv_pix, ops::sum(t, g.bits_y)}, {inv_pix, ops::sum(t, g.bits_z)}});
  return g;
}

Var SurrogateModel::build_decode(Tape& t, const Graph& g, bool clamp) const {
  const int ph = g.padded_h, pw = g.padded_w;
  Var x = igdn1_(t, dec1_(t, g.y_hat, ph / 8, pw / 8));
  x = igdn2_(t, dec2_(t, x, ph / 4, pw / 4));
  x = igdn3_(t, dec3_(t, x, ph / 2, pw / 2));
  x = dec4_(t, x, ph, pw);
  if (clamp) x = ops::clamp01(t, x);
  if (ph != g.orig_h || pw != g.orig_w)
    x = ops::crop(t, x, 0, 0, g.orig_h, g.orig_w);
  return x;
}

LatentCode SurrogateModel::encode(const Tensor& image, QuantMode mode,
                                  uint64_t noise_seed) const {
  check_image_input(image, "surrogate.encode");
  Tape t;
  Var img = t.leaf(image, false);
  Graph g = build_rate_graph(t, img, mode, noise_seed);
  LatentCode code;
  code.values = g.y_hat->value.clone();
  code.side_info = g.z_hat->value.clone();
  code.mode = mode;
  code.orig_h = g.orig_h;
  code.orig_w = g.orig_w;
  code.padded_h = g.padded_h;
  code.padded_w = g.padded_w;
  return code;
}

EntropyMap SurrogateModel::entropy_estimate(const LatentCode& latent) const {
  const int lh = latent.values.h(), lw = latent.values.w();
  const int c = cfg_.latent_channels;
  if (latent.values.c() != c)
    throw std::invalid_argument("entropy_estimate: latent channels mismatch");
  Tape t;
  Var z_hat = t.leaf(latent.side_info, false);
  Var h = ops::relu(t, hyper_dec1_(t, z_hat, conv_out(lh, 2), conv_out(lw, 2)));
  h = ops::relu(t, hyper_dec2_(t, h, lh, lw));
  h = hyper_dec3_(t, h);
  Tensor mu(lh, lw, c), sigma(lh, lw, c);
  for (int64_t p = 0; p < int64_t(lh) * lw; ++p)
    for (int ch = 0; ch < c; ++ch) {
      mu[p * c + ch] = h->value[p * 2 * c + ch];
      const double raw = h->value[p * 2 * c + c + ch];
      sigma[p * c + ch] =
          kSigmaFloor + (raw > 30.0 ? raw : std::log1p(std::exp(raw)));
    }
  Var bits = ops::gaussian_bits(t, t.leaf(latent.values), t.leaf(mu), t.leaf(sigma));
  return EntropyMap{bits->value.clone()};
}

RateResult SurrogateModel::rate(const EntropyMap& entropy, int orig_h,
                                int orig_w) {
  RateResult r;
  r.total_bits = entropy.bits.sum();
  r.bpp = r.total_bits / (double(orig_h) * orig_w);
  return r;
}

Tensor SurrogateModel::decode(const LatentCode& latent) const {
  if (latent.values.c() != cfg_.latent_channels)
    throw std::invalid_argument("decode: latent shape mismatch");
  Tape t;
  Graph g;
  g.y_hat = t.leaf(latent.values, false);
  g.orig_h = latent.orig_h;
  g.orig_w = latent.orig_w;
  g.padded_h = latent.padded_h;
  g.padded_w = latent.padded_w;
  Var out = build_decode(t, g, /*clamp=*/true);
  return out->value.clone();
}

void SurrogateModel::save(const std::string& path, int64_t iterations,
                          nlohmann::json extra) const {
  nlohmann::json meta = std::move(extra);
  meta["type"] = "surrogate";
  meta["latent_channels"] = cfg_.latent_channels;
  meta["hidden_channels"] = cfg_.hidden_channels;
  meta["lambda_s"] = cfg_.lambda_s;
  meta["distortion"] = to_string(cfg_.distortion);
  meta["seed"] = cfg_.seed;
  meta["iterations"] = iterations;
  save_checkpoint(path, meta, const_cast<SurrogateModel*>(this)->params());
}

SurrogateConfig SurrogateModel::config_from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("type", "") != "surrogate")
    throw std::runtime_error("not a surrogate checkpoint");
  SurrogateConfig cfg;
  cfg.latent_channels = ck.meta.at("latent_channels").get<int>();
  cfg.hidden_channels = ck.meta.at("hidden_channels").get<int>();
  cfg.lambda_s = ck.meta.at("lambda_s").get<double>();
  cfg.distortion = distortion_from_string(ck.meta.at("distortion").get<std::string>());
  cfg.seed = ck.meta.at("seed").get<uint64_t>();
  return cfg;
}

SurrogateModel SurrogateModel::load(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  SurrogateModel m(config_from_checkpoint(ck));
  restore_params(ck, m.params());
  return m;
}

}  // namespace prefilter
