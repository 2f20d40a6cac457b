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

#include "prefilter/filter.h"

#include <cmath>

#include "prefilter/image.h"

namespace prefilter {

std::string to_string(InitMode m) {
  return m == InitMode::kStandard ? "standard" : "low_variance";
}

InitMode init_mode_from_string(const std::string& s) {
  if (s == "standard") return InitMode::kStandard;
  if (s == "low_variance") return InitMode::kLowVariance;
  throw std::invalid_argument("unknown init mode: " + s);
}

Filter::Filter(std::shared_ptr<const SurrogateModel> surrogate, FilterConfig cfg)
    : surrogate_(std::move(surrogate)), cfg_(std::move(cfg)) {
  if (cfg_.up_channels.size() != 4)
    throw std::invalid_argument("filter: need exactly 4 upsampling stages");
  if (cfg_.up_channels.back() != 16)
    throw std::invalid_argument("filter: last upsampling stage must emit 16 features");
  Rng rng(derive_seed(cfg_.seed, "filter_init"));
  int in_c = surrogate_->config().latent_channels;
  for (int s = 0; s < 4; ++s) {
    up_[s] = ConvTranspose2d("filter.up" + std::to_string(s), in_c,
                             cfg_.up_channels[size_t(s)], 5, 2, 2.0, rng);
    in_c = cfg_.up_channels[size_t(s)];
  }
  trunk_in_ = Conv2d("filter.trunk_in", 3 + 16, cfg_.trunk_channels, 3, 1, 2.0,
                     rng, PadKind::kSymmetric);
  for (int i = 0; i < cfg_.trunk_blocks; ++i)
    blocks_.emplace_back("filter.rb" + std::to_string(i), cfg_.trunk_channels,
                         rng, PadKind::kSymmetric);
  trunk_out_ = Conv2d("filter.trunk_out", cfg_.trunk_channels, 3, 3, 1, 1.0,
                      rng, PadKind::kSymmetric);
  if (cfg_.zero_output_conv) {
    for (int64_t i = 0; i < trunk_out_.w.value.size(); ++i)
      trunk_out_.w.value[i] = 0.0;
  } else if (cfg_.init_mode == InitMode::kLowVariance) {
    for (int64_t i = 0; i < trunk_out_.w.value.size(); ++i)
      trunk_out_.w.value[i] *= 1e-3;
  }
  // Output conv bias stays zero in every mode.
}

Var Filter::entropy_to_pixel_graph(Tape& t, Var entropy, int out_h,
                                   int out_w) const {
  if (entropy->value.c() != surrogate_->config().latent_channels)
    throw std::invalid_argument("entropy_to_pixel: channel mismatch");
  if ((out_h + 15) / 16 != entropy->value.h() ||
      (out_w + 15) / 16 != entropy->value.w())
    throw std::invalid_argument("entropy_to_pixel: spatial mismatch");
  Var h = entropy;
  for (int s = 0; s < 4; ++s) {
    const int th = out_h >> (3 - s), tw = out_w >> (3 - s);
    h = up_[s](t, h, s == 3 ? out_h : th, s == 3 ? out_w : tw);
    if (s < 3) h = ops::relu(t, h);
  }
  return h;
}

Var Filter::apply_graph(Tape& t, Var image) const {
  check_image_input(image->value, "filter.apply");
  auto g = surrogate_->build_rate_graph(t, image, QuantMode::kRound, 0);
  Var pixel_entropy = entropy_to_pixel_graph(t, g.bits_y, g.padded_h, g.padded_w);
  Var h = ops::concat_c(t, g.padded_image, pixel_entropy);
  h = trunk_in_(t, h);
  for (const auto& rb : blocks_) h = rb(t, h);
  Var residual = trunk_out_(t, h);
  Var out = ops::clamp01(t, ops::add(t, g.padded_image, residual));
  if (g.padded_h != g.orig_h || g.padded_w != g.orig_w)
    out = ops::crop(t, out, 0, 0, g.orig_h, g.orig_w);
  return out;
}

Tensor Filter::apply(const Tensor& image) const {
  Tape t;
  return apply_graph(t, t.leaf(image))->value.clone();
}

ParamList Filter::params() {
  ParamList p;
  for (int s = 0; s < 4; ++s) up_[s].collect(p);
  trunk_in_.collect(p);
  for (auto& rb : blocks_) rb.collect(p);
  trunk_out_.collect(p);
  return p;
}

void Filter::save(const std::string& path, uint64_t surrogate_file_hash,
                  int64_t iterations, nlohmann::json extra) const {
  nlohmann::json meta = std::move(extra);
  meta["type"] = "filter";
  meta["surrogate_hash"] = surrogate_file_hash;
  meta["up_channels"] = cfg_.up_channels;
  meta["trunk_channels"] = cfg_.trunk_channels;
  meta["trunk_blocks"] = cfg_.trunk_blocks;
  meta["init_mode"] = to_string(cfg_.init_mode);
  meta["zero_output_conv"] = cfg_.zero_output_conv;
  meta["seed"] = cfg_.seed;
  meta["iterations"] = iterations;
  save_checkpoint(path, meta, const_cast<Filter*>(this)->params());
}

FilterConfig Filter::config_from_checkpoint(const Checkpoint& ck) {
  if (ck.meta.value("type", "") != "filter")
    throw std::runtime_error("not a filter checkpoint");
  FilterConfig cfg;
  cfg.up_channels = ck.meta.at("up_channels").get<std::vector<int>>();
  cfg.trunk_channels = ck.meta.at("trunk_channels").get<int>();
  cfg.trunk_blocks = ck.meta.at("trunk_blocks").get<int>();
  cfg.init_mode = init_mode_from_string(ck.meta.at("init_mode").get<std::string>());
  cfg.zero_output_conv = ck.meta.at("zero_output_conv").get<bool>();
  cfg.seed = ck.meta.at("seed").get<uint64_t>();
  return cfg;
}

Filter Filter::load(const std::string& path,
                    std::shared_ptr<const SurrogateModel> surrogate,
                    uint64_t surrogate_file_hash) {
  Checkpoint ck = load_checkpoint(path);
  const auto stored = ck.meta.at("surrogate_hash").get<uint64_t>();
  if (stored != surrogate_file_hash)
    throw std::runtime_error(
        "filter checkpoint was trained against a different surrogate "
        "checkpoint (content hash mismatch)");
  Filter f(std::move(surrogate), config_from_checkpoint(ck));
  restore_params(ck, f.params());
  return f;
}

FilterBundle load_filter_bundle(const std::string& filter_path,
                                const std::string& surrogate_path) {
  FilterBundle b;
  b.surrogate = std::make_shared<SurrogateModel>(SurrogateModel::load(surrogate_path));
  const uint64_t hash = file_content_hash(surrogate_path);
  b.filter = std::make_unique<Filter>(
      Filter::load(filter_path, b.surrogate, hash));
  return b;
}

DeltaResult optimize_delta(const Tensor& image, const SurrogateModel& surrogate,
                           double lambda_t, DistortionKind d_t, int steps,
                           double lr, uint64_t seed) {
  check_image_input(image, "optimize_delta");
  if (steps < 1) throw std::invalid_argument("optimize_delta: steps must be >= 1");
  if (lambda_t <= 0) throw std::invalid_argument("optimize_delta: lambda_t must be > 0");

  Tensor zeta = Tensor::zeros(image.shape());
  DeltaResult best;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int step = 0; step <= steps; ++step) {
    Tape t;
    Var img = t.leaf(image, false);
    Var zv = t.leaf(zeta, true);
    Var x = ops::add(t, img, zv);
    auto g = surrogate.build_rate_graph(t, x, QuantMode::kNoise,
                                        derive_seed(seed, "delta", uint64_t(step)));
    Var rec = surrogate.build_decode(t, g, /*clamp=*/false);
    Var dist = d_t == DistortionKind::kMse
                   ? mse_graph(t, rec, img)
                   : ops::affine(t, {{-1.0, ms_ssim_graph(t, rec, img)}}, 1.0);
    Var loss = ops::affine(t, {{1.0, g.total_bpp}, {lambda_t, dist}});
    best.loss_trace.push_back(loss->value.item());
    best.bpp_trace.push_back(g.total_bpp->value.item());
    if (loss->value.item() < best_loss) {
      best_loss = loss->value.item();
      best.image = Tensor(image.shape());
      for (int64_t i = 0; i < image.size(); ++i)
        best.image[i] = std::clamp(image[i] + zeta[i], 0.0, 1.0);
    }
    if (step == steps || !std::isfinite(loss->value.item())) break;
    t.backward(loss);
    for (int64_t i = 0; i < zeta.size(); ++i) {
      zeta[i] -= lr * zv->grad[i];
      // Projection keeps I + zeta inside [0,1].
      zeta[i] = std::clamp(image[i] + zeta[i], 0.0, 1.0) - image[i];
    }
  }
  return best;
}

}  // namespace prefilter
