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

#include <filesystem>

#include "prefilter/surrogate.h"
#include "testutil.h"

using namespace prefilter;
using testutil::random_tensor;

namespace {

SurrogateConfig tiny_config() {
  SurrogateConfig cfg;
  cfg.latent_channels = 6;
  cfg.hidden_channels = 6;
  cfg.lambda_s = 0.2;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("encode produces ceil/16 latent shapes") {
  SurrogateModel model(tiny_config());
  Rng rng(1);
  for (auto [h, w] : std::vector<std::pair<int, int>>{
           {256, 256}, {250, 250}, {160, 160}, {64, 64}, {48, 80}}) {
    Tensor img = random_tensor({h, w, 3}, rng);
    LatentCode code = model.encode(img, QuantMode::kNone);
    CHECK(code.values.h() == (h + 15) / 16);
    CHECK(code.values.w() == (w + 15) / 16);
    CHECK(code.values.c() == 6);
    CHECK(code.orig_h == h);
    CHECK(code.padded_h % 16 == 0);
    EntropyMap em = model.entropy_estimate(code);
    CHECK(em.bits.shape() == code.values.shape());
  }
}

TEST_CASE("encode rejects invalid input") {
  SurrogateModel model(tiny_config());
  Tensor bad(32, 32, 3);
  bad[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(model.encode(bad, QuantMode::kNone), std::invalid_argument);
  CHECK_THROWS_AS(model.encode(Tensor::zeros({4, 4, 3}), QuantMode::kNone),
                  std::invalid_argument);
}

TEST_CASE("round mode is deterministic, noise mode is seeded") {
  SurrogateModel model(tiny_config());
  Rng rng(2);
  Tensor img = random_tensor({48, 48, 3}, rng);
  LatentCode a = model.encode(img, QuantMode::kRound);
  LatentCode b = model.encode(img, QuantMode::kRound);
  for (int64_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.values[i] == b.values[i]);
    CHECK(a.values[i] == std::nearbyint(a.values[i]));
  }
  LatentCode n1 = model.encode(img, QuantMode::kNoise, 5);
  LatentCode n2 = model.encode(img, QuantMode::kNoise, 5);
  LatentCode n3 = model.encode(img, QuantMode::kNoise, 6);
  double same = 0, diff = 0;
  for (int64_t i = 0; i < n1.values.size(); ++i) {
    CHECK(n1.values[i] == n2.values[i]);
    same += std::abs(n1.values[i] - n2.values[i]);
    diff += std::abs(n1.values[i] - n3.values[i]);
  }
  CHECK(same == 0.0);
  CHECK(diff > 0.0);
}

TEST_CASE("entropy map is nonnegative with floor and degenerate cases") {
  SurrogateModel model(tiny_config());
  Rng rng(3);
  Tensor img = random_tensor({32, 32, 3}, rng);
  LatentCode code = model.encode(img, QuantMode::kNoise, 11);
  EntropyMap em = model.entropy_estimate(code);
  for (int64_t i = 0; i < em.bits.size(); ++i) CHECK(em.bits[i] >= 0.0);

  // Values far out in the tail hit the likelihood floor: 29.897 bits each.
  LatentCode far = code;
  far.values = Tensor::full(code.values.shape(), 1e7);
  EntropyMap fm = model.entropy_estimate(far);
  const double floor_bits = -std::log2(1e-9);
  CHECK(floor_bits == doctest::Approx(29.897352853986263).epsilon(1e-12));
  for (int64_t i = 0; i < fm.bits.size(); ++i)
    CHECK(fm.bits[i] == doctest::Approx(floor_bits).epsilon(1e-12));
}

TEST_CASE("rate arithmetic") {
  EntropyMap zeros{Tensor::zeros({16, 16, 8})};
  RateResult r0 = SurrogateModel::rate(zeros, 256, 256);
  CHECK(r0.total_bits == 0.0);
  CHECK(r0.bpp == 0.0);

  EntropyMap ones{Tensor::full({16, 16, 128}, 1.0)};
  RateResult r1 = SurrogateModel::rate(ones, 256, 256);
  CHECK(r1.total_bits == 32768.0);
  CHECK(r1.bpp == 0.5);

  // Uniform 256-symbol model: 8 bits per element.
  EntropyMap uni{Tensor::full({2, 2, 2}, 8.0)};
  CHECK(SurrogateModel::rate(uni, 32, 32).total_bits == 64.0);
}

TEST_CASE("decode clamps to [0,1] and restores original dims") {
  SurrogateModel model(tiny_config());
  Rng rng(4);
  Tensor img = random_tensor({50, 42, 3}, rng);
  LatentCode code = model.encode(img, QuantMode::kRound);
  Tensor rec = model.decode(code);
  CHECK(rec.h() == 50);
  CHECK(rec.w() == 42);
  CHECK(rec.c() == 3);
  CHECK(rec.min() >= 0.0);
  CHECK(rec.max() <= 1.0);

  LatentCode wild = code;
  wild.values = random_tensor(code.values.shape(), rng, -30.0, 30.0);
  Tensor rec2 = model.decode(wild);
  CHECK(rec2.min() >= 0.0);
  CHECK(rec2.max() <= 1.0);

  LatentCode bad = code;
  bad.values = Tensor::zeros({code.values.h(), code.values.w(), 5});
  CHECK_THROWS(model.decode(bad));
}

TEST_CASE("total_bits gradient w.r.t. input matches finite differences") {
  SurrogateConfig cfg = tiny_config();
  cfg.latent_channels = 4;
  cfg.hidden_channels = 4;
  SurrogateModel model(cfg);
  Rng rng(5);
  Tensor img = random_tensor({16, 16, 3}, rng, 0.05, 0.95);
  const uint64_t noise_seed = 99;

  Tape t;
  Var iv = t.leaf(img, true);
  auto g = model.build_rate_graph(t, iv, QuantMode::kNoise, noise_seed);
  Var total_bits = ops::sum(t, g.bits_y);
  t.backward(total_bits);
  Tensor grad = iv->grad.clone();

  auto f = [&](const Tensor& x) {
    Tape tt;
    auto gg = model.build_rate_graph(tt, tt.leaf(x), QuantMode::kNoise, noise_seed);
    return ops::sum(tt, gg.bits_y)->value.item();
  };
  Rng pick(6);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t i = pick.next() % img.size();
    Tensor xp = img.clone();
    const double h = 1e-5;
    xp[i] = img[i] + h;
    const double fp = f(xp);
    xp[i] = img[i] - h;
    const double fm = f(xp);
    const double fd = (fp - fm) / (2 * h);
    const double err =
        std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("checkpoint roundtrip preserves params and metadata") {
  SurrogateConfig cfg = tiny_config();
  cfg.lambda_s = 0.4;
  cfg.distortion = DistortionKind::kMsSsim;
  SurrogateModel model(cfg);
  const std::string dir = testutil::temp_dir("surrogate_ck");
  const std::string path = dir + "/surrogate.pfck";
  model.save(path, 123);

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.meta.at("lambda_s").get<double>() == 0.4);
  CHECK(ck.meta.at("distortion").get<std::string>() == "ms_ssim");
  CHECK(ck.meta.at("latent_channels").get<int>() == 6);
  CHECK(ck.meta.at("iterations").get<int64_t>() == 123);

  SurrogateModel loaded = SurrogateModel::load(path);
  CHECK(params_hash(loaded.params()) == params_hash(model.params()));

  Rng rng(8);
  Tensor img = random_tensor({32, 32, 3}, rng);
  LatentCode a = model.encode(img, QuantMode::kRound);
  LatentCode b = loaded.encode(img, QuantMode::kRound);
  for (int64_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
  std::filesystem::remove_all(dir);
}
