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

#include "prefilter/adversary.h"

namespace prefilter {

Discriminator::Discriminator(int width, uint64_t seed) : width_(width) {
  Rng rng(derive_seed(seed, "discriminator_init"));
  stem_ = Conv2d("disc.stem", 3, width, 3, 1, 2.0, rng);
  for (int s = 0; s < 3; ++s) {
    for (int r = 0; r < 2; ++r)
      rb_[s][r] = ResidualBlock(
          "disc.s" + std::to_string(s) + ".rb" + std::to_string(r), width, rng);
    head_[s] = Conv2d("disc.s" + std::to_string(s) + ".head", width, 1, 1, 1,
                      1.0, rng);
  }
}

Var Discriminator::score_graph(Tape& t, Var image) const {
  Var h = stem_(t, image);
  std::vector<std::pair<double, Var>> stage_means;
  for (int s = 0; s < 3; ++s) {
    if (s > 0) h = ops::avg_pool2(t, h);
    h = rb_[s][1](t, rb_[s][0](t, h));
    Var pred = head_[s](t, h);
    stage_means.emplace_back(1.0 / 3.0,
                             ops::mean(t, ops::sigmoid(t, pred)));
  }
  return ops::affine(t, stage_means);
}

double Discriminator::score(const Tensor& image) const {
  Tape t;
  return score_graph(t, t.leaf(image))->value.item();
}

ParamList Discriminator::params() {
  ParamList p;
  stem_.collect(p);
  for (int s = 0; s < 3; ++s) {
    rb_[s][0].collect(p);
    rb_[s][1].collect(p);
    head_[s].collect(p);
  }
  return p;
}

double gan_loss_filter(const std::vector<double>& fake_scores) {
  if (fake_scores.empty())
    throw std::invalid_argument("gan_loss_filter: empty scores");
  double acc = 0;
  for (double s : fake_scores) acc += (1.0 - s) * (1.0 - s);
  return acc / double(fake_scores.size());
}

double gan_loss_discriminator(const std::vector<double>& real_scores,
                              const std::vector<double>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty())
    throw std::invalid_argument("gan_loss_discriminator: empty scores");
  double real = 0, fake = 0;
  for (double s : real_scores) real += (1.0 - s) * (1.0 - s);
  for (double s : fake_scores) fake += s * s;
  return real / double(real_scores.size()) + fake / double(fake_scores.size());
}

Var gan_loss_filter_graph(Tape& t, Var fake_score) {
  Var one_minus = ops::affine(t, {{-1.0, fake_score}}, 1.0);
  return ops::square(t, one_minus);
}

Var gan_loss_discriminator_graph(Tape& t, Var real_score, Var fake_score) {
  Var real = ops::square(t, ops::affine(t, {{-1.0, real_score}}, 1.0));
  Var fake = ops::square(t, fake_score);
  return ops::add(t, real, fake);
}

}  // namespace prefilter
