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

#ifndef PREFILTER_ADVERSARY_H_
#define PREFILTER_ADVERSARY_H_

#include "prefilter/nn.h"

namespace prefilter {

// Texture critic with three stages at scales 1, 1/2, 1/4 (2x2 average
// pooling in between). Each stage is two residual blocks followed by a
// 1x1 prediction conv; stage outputs pass through a sigmoid and are
// averaged, so the score lands in [0,1].
class Discriminator {
 public:
  explicit Discriminator(int width = 64, uint64_t seed = 23);

  Var score_graph(Tape& t, Var image) const;
  double score(const Tensor& image) const;

  ParamList params();
  int width() const { return width_; }

 private:
  int width_;
  Conv2d stem_;
  ResidualBlock rb_[3][2];
  Conv2d head_[3];
};

// LSGAN objectives on scores in [0,1].
//   filter:        E[(1 - score_fake)^2]
//   discriminator: E[(1 - score_real)^2] + E[score_fake^2]
double gan_loss_filter(const std::vector<double>& fake_scores);
double gan_loss_discriminator(const std::vector<double>& real_scores,
                              const std::vector<double>& fake_scores);

// Single-sample graph versions used inside the trainers.
Var gan_loss_filter_graph(Tape& t, Var fake_score);
Var gan_loss_discriminator_graph(Tape& t, Var real_score, Var fake_score);

}  // namespace prefilter

#endif  // PREFILTER_ADVERSARY_H_
