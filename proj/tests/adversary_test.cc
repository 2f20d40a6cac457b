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

#include "prefilter/adversary.h"
#include "testutil.h"

using namespace prefilter;
using testutil::random_tensor;

TEST_CASE("score is bounded in [0,1] for arbitrary inputs and params") {
  Rng rng(1);
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Discriminator d(16, seed);
    for (int i = 0; i < 4; ++i) {
      Tensor img = random_tensor({24, 24, 3}, rng, -2.0, 3.0);
      const double s = d.score(img);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("zero prediction maps give score 0.5") {
  Discriminator d(8, 5);
  // Zeroing the three 1x1 heads forces every pre-sigmoid prediction to 0.
  ParamList params = d.params();
  for (Parameter* p : params) {
    if (p->name.find(".head.") != std::string::npos) {
      for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.0;
    }
  }
  Rng rng(2);
  Tensor img = random_tensor({16, 16, 3}, rng);
  CHECK(d.score(img) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("three stages at scales 1, 1/2, 1/4") {
  // 24x24 input: stage predictions exist at 24, 12, 6. Verified via the
  // score changing when only coarse content changes is implicit; here we
  // check the architecture wiring by parameter inventory.
  Discriminator d(8, 7);
  ParamList params = d.params();
  int heads = 0, blocks = 0;
  for (Parameter* p : params) {
    if (p->name.find(".head.w") != std::string::npos) ++heads;
    if (p->name.find(".rb") != std::string::npos &&
        p->name.find("conv1.w") != std::string::npos)
      ++blocks;
  }
  CHECK(heads == 3);
  CHECK(blocks == 6);  // two residual blocks per stage
}

TEST_CASE("lsgan loss identities") {
  CHECK(gan_loss_filter({1.0}) == 0.0);
  CHECK(gan_loss_filter({0.0}) == 1.0);
  CHECK(gan_loss_filter({0.5}) == 0.25);
  CHECK(gan_loss_discriminator({1.0}, {0.0}) == 0.0);
  CHECK(gan_loss_discriminator({0.0}, {1.0}) == 2.0);
  CHECK(gan_loss_discriminator({0.5}, {0.5}) == 0.5);

  // Graph versions agree and are differentiable.
  Tape t;
  Var fake = t.leaf(Tensor::scalar(0.5), true);
  Var lf = gan_loss_filter_graph(t, fake);
  CHECK(lf->value.item() == 0.25);
  t.backward(lf);
  CHECK(fake->grad[0] == doctest::Approx(-1.0));  // d(1-s)^2/ds = -2(1-s)

  Tape t2;
  Var real = t2.leaf(Tensor::scalar(1.0), true);
  Var fake2 = t2.leaf(Tensor::scalar(0.0), true);
  Var ld = gan_loss_discriminator_graph(t2, real, fake2);
  CHECK(ld->value.item() == 0.0);
}

TEST_CASE("discriminator gradients reach image and params") {
  Discriminator d(8, 9);
  Rng rng(3);
  Tensor img = random_tensor({16, 16, 3}, rng);
  Tape t;
  Var iv = t.leaf(img, true);
  Var s = d.score_graph(t, iv);
  Var loss = gan_loss_filter_graph(t, s);
  t.backward(loss);
  double img_norm = 0;
  for (int64_t i = 0; i < iv->grad.size(); ++i)
    img_norm += iv->grad[i] * iv->grad[i];
  CHECK(img_norm > 0.0);
  Var stem_w = t.param(*d.params().front());
  CHECK_FALSE(stem_w->grad.empty());
}
