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

#ifndef PREFILTER_DISTORTION_H_
#define PREFILTER_DISTORTION_H_

#include <optional>

#include "prefilter/nn.h"

namespace prefilter {

// Rate terms are bits per pixel; pixel values live in [0,1]. The scales
// below put the weighted distortion terms on a footing where the paper's
// lambda ranges produce mid-range rates:
//   surrogate MSE loss      = bpp + lambda_s * kMseTrainScale * mse
//   surrogate MS-SSIM loss  = bpp + lambda_s * kMsssimTrainScale * (1 - msssim)
//   filter MS-SSIM loss     = bpp + lambda_t * (1 - msssim), lambda_t = 500 lambda_s
inline constexpr double kMseTrainScale = 4000.0;
inline constexpr double kMsssimTrainScale = 500.0;

struct LossWeights {
  double gamma_gan = 5.0;
  double gamma_vgg = 0.01;
  double gamma_mse = 0.001;
  double lambda_t = 0;  // 0 -> derive as 500 * lambda_s
  double lambda_task = 1.0;
};

// lambda_t = 500 * lambda_s unless set explicitly.
double resolve_lambda_t(double lambda_t, double lambda_s);

// Mean squared per-channel difference on [0,1] images.
double mse(const Tensor& a, const Tensor& b);
Var mse_graph(Tape& t, Var a, Var b);

// Multi-scale SSIM with the canonical 5-scale weights, 11x11 Gaussian
// window (sigma 1.5) on each channel. `scales` <= 0 picks the largest
// feasible count (at most 5) for the input size; an explicit request that
// does not fit raises.
double ms_ssim(const Tensor& a, const Tensor& b, int scales = -1);
Var ms_ssim_graph(Tape& t, Var a, Var b, int scales = -1);
int max_msssim_scales(int h, int w);

// Frozen feature stack for the perceptual loss. Weights are seeded random
// by default and can be replaced from a checkpoint via `load`; the
// pretrained-VGG variant of the paper-scale setup plugs in the same way.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(uint64_t seed = 17);

  std::vector<Var> features(Tape& t, Var image) const;
  ParamList params();

 private:
  Conv2d conv1_, conv2_, conv3_;
};

double perceptual_loss(const Tensor& a, const Tensor& b,
                       const FeatureExtractor& fx);
Var perceptual_loss_graph(Tape& t, Var a, Var b, const FeatureExtractor& fx);

enum class FilterMode { kMsssimRetarget, kGan, kTask };
std::string to_string(FilterMode m);
FilterMode filter_mode_from_string(const std::string& s);

// Scalar loss components; only the ones the mode needs must be present.
struct FilterLossTerms {
  Var rate_bpp = nullptr;
  Var msssim = nullptr;
  Var gan_loss = nullptr;
  Var vgg_loss = nullptr;
  Var mse_loss = nullptr;
  Var task_ce = nullptr;
};

//   msssim_retarget: rate + lambda_t * (1 - msssim)
//   gan:             gamma_gan * L_gan + gamma_vgg * L_vgg
//                    + gamma_mse * L_mse + rate
//   task:            rate + lambda_task * CE + gamma_mse * L_mse
Var filter_loss(Tape& t, FilterMode mode, const FilterLossTerms& terms,
                const LossWeights& w);

// Presentation helper: MS-SSIM expressed in dB, -10*log10(1 - v).
double msssim_db(double v);

}  // namespace prefilter

#endif  // PREFILTER_DISTORTION_H_
