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

#ifndef PREFILTER_OPS_H_
#define PREFILTER_OPS_H_

#include "prefilter/tape.h"

namespace prefilter {
namespace ops {

// Elementwise / scalar.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double k);
Var add_const(Tape& t, Var a, const Tensor& c);  // c carries no gradient
Var square(Tape& t, Var a);
Var sqrt(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var pow_const(Tape& t, Var a, double p);  // requires positive base
Var clamp_min(Tape& t, Var a, double lo);
Var clamp01(Tape& t, Var a);  // subgradient passes on [0, 1]

// Reductions (result shape 1x1x1).
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
// Per-channel spatial mean: HxWxC -> 1x1xC.
Var global_avg_pool(Tape& t, Var a);

// Shape ops.
Var concat_c(Tape& t, Var a, Var b);
Var crop(Tape& t, Var a, int y0, int x0, int h, int w);
Var pad_zero(Tape& t, Var a, int top, int bottom, int left, int right);
// Symmetric (edge-inclusive reflect) padding; pad must be <= dim.
Var pad_symmetric(Tape& t, Var a, int top, int bottom, int left, int right);
// Tiles a 1x1xC tensor over h x w. Backward sums over pixels.
Var broadcast_c(Tape& t, Var a, int h, int w);
// 2x2 average pooling, stride 2, floor (odd remainder dropped).
Var avg_pool2(Tape& t, Var a);

// Convolution. Weight layout: (k*k*in_c) x out_c row-major; bias 1x1xout_c
// (may be null). Zero padding given explicitly.
Var conv2d(Tape& t, Var x, Var w, Var b, int k, int stride, int pad_top,
           int pad_left, int out_h, int out_w);
// Transposed convolution realized as the backward-data map of a stride-s
// SAME conv onto (out_h, out_w). Weight layout: (k*k*out_c) x in_c.
Var conv2d_transpose(Tape& t, Var x, Var w, Var b, int k, int stride,
                     int out_h, int out_w);
// Depthwise convolution with a fixed (non-learned) 2D kernel, valid region
// only. Used for the Gaussian windows of MS-SSIM.
Var depthwise_valid(Tape& t, Var x, const Tensor& kernel2d);

// Generalized divisive normalization across channels at each pixel:
//   z_i = beta_i + sum_j gamma_ij * x_j^2,  y_i = x_i * z_i^(-1/2)
// (inverse=true multiplies by z^(1/2)). beta/gamma are given in
// reparameterized form: beta = beta_hat^2 + 1e-6, gamma = gamma_hat^2.
// beta_hat is 1x1xC, gamma_hat is CxCx1.
Var gdn(Tape& t, Var x, Var beta_hat, Var gamma_hat, bool inverse);

// Per-element code length in bits of `y` under N(mu, sigma^2) integrated
// over the unit quantization bin, floored at kLikelihoodFloor.
inline constexpr double kLikelihoodFloor = 1e-9;
Var gaussian_bits(Tape& t, Var y, Var mu, Var sigma);

// Forward takes the externally computed `forward_value`; backward passes
// the incoming gradient through unchanged.
Var straight_through(Tape& t, Var x, Tensor forward_value);

// Cuts the graph: value is shared, no gradient flows.
Var detach(Tape& t, Var a);

// Cross entropy of a 1x1xK logits tensor against an integer label.
Var cross_entropy_logits(Tape& t, Var logits, int label);

// y = sum_i coeff_i * x_i for scalar (1x1x1) vars.
Var affine(Tape& t, const std::vector<std::pair<double, Var>>& terms,
           double bias = 0.0);

}  // namespace ops
}  // namespace prefilter

#endif  // PREFILTER_OPS_H_
