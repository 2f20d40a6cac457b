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

#ifndef PREFILTER_NN_H_
#define PREFILTER_NN_H_

#include <string>
#include <vector>

#include "prefilter/ops.h"
#include "prefilter/rng.h"
#include "prefilter/tape.h"

namespace prefilter {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

using ParamList = std::vector<Parameter*>;

// Fan-in scaled Gaussian init; `gain` 2.0 gives He init for ReLU layers.
void init_normal(Tensor& t, int fan_in, double gain, Rng& rng);

// SAME-ceil output size for a strided conv.
inline int conv_out(int in, int stride) { return (in + stride - 1) / stride; }

enum class PadKind { kZero, kSymmetric };

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_c, int out_c, int k, int stride, double gain,
         Rng& rng, PadKind pad = PadKind::kZero);

  // SAME padding (TF convention: extra pad goes bottom/right). kSymmetric
  // reflect-pads instead of zero-padding (stride 1 only).
  Var operator()(Tape& t, Var x) const;
  void collect(ParamList& out);

  int in_c() const { return in_c_; }
  int out_c() const { return out_c_; }
  int kernel() const { return k_; }

  Parameter w, b;

 private:
  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1;
  PadKind pad_ = PadKind::kZero;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride,
                  double gain, Rng& rng);

  // Upsamples to exactly (out_h, out_w); requires ceil(out/stride) == in.
  Var operator()(Tape& t, Var x, int out_h, int out_w) const;
  void collect(ParamList& out);

  int in_c() const { return in_c_; }
  int out_c() const { return out_c_; }

  Parameter w, b;

 private:
  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 2;
};

class GdnLayer {
 public:
  GdnLayer() = default;
  GdnLayer(std::string name, int channels, bool inverse);

  Var operator()(Tape& t, Var x) const;
  void collect(ParamList& out);

  Parameter beta_hat, gamma_hat;

 private:
  bool inverse_ = false;
};

// Two 3x3 convs with pre-activation ReLU and an additive skip.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::string name, int channels, Rng& rng,
                PadKind pad = PadKind::kZero);

  Var operator()(Tape& t, Var x) const;
  void collect(ParamList& out);

  Conv2d conv1, conv2;
};

class Adam {
 public:
  Adam(ParamList params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // Applies one update from the gradients accumulated in `grads`, which
  // must be parallel to the param list (empty tensors are skipped).
  void step(double lr, const std::vector<Tensor>& grads);

  const ParamList& params() const { return params_; }
  int64_t iterations() const { return t_; }

 private:
  ParamList params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Order-insensitive content hash of parameter values (names + bytes).
uint64_t params_hash(const ParamList& params);

}  // namespace prefilter

#endif  // PREFILTER_NN_H_
