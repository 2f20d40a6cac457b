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

#ifndef PREFILTER_SURROGATE_H_
#define PREFILTER_SURROGATE_H_

#include <nlohmann/json.hpp>

#include "prefilter/checkpoint.h"
#include "prefilter/nn.h"

namespace prefilter {

enum class DistortionKind { kMse, kMsSsim };
enum class QuantMode { kNoise, kRound, kNone };

std::string to_string(DistortionKind d);
DistortionKind distortion_from_string(const std::string& s);

struct SurrogateConfig {
  int latent_channels = 128;  // C
  int hidden_channels = 128;
  double lambda_s = 0.2;
  DistortionKind distortion = DistortionKind::kMse;
  uint64_t seed = 1;
};

// Quantized latent plus the hyperprior side information needed to evaluate
// its entropy model. Spatial dims are ceil(padded/16).
struct LatentCode {
  Tensor values;
  Tensor side_info;
  QuantMode mode = QuantMode::kNone;
  int orig_h = 0, orig_w = 0;
  int padded_h = 0, padded_w = 0;
};

// Per-latent-element information estimate in bits (same shape as the code).
struct EntropyMap {
  Tensor bits;
};

struct RateResult {
  double total_bits = 0;
  double bpp = 0;
};

// Differentiable stand-in codec: 4 strided conv stages with GDN down to a
// C-channel latent at 1/16 resolution, mirrored decoder, and a mean-scale
// hyperprior entropy model (no autoregressive context).
class SurrogateModel {
 public:
  explicit SurrogateModel(const SurrogateConfig& cfg);

  // Rejects non-finite inputs; pads symmetrically to multiples of 16.
  // mode=kNoise draws uniform [-0.5, 0.5) noise from `noise_seed`.
  LatentCode encode(const Tensor& image, QuantMode mode,
                    uint64_t noise_seed = 0) const;
  EntropyMap entropy_estimate(const LatentCode& latent) const;
  // bpp uses the ORIGINAL (pre-padding) pixel count.
  static RateResult rate(const EntropyMap& entropy, int orig_h, int orig_w);
  // Reconstruction clamped to [0,1] and cropped back to original dims.
  Tensor decode(const LatentCode& latent) const;

  // Graph-level interface used by trainers and gradient checks. The image
  // var must be HxWx3 in [0,1]; padding happens inside.
  struct Graph {
    Var padded_image = nullptr;
    Var y_hat = nullptr;
    Var z_hat = nullptr;
    Var mu = nullptr;
    Var sigma = nullptr;
    Var bits_y = nullptr;   // per-element EntropyMap
    Var bits_z = nullptr;
    Var y_bpp = nullptr;    // sum(bits_y) / orig pixels
    Var total_bpp = nullptr;  // (sum(bits_y) + sum(bits_z)) / orig pixels
    int orig_h = 0, orig_w = 0, padded_h = 0, padded_w = 0;
  };
  Graph build_rate_graph(Tape& t, Var image, QuantMode mode,
                         uint64_t noise_seed) const;
  // Decoder applied to g.y_hat. `clamp` selects the [0,1] output clamp
  // (off during training so gradients never die at the rails).
  Var build_decode(Tape& t, const Graph& g, bool clamp) const;
  // Encoder-only latent (continuous). Used by the filter's rate stage.
  Var build_encoder(Tape& t, Var padded_image) const;

  ParamList params();
  ParamList encoder_params();
  const SurrogateConfig& config() const { return cfg_; }

  void save(const std::string& path, int64_t iterations,
            nlohmann::json extra = {}) const;
  static SurrogateModel load(const std::string& path);
  static SurrogateConfig config_from_checkpoint(const Checkpoint& ck);

 private:
  SurrogateConfig cfg_;
  Conv2d enc1_, enc2_, enc3_, enc4_;
  GdnLayer gdn1_, gdn2_, gdn3_;
  ConvTranspose2d dec1_, dec2_, dec3_, dec4_;
  GdnLayer igdn1_, igdn2_, igdn3_;
  Conv2d hyper_enc1_, hyper_enc2_, hyper_enc3_;
  ConvTranspose2d hyper_dec1_, hyper_dec2_;
  Conv2d hyper_dec3_;
  Parameter z_mean_, z_raw_scale_;
};

// Validates range/finiteness and returns symmetric padding amounts.
void check_image_input(const Tensor& image, const char* where);

}  // namespace prefilter

#endif  // PREFILTER_SURROGATE_H_
