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

#ifndef PREFILTER_FILTER_H_
#define PREFILTER_FILTER_H_

#include <memory>

#include "prefilter/distortion.h"
#include "prefilter/surrogate.h"

namespace prefilter {

enum class InitMode { kStandard, kLowVariance };
std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

struct FilterConfig {
  // Output channels of the four transposed-conv upsampling stages; the
  // last one is pinned to 16 features per pixel.
  std::vector<int> up_channels = {128, 64, 32, 16};
  int trunk_channels = 64;
  int trunk_blocks = 4;
  InitMode init_mode = InitMode::kStandard;
  // Zeroing the output conv makes the filter the exact identity at init.
  bool zero_output_conv = false;
  uint64_t seed = 1;
};

// Trainable pre-filter: the frozen surrogate encoder supplies a per-latent
// entropy map, four transposed convolutions lift it to 16 features per
// pixel, and a residual conv trunk predicts a correction that is added to
// the input and clamped.
class Filter {
 public:
  Filter(std::shared_ptr<const SurrogateModel> surrogate, FilterConfig cfg);

  // Entropy map (lh x lw x C) -> pixel features (out_h x out_w x 16).
  Var entropy_to_pixel_graph(Tape& t, Var entropy, int out_h, int out_w) const;

  // Filtered image, same dims as the input, values in [0,1]. The entropy
  // branch uses the deterministic round-quantization path.
  Var apply_graph(Tape& t, Var image) const;
  Tensor apply(const Tensor& image) const;

  ParamList params();  // filter parameters only, never the encoder's
  const FilterConfig& config() const { return cfg_; }
  const SurrogateModel& surrogate() const { return *surrogate_; }

  // The checkpoint records the content hash of the surrogate checkpoint it
  // was trained against; load() refuses a mismatched pair.
  void save(const std::string& path, uint64_t surrogate_file_hash,
            int64_t iterations, nlohmann::json extra = {}) const;
  static Filter load(const std::string& path,
                     std::shared_ptr<const SurrogateModel> surrogate,
                     uint64_t surrogate_file_hash);
  static FilterConfig config_from_checkpoint(const Checkpoint& ck);

 private:
  std::shared_ptr<const SurrogateModel> surrogate_;
  FilterConfig cfg_;
  ConvTranspose2d up_[4];
  Conv2d trunk_in_;
  std::vector<ResidualBlock> blocks_;
  Conv2d trunk_out_;
};

// Loads a (filter, surrogate) checkpoint pair, validating the binding hash.
struct FilterBundle {
  std::shared_ptr<SurrogateModel> surrogate;
  std::unique_ptr<Filter> filter;
};
FilterBundle load_filter_bundle(const std::string& filter_path,
                                const std::string& surrogate_path);

// Direct per-image optimization: gradient descent on
//   g_R(I + zeta) + lambda_t * D_T(g_D(I + zeta), I)
// with zeta projected so the result stays in [0,1]. Returns the best
// iterate seen. lambda_t weighs the raw distortion (MSE or 1 - MS-SSIM).
struct DeltaResult {
  Tensor image;
  std::vector<double> loss_trace;
  std::vector<double> bpp_trace;
};
DeltaResult optimize_delta(const Tensor& image, const SurrogateModel& surrogate,
                           double lambda_t, DistortionKind d_t, int steps,
                           double lr = 3e-3, uint64_t seed = 1);

}  // namespace prefilter

#endif  // PREFILTER_FILTER_H_
