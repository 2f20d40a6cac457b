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

#ifndef PREFILTER_CODEC_H_
#define PREFILTER_CODEC_H_

#include <memory>
#include <string>
#include <vector>

#include "prefilter/ops.h"
#include "prefilter/tensor.h"

namespace prefilter {

// Raised for external codec problems (missing binary, nonzero exit,
// timeout). The CLI maps it to its own exit code.
struct AdapterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Declarative description of an external codec. Templates use {input},
// {output} and {quality} placeholders; the encode command maps a PNG to
// the compressed container, the decode command maps the container back to
// a PNG. bpp accounting uses the full container size, headers included.
struct CodecAdapter {
  std::string name;
  std::string encode_tpl;
  std::string decode_tpl;
  int quality_min = 1;
  int quality_max = 100;
  bool quality_ascending = true;  // false: lower numbers mean higher quality
  std::string extension;
  std::string colorspace = "ycbcr";
};

struct EncodeResult {
  double bpp = 0;
  Tensor decoded;
  uint64_t compressed_bytes = 0;
};

class Codec {
 public:
  virtual ~Codec() = default;
  virtual const CodecAdapter& spec() const = 0;
  // Deterministic for fixed (image, quality); decoded output is RGB [0,1]
  // with the input's dimensions.
  virtual EncodeResult encode_decode(const Tensor& image, int quality) const = 0;
  virtual bool available() const { return true; }

  void check_quality(int quality) const;
};

// Built-in baseline JPEG via libjpeg (no external process).
std::unique_ptr<Codec> make_jpeg_codec();
// Test double: decoded == input bit for bit, 24 bpp declared raw size.
std::unique_ptr<Codec> make_identity_codec();
// External codec following an adapter spec.
std::unique_ptr<Codec> make_subprocess_codec(CodecAdapter adapter);

class CodecRegistry {
 public:
  // Registers the built-in "jpeg" and "identity" codecs.
  CodecRegistry();

  // Loads every *.json adapter spec in the directory.
  void load_adapter_dir(const std::string& dir);
  void add(std::unique_ptr<Codec> codec);

  const Codec& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::vector<std::unique_ptr<Codec>> codecs_;
};

CodecAdapter parse_adapter_json(const std::string& json_text);

// BT.601 full-range conversions on [0,1] tensors. Round-trip error is at
// the level of double rounding.
Tensor rgb_to_ycbcr(const Tensor& rgb);
Tensor ycbcr_to_rgb(const Tensor& ycbcr);

// Forward value comes from the real codec; the backward pass treats the
// codec as identity. Optionally reports the encode stats.
Var straight_through_decode(Tape& t, Var filtered, const Codec& codec,
                            int quality, EncodeResult* info = nullptr);

enum class Metric { kMsSsim, kMse, kPsnr };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
// Is value `a` better than `b` under the metric?
bool metric_better(Metric m, double a, double b);
double compute_metric(Metric m, const Tensor& reference, const Tensor& test);

struct RDPoint {
  double bpp = 0;
  double value = 0;  // metric value (MS-SSIM/PSNR: higher better; MSE: lower)
  int quality = 0;
};

struct RDCurve {
  std::vector<RDPoint> points;  // strictly increasing bpp, improving value
  std::string codec;
  Metric metric = Metric::kMsSsim;
  bool filtered = false;
  std::string dataset;
};

// Sorts by rate and drops dominated points so that bpp is strictly
// increasing and the metric strictly improves.
void prune_dominated(RDCurve& curve);

RDCurve quality_sweep(const Tensor& image, const Codec& codec,
                      const std::vector<int>& qualities, Metric metric);

}  // namespace prefilter

#endif  // PREFILTER_CODEC_H_
