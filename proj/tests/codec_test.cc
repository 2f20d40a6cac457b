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
#include <fstream>

#include "prefilter/codec.h"
#include "prefilter/distortion.h"
#include "prefilter/image_io.h"
#include "testutil.h"

using namespace prefilter;
using testutil::random_tensor;

namespace {

// Smooth-plus-texture content so JPEG sizes react to quality.
Tensor natural_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Tensor img(h, w, 3);
  const double fx = rng.uniform(0.02, 0.08), fy = rng.uniform(0.02, 0.08);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 0.5 + 0.3 * std::sin(fx * x * (c + 1)) *
                             std::cos(fy * y + 0.7 * c);
        v += 0.08 * (rng.uniform() - 0.5);
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
  return img;
}

}  // namespace

TEST_CASE("bpp arithmetic uses the original pixel count") {
  // 100x100 image, 1000-byte file -> 0.8 bpp.
  CHECK(8.0 * 1000 / (100.0 * 100.0) == 0.8);
  CodecRegistry reg;
  const Codec& jpeg = reg.get("jpeg");
  Tensor img = natural_image(100, 100, 1);
  EncodeResult r = jpeg.encode_decode(img, 50);
  CHECK(r.bpp == 8.0 * double(r.compressed_bytes) / (100.0 * 100.0));
  CHECK(r.decoded.h() == 100);
  CHECK(r.decoded.w() == 100);
}

TEST_CASE("jpeg round trips are deterministic and quality-monotone") {
  CodecRegistry reg;
  const Codec& jpeg = reg.get("jpeg");
  Tensor img = natural_image(120, 96, 2);
  EncodeResult a = jpeg.encode_decode(img, 40);
  EncodeResult b = jpeg.encode_decode(img, 40);
  CHECK(a.compressed_bytes == b.compressed_bytes);
  for (int64_t i = 0; i < a.decoded.size(); ++i)
    CHECK(a.decoded[i] == b.decoded[i]);

  uint64_t prev = 0;
  for (int q : {10, 30, 50, 70, 90}) {
    EncodeResult r = jpeg.encode_decode(img, q);
    CHECK(r.compressed_bytes >= prev);
    prev = r.compressed_bytes;
  }
  CHECK_THROWS_AS(jpeg.encode_decode(img, 0), std::invalid_argument);
}

TEST_CASE("identity codec is an exact passthrough") {
  CodecRegistry reg;
  const Codec& id = reg.get("identity");
  Tensor img = natural_image(31, 17, 3);
  EncodeResult r = id.encode_decode(img, 50);
  CHECK(r.bpp == 24.0);
  CHECK(r.compressed_bytes == uint64_t(31 * 17 * 3));
  for (int64_t i = 0; i < img.size(); ++i) CHECK(r.decoded[i] == img[i]);
}

TEST_CASE("ycbcr conversion white/black points and round trip") {
  Tensor white = Tensor::full({1, 1, 3}, 1.0);
  Tensor yw = rgb_to_ycbcr(white);
  CHECK(yw[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(yw[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(yw[2] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor black = Tensor::zeros({1, 1, 3});
  Tensor yb = rgb_to_ycbcr(black);
  CHECK(yb[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(yb[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(yb[2] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(4);
  Tensor img = random_tensor({16, 16, 3}, rng);
  Tensor round = ycbcr_to_rgb(rgb_to_ycbcr(img));
  double max_err = 0;
  for (int64_t i = 0; i < img.size(); ++i)
    max_err = std::max(max_err, std::abs(round[i] - img[i]));
  CHECK(max_err < 1e-6);
}

TEST_CASE("straight-through decode: identity forward, identity backward") {
  CodecRegistry reg;
  const Codec& id = reg.get("identity");
  Rng rng(5);
  Tensor img = random_tensor({12, 12, 3}, rng);

  Tape t;
  Var x = t.leaf(img, true);
  EncodeResult info;
  Var dec = straight_through_decode(t, x, id, 50, &info);
  for (int64_t i = 0; i < img.size(); ++i) CHECK(dec->value[i] == img[i]);
  Var loss = ops::mean(t, ops::square(t, dec));
  t.backward(loss);
  // Gradient w.r.t. x equals gradient w.r.t. the decoded node, bitwise.
  for (int64_t i = 0; i < img.size(); ++i) {
    const bool same = x->grad[i] == dec->grad[i];
    CHECK(same);
  }

  // Real-codec forward value with unchanged gradient geometry.
  const Codec& jpeg = reg.get("jpeg");
  Tape t2;
  Var x2 = t2.leaf(img, true);
  Var dec2 = straight_through_decode(t2, x2, jpeg, 30);
  Var loss2 = ops::mean(t2, ops::square(t2, dec2));
  t2.backward(loss2);
  double norm_x = 0, norm_d = 0;
  for (int64_t i = 0; i < img.size(); ++i) {
    norm_x += x2->grad[i] * x2->grad[i];
    norm_d += dec2->grad[i] * dec2->grad[i];
  }
  CHECK(norm_x == doctest::Approx(norm_d).epsilon(1e-15));
}

TEST_CASE("quality sweep yields ascending rates and improving metric") {
  CodecRegistry reg;
  const Codec& jpeg = reg.get("jpeg");
  Tensor img = natural_image(96, 96, 6);
  RDCurve c = quality_sweep(img, jpeg, {20, 40, 60, 80}, Metric::kMsSsim);
  CHECK(c.points.size() >= 2);
  for (size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].bpp > c.points[i - 1].bpp);
    CHECK(c.points[i].value > c.points[i - 1].value);  // ms-ssim improves
  }
  CHECK_THROWS(quality_sweep(img, jpeg, {}, Metric::kMsSsim));

  RDCurve two = quality_sweep(img, jpeg, {30, 70}, Metric::kMse);
  CHECK(two.points.size() == 2);
  CHECK(two.points[0].bpp < two.points[1].bpp);
}

TEST_CASE("adapter spec parsing and validation") {
  const char* good = R"({
    "name": "webp", "encode": "cwebp -q {quality} {input} -o {output}",
    "decode": "dwebp {input} -o {output}",
    "quality_min": 0, "quality_max": 100, "extension": ".webp"
  })";
  CodecAdapter a = parse_adapter_json(good);
  CHECK(a.name == "webp");
  CHECK(a.quality_ascending);

  const char* bad = R"({
    "name": "x", "encode": "enc file", "decode": "dec {input} {output}",
    "quality_min": 0, "quality_max": 100, "extension": ".x"
  })";
  CHECK_THROWS_AS(parse_adapter_json(bad), std::invalid_argument);
}

TEST_CASE("subprocess adapter via stub scripts") {
  const std::string dir = testutil::temp_dir("adapter");
  // The "codec" just copies bytes, so it is a lossless passthrough whose
  // container equals a PNG of the input.
  {
    std::ofstream spec(dir + "/copy.json");
    spec << R"({"name":"copycodec",
      "encode":"cp {input} {output}",
      "decode":"cp {input} {output}",
      "quality_min":1,"quality_max":100,"extension":".png"})";
  }
  CodecRegistry reg;
  reg.load_adapter_dir(dir);
  REQUIRE(reg.has("copycodec"));
  const Codec& c = reg.get("copycodec");
  REQUIRE(c.available());
  Tensor img = natural_image(40, 40, 7);
  EncodeResult r = c.encode_decode(img, 50);
  CHECK(r.compressed_bytes > 0);
  // Lossless passthrough up to the 8-bit quantization at the boundary.
  Tensor img8 = u8_to_tensor(tensor_to_u8(img));
  for (int64_t i = 0; i < img.size(); ++i)
    CHECK(r.decoded[i] == doctest::Approx(img8[i]).epsilon(1e-12));

  // Failing adapter surfaces diagnostics as AdapterError.
  {
    std::ofstream spec(dir + "/fail.json");
    spec << R"({"name":"failcodec",
      "encode":"false {input} {output}",
      "decode":"cp {input} {output}",
      "quality_min":1,"quality_max":100,"extension":".bin"})";
  }
  CodecRegistry reg2;
  reg2.load_adapter_dir(dir);
  CHECK_THROWS_AS(reg2.get("failcodec").encode_decode(img, 50), AdapterError);

  // Missing binary is reported as unavailable, not a crash.
  {
    std::ofstream spec(dir + "/missing.json");
    spec << R"({"name":"missingcodec",
      "encode":"definitely_not_a_real_binary_xyz {input} {output}",
      "decode":"cp {input} {output}",
      "quality_min":1,"quality_max":100,"extension":".bin"})";
  }
  CodecRegistry reg3;
  reg3.load_adapter_dir(dir);
  CHECK_FALSE(reg3.get("missingcodec").available());
  std::filesystem::remove_all(dir);
}

TEST_CASE("image io round trips") {
  const std::string dir = testutil::temp_dir("imageio");
  Rng rng(8);
  Tensor img = random_tensor({21, 33, 3}, rng);
  ImageU8 u8 = tensor_to_u8(img);
  save_image(u8, dir + "/x.ppm");
  ImageU8 ppm = load_image(dir + "/x.ppm");
  CHECK(ppm.rgb == u8.rgb);
  save_image(u8, dir + "/x.png");
  ImageU8 png = load_image(dir + "/x.png");
  CHECK(png.rgb == u8.rgb);
  std::filesystem::remove_all(dir);
}
