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

#include "prefilter/image.h"

#include <algorithm>
#include <cmath>

namespace prefilter {

ImageU8 tensor_to_u8(const Tensor& t) {
  if (t.c() != 3) throw std::invalid_argument("tensor_to_u8: need 3 channels");
  ImageU8 img;
  img.h = t.h();
  img.w = t.w();
  img.rgb.resize(size_t(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(t[i], 0.0, 1.0);
    img.rgb[size_t(i)] = uint8_t(std::lround(v * 255.0));
  }
  return img;
}

Tensor u8_to_tensor(const ImageU8& img) {
  Tensor t(img.h, img.w, 3);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = img.rgb[size_t(i)] / 255.0;
  return t;
}

ImageU8 bilinear_resize(const ImageU8& src, int out_h, int out_w) {
  ImageU8 dst;
  dst.h = out_h;
  dst.w = out_w;
  dst.rgb.resize(size_t(out_h) * out_w * 3);
  const double sy = double(src.h) / out_h;
  const double sx = double(src.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = std::clamp(int(std::floor(fy)), 0, src.h - 1);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const double wy = std::clamp(fy - y0, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = std::clamp(int(std::floor(fx)), 0, src.w - 1);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const double wx = std::clamp(fx - x0, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v00 = src.rgb[(size_t(y0) * src.w + x0) * 3 + c];
        const double v01 = src.rgb[(size_t(y0) * src.w + x1) * 3 + c];
        const double v10 = src.rgb[(size_t(y1) * src.w + x0) * 3 + c];
        const double v11 = src.rgb[(size_t(y1) * src.w + x1) * 3 + c];
        const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                         wy * ((1 - wx) * v10 + wx * v11);
        dst.rgb[(size_t(y) * out_w + x) * 3 + c] =
            uint8_t(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return dst;
}

Tensor crop_tensor(const Tensor& t, int y0, int x0, int h, int w) {
  Tensor out(h, w, t.c());
  for (int y = 0; y < h; ++y)
    std::copy_n(t.data() + (int64_t(y + y0) * t.w() + x0) * t.c(),
                int64_t(w) * t.c(), out.data() + int64_t(y) * w * t.c());
  return out;
}

}  // namespace prefilter
