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

#ifndef PREFILTER_IMAGE_H_
#define PREFILTER_IMAGE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "prefilter/tensor.h"

namespace prefilter {

// 8-bit interleaved RGB image, used for storage and codec boundaries.
struct ImageU8 {
  int h = 0, w = 0;
  std::vector<uint8_t> rgb;  // h*w*3

  bool empty() const { return rgb.empty(); }
};

// [0,1] double tensor <-> 8-bit image. to_u8 rounds half away from zero.
ImageU8 tensor_to_u8(const Tensor& t);
Tensor u8_to_tensor(const ImageU8& img);

ImageU8 bilinear_resize(const ImageU8& src, int out_h, int out_w);

// Crops [y0, y0+h) x [x0, x0+w).
Tensor crop_tensor(const Tensor& t, int y0, int x0, int h, int w);

// Amount of bottom/right padding needed to reach a multiple of m.
inline int pad_to_multiple(int n, int m) { return (m - n % m) % m; }

}  // namespace prefilter

#endif  // PREFILTER_IMAGE_H_
