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

#ifndef PREFILTER_IMAGE_IO_H_
#define PREFILTER_IMAGE_IO_H_

#include <string>

#include "prefilter/image.h"

namespace prefilter {

// Reads PPM (P6), PNG, or JPEG by file magic. Grayscale and RGBA inputs
// are expanded/flattened to RGB.
ImageU8 load_image(const std::string& path);

// Format chosen by extension: .ppm, .png.
void save_image(const ImageU8& img, const std::string& path);

bool has_image_extension(const std::string& path);

// In-memory JPEG (libjpeg, baseline, quality 1..100).
std::vector<uint8_t> jpeg_encode(const ImageU8& img, int quality);
ImageU8 jpeg_decode(const std::vector<uint8_t>& bytes);

}  // namespace prefilter

#endif  // PREFILTER_IMAGE_IO_H_
