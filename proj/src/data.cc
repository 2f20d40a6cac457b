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

#include "prefilter/data.h"

#include <algorithm>
#include <filesystem>

#include "prefilter/image_io.h"

namespace prefilter {

namespace fs = std::filesystem;

Corpus Corpus::load_dir(const std::string& dir, bool labeled) {
  Corpus c;
  if (!fs::is_directory(dir))
    throw std::runtime_error("corpus directory not found: " + dir);
  if (labeled) {
    std::vector<std::string> classes;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) classes.push_back(e.path().filename().string());
    std::sort(classes.begin(), classes.end());
    if (classes.empty())
      throw std::runtime_error("labeled corpus has no class directories: " + dir);
    c.class_names_ = classes;
    for (size_t k = 0; k < classes.size(); ++k) {
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(fs::path(dir) / classes[k]))
        if (e.is_regular_file() && has_image_extension(e.path().string()))
          files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        c.images_.push_back(load_image(f));
        c.paths_.push_back(f);
        c.labels_.push_back(int(k));
      }
    }
  } else {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && has_image_extension(e.path().string()))
        files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      c.images_.push_back(load_image(f));
      c.paths_.push_back(f);
    }
  }
  if (c.images_.empty())
    throw std::runtime_error("corpus is empty: " + dir);
  return c;
}

std::optional<Tensor> sample_training_crop(const ImageU8& src, Rng& rng,
                                           int crop) {
  const int shorter = std::min(src.h, src.w);
  if (shorter < crop) return std::nullopt;
  double target = rng.uniform(2.0 * crop, 4.0 * crop);
  double factor = target / shorter;
  if (factor > 2.0) factor = 2.0;  // cap the upscale for tiny sources
  const int rh = std::max(crop, int(std::lround(src.h * factor)));
  const int rw = std::max(crop, int(std::lround(src.w * factor)));
  ImageU8 resized = (rh == src.h && rw == src.w) ? src : bilinear_resize(src, rh, rw);
  const int y0 = rng.uniform_int(0, rh - crop);
  const int x0 = rng.uniform_int(0, rw - crop);
  Tensor out(crop, crop, 3);
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int ch = 0; ch < 3; ++ch)
        out.at(y, x, ch) =
            resized.rgb[(size_t(y + y0) * rw + (x + x0)) * 3 + ch] / 255.0;
  return out;
}

}  // namespace prefilter
