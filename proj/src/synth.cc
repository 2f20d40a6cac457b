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

#include "prefilter/synth.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "prefilter/image_io.h"
#include "prefilter/rng.h"

namespace prefilter {

namespace {

// Smooth value noise: bilinear interpolation of a coarse random lattice.
void add_value_noise(Tensor& img, Rng& rng, int cell, double amp) {
  const int gh = img.h() / cell + 2, gw = img.w() / cell + 2;
  std::vector<double> lattice(size_t(gh) * gw);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < img.h(); ++y) {
    const double fy = double(y) / cell;
    const int y0 = int(fy);
    const double ay = fy - y0;
    for (int x = 0; x < img.w(); ++x) {
      const double fx = double(x) / cell;
      const int x0 = int(fx);
      const double ax = fx - x0;
      const double v00 = lattice[size_t(y0) * gw + x0];
      const double v01 = lattice[size_t(y0) * gw + x0 + 1];
      const double v10 = lattice[size_t(y0 + 1) * gw + x0];
      const double v11 = lattice[size_t(y0 + 1) * gw + x0 + 1];
      const double v = (1 - ay) * ((1 - ax) * v00 + ax * v01) +
                       ay * ((1 - ax) * v10 + ax * v11);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) += amp * v;
    }
  }
}

void fill_gradient(Tensor& img, Rng& rng) {
  double corner[4][3];
  for (auto& row : corner)
    for (double& v : row) v = rng.uniform(0.15, 0.85);
  for (int y = 0; y < img.h(); ++y) {
    const double ay = double(y) / std::max(1, img.h() - 1);
    for (int x = 0; x < img.w(); ++x) {
      const double ax = double(x) / std::max(1, img.w() - 1);
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = (1 - ay) * ((1 - ax) * corner[0][c] + ax * corner[1][c]) +
                          ay * ((1 - ax) * corner[2][c] + ax * corner[3][c]);
    }
  }
}

void add_shape(Tensor& img, Rng& rng, bool textured) {
  const int h = img.h(), w = img.w();
  const double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
  const double ry = rng.uniform(h * 0.08, h * 0.4);
  const double rx = rng.uniform(w * 0.08, w * 0.4);
  const bool ellipse = rng.uniform() < 0.5;
  double color[3];
  for (double& v : color) v = rng.uniform(0.05, 0.95);
  const double theta = rng.uniform(0, M_PI);
  const double freq = rng.uniform(0.15, 0.9);
  const double edge = rng.uniform(1.0, 4.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dy = (y - cy) / ry, dx = (x - cx) / rx;
      const double d = ellipse ? std::sqrt(dy * dy + dx * dx)
                               : std::max(std::abs(dy), std::abs(dx));
      if (d > 1.0 + edge / std::min(ry, rx)) continue;
      const double alpha =
          std::clamp((1.0 + edge / std::min(ry, rx) - d) * std::min(ry, rx) / edge,
                     0.0, 1.0);
      double tex = 0;
      if (textured)
        tex = 0.18 * std::sin(freq * ((x - cx) * std::cos(theta) +
                                      (y - cy) * std::sin(theta)));
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) =
            (1 - alpha) * img.at(y, x, c) + alpha * std::clamp(color[c] + tex, 0.0, 1.0);
    }
}

void clamp_image(Tensor& img) {
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = std::clamp(img[i], 0.0, 1.0);
}

}  // namespace

ImageU8 synth_natural_image(int h, int w, uint64_t seed) {
  Rng rng(derive_seed(seed, "synth_natural"));
  Tensor img(h, w, 3);
  fill_gradient(img, rng);
  // Complexity dial: drives shape count, texture, and noise energy.
  const double complexity = rng.uniform();
  const int shapes = 2 + int(complexity * 9);
  for (int s = 0; s < shapes; ++s) add_shape(img, rng, rng.uniform() < 0.5);
  add_value_noise(img, rng, std::max(4, h / 8), 0.05 + 0.1 * complexity);
  add_value_noise(img, rng, std::max(2, h / 32), 0.02 + 0.08 * complexity);
  // Fine-grained noise: cheap to drop for MS-SSIM, expensive for a codec.
  const double white = 0.01 + 0.09 * complexity;
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] += white * (rng.uniform() - 0.5);
  clamp_image(img);
  return tensor_to_u8(img);
}

ImageU8 synth_labeled_image(int h, int w, int class_id, uint64_t seed) {
  if (class_id < 0 || class_id >= kSynthNumClasses)
    throw std::invalid_argument("synth_labeled_image: bad class id");
  Rng rng(derive_seed(seed, "synth_labeled", uint64_t(class_id)));
  Tensor img(h, w, 3);
  const int orient = class_id % 5;
  const int band = class_id / 5;  // 0 = mid frequency, 1 = high frequency
  const double theta = orient * M_PI / 5.0 + rng.uniform(-0.06, 0.06);
  const double period = band == 0 ? rng.uniform(7.0, 9.0) : rng.uniform(2.6, 3.4);
  const double freq = 2.0 * M_PI / period;
  const double phase = rng.uniform(0, 2 * M_PI);
  const double contrast = rng.uniform(0.25, 0.4);
  double base[3];
  for (double& v : base) v = rng.uniform(0.35, 0.65);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = x * std::cos(theta) + y * std::sin(theta);
      const double g = contrast * std::sin(freq * u + phase);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = base[c] + g;
    }
  add_value_noise(img, rng, std::max(4, h / 6), 0.06);
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] += 0.03 * (rng.uniform() - 0.5);
  clamp_image(img);
  return tensor_to_u8(img);
}

void write_natural_corpus(const std::string& dir, int count, int h, int w,
                          uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
    save_image(synth_natural_image(h, w, derive_seed(seed, "img", uint64_t(i))),
               dir + "/" + name);
  }
}

void write_labeled_corpus(const std::string& dir, int per_class, int h, int w,
                          uint64_t seed) {
  for (int k = 0; k < kSynthNumClasses; ++k) {
    const std::string cls_dir = dir + "/class_" + std::to_string(k);
    std::filesystem::create_directories(cls_dir);
    for (int i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
      save_image(synth_labeled_image(
                     h, w, k, derive_seed(seed, "limg", uint64_t(k * 100000 + i))),
                 cls_dir + "/" + name);
    }
  }
}

}  // namespace prefilter
