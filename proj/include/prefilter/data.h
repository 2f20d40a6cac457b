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

#ifndef PREFILTER_DATA_H_
#define PREFILTER_DATA_H_

#include <optional>
#include <string>
#include <vector>

#include "prefilter/image.h"
#include "prefilter/rng.h"

namespace prefilter {

// Image corpus from a local directory. Flat directories are unlabeled;
// with labeled=true each subdirectory is a class (sorted name order gives
// the label ids). Files load eagerly in sorted path order so corpus
// iteration is reproducible.
class Corpus {
 public:
  static Corpus load_dir(const std::string& dir, bool labeled = false);

  size_t size() const { return images_.size(); }
  bool empty() const { return images_.empty(); }
  const ImageU8& image(size_t i) const { return images_[i]; }
  const std::string& path(size_t i) const { return paths_[i]; }
  int label(size_t i) const { return labels_.empty() ? -1 : labels_[i]; }
  const std::vector<std::string>& class_names() const { return class_names_; }

 private:
  std::vector<ImageU8> images_;
  std::vector<std::string> paths_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
};

// Random resize so the shorter side lands in [2*crop, 4*crop] (upscale
// factor capped at 2 for small sources), then a uniform crop. Sources with
// shorter side < crop are rejected (nullopt). The paper-scale configuration
// is crop=256 with resize range [512, 1024].
std::optional<Tensor> sample_training_crop(const ImageU8& src, Rng& rng,
                                           int crop = 256);

}  // namespace prefilter

#endif  // PREFILTER_DATA_H_
