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

#ifndef PREFILTER_SYNTH_H_
#define PREFILTER_SYNTH_H_

#include <string>

#include "prefilter/image.h"

namespace prefilter {

// Procedural training/eval content. Each image mixes smooth gradients,
// soft shapes, periodic textures, multi-octave value noise, and white
// noise; a per-image complexity dial spreads coding cost over a wide
// range. Fully determined by (dims, seed).
ImageU8 synth_natural_image(int h, int w, uint64_t seed);

// Ten texture classes: five grating orientations at two frequency bands.
// The high-frequency band degrades visibly under aggressive JPEG, which is
// what gives a pre-filter headroom on the classification task.
inline constexpr int kSynthNumClasses = 10;
ImageU8 synth_labeled_image(int h, int w, int class_id, uint64_t seed);

// Writes <dir>/img_####.ppm.
void write_natural_corpus(const std::string& dir, int count, int h, int w,
                          uint64_t seed);
// Writes <dir>/class_#/img_####.ppm for all 10 classes.
void write_labeled_corpus(const std::string& dir, int per_class, int h, int w,
                          uint64_t seed);

}  // namespace prefilter

#endif  // PREFILTER_SYNTH_H_
