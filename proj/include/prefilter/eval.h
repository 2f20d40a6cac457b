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

#ifndef PREFILTER_EVAL_H_
#define PREFILTER_EVAL_H_

#include "prefilter/classifier.h"
#include "prefilter/codec.h"
#include "prefilter/data.h"
#include "prefilter/filter.h"

namespace prefilter {

// Mean bpp / mean metric across the corpus at each quality. When a filter
// is given, every image is filtered once and the codec runs on the
// filtered version; the metric always compares against the original.
RDCurve build_rd_curve(const Corpus& corpus, const Codec& codec,
                       const std::vector<int>& qualities, Metric metric,
                       const Filter* filter = nullptr, int threads = 0,
                       const std::string& dataset_tag = "");

// Relative rate savings of `filtered` over `baseline` at equal distortion,
// from monotone piecewise-linear interpolation of log-rate over the shared
// metric range. bd_rate is the average relative rate difference (negative
// means the filtered codec needs less rate); savings(D) = -that, pointwise.
struct SavingsCurve {
  std::vector<double> distortion;  // metric values across the overlap
  std::vector<double> savings;     // 1 - rate_f(D) / rate_b(D)
  double bd_rate = 0;
};
SavingsCurve rate_savings(const RDCurve& filtered, const RDCurve& baseline);

// Classical Bjontegaard variant for comparison: cubic polynomial fit of
// log-rate against distortion, integrated over the shared range.
double bd_rate_cubic(const RDCurve& filtered, const RDCurve& baseline);

struct TaskPoint {
  double bpp = 0;
  double accuracy = 0;
  int quality = 0;
};
struct TaskCurve {
  std::vector<TaskPoint> points;
  std::string codec;
  bool filtered = false;
  std::string dataset;
};
// Top-1 accuracy of the frozen classifier on decoded (optionally
// pre-filtered) images per quality.
TaskCurve task_accuracy_curve(const Corpus& corpus_labeled,
                              const Classifier& classifier, const Codec& codec,
                              const std::vector<int>& qualities,
                              const Filter* filter = nullptr, int threads = 0,
                              const std::string& dataset_tag = "");

// CSV + JSON + SVG plots under out_dir, deterministic names and bytes.
// Returns the list of files written.
std::vector<std::string> emit_report(const std::vector<RDCurve>& curves,
                                     const std::vector<SavingsCurve>& savings,
                                     const std::vector<std::string>& savings_labels,
                                     const std::string& out_dir);

// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace prefilter

#endif  // PREFILTER_EVAL_H_
