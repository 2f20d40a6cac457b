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

#ifndef PREFILTER_TESTS_TESTUTIL_H_
#define PREFILTER_TESTS_TESTUTIL_H_

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "prefilter/rng.h"
#include "prefilter/tensor.h"

namespace prefilter::testutil {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(s);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences of a scalar-valued function with respect to
// the entries of `x`, compared against `analytic`. Error metric is
// |a - b| / max(|a|, |b|, floor); returns the worst element.
inline double grad_check(const std::function<double(const Tensor&)>& f,
                         Tensor x, const Tensor& analytic, double h = 1e-5,
                         double floor = 1e-6) {
  double worst = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double err = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), floor});
    worst = std::max(worst, err);
  }
  return worst;
}

// Unique scratch directory under the build tree.
inline std::string temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() /
           ("prefilter_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace prefilter::testutil

#endif  // PREFILTER_TESTS_TESTUTIL_H_
