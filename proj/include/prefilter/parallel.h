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

#ifndef PREFILTER_PARALLEL_H_
#define PREFILTER_PARALLEL_H_

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace prefilter {

// Runs fn(i) for i in [0, n) across up to `threads` workers with a static
// stride partition. Each item must be independent; results therefore do not
// depend on the thread count. The first exception is rethrown.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = int(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const size_t n_workers = size_t(threads);
  std::vector<std::exception_ptr> errs(n_workers);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errs[size_t(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace prefilter

#endif  // PREFILTER_PARALLEL_H_
