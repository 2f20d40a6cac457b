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

#ifndef PREFILTER_RNG_H_
#define PREFILTER_RNG_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace prefilter {

// All stochastic behavior in the project flows through Rng streams derived
// from a single master seed, so runs are reproducible bit for bit. The
// distributions are implemented by hand; std::*_distribution is not pinned
// across standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + int(eng_() % uint64_t(hi - lo + 1));
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0;
  bool have_spare_ = false;
};

// FNV-1a, also used for checkpoint content hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t hash_u64(uint64_t h, uint64_t v) { return fnv1a(&v, sizeof(v), h); }
inline uint64_t hash_str(uint64_t h, std::string_view s) {
  return fnv1a(s.data(), s.size(), h);
}

// Derives an independent substream seed from (master, tag, indices).
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0,
                            uint64_t b = 0) {
  uint64_t h = hash_u64(0xcbf29ce484222325ull, master);
  h = hash_str(h, tag);
  h = hash_u64(h, a);
  h = hash_u64(h, b);
  return h ? h : 1;
}

}  // namespace prefilter

#endif  // PREFILTER_RNG_H_
