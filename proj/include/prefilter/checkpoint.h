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

#ifndef PREFILTER_CHECKPOINT_H_
#define PREFILTER_CHECKPOINT_H_

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "prefilter/nn.h"

namespace prefilter {

// Self-describing container: magic, format version, JSON metadata, then one
// little-endian double block per named tensor.
//
//   [ "PFCK" ][u32 version][u64 json_len][json bytes][tensor data...]
//
// The JSON carries a `tensors` manifest (name + shape, in file order) plus
// arbitrary model metadata under `meta`.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const ParamList& params);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an existing parameter list (matched by
// name; missing or shape-mismatched entries are an error).
void restore_params(const Checkpoint& ck, const ParamList& params);

// Content hash of a file on disk (FNV-1a over all bytes). Used to bind a
// filter checkpoint to the exact surrogate checkpoint it was trained with.
uint64_t file_content_hash(const std::string& path);

}  // namespace prefilter

#endif  // PREFILTER_CHECKPOINT_H_
