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

#ifndef PREFILTER_CLI_H_
#define PREFILTER_CLI_H_

#include <string>
#include <vector>

namespace prefilter {

// Exit codes, machine readable (sysexits-compatible).
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 64;    // bad flags / unknown subcommand
inline constexpr int kExitConfig = 65;   // invalid configuration / inputs
inline constexpr int kExitAdapter = 69;  // external codec unavailable/failed
inline constexpr int kExitInternal = 70;

// Entry point behind the `prefilter` binary. Subcommands:
//   train-surrogate | train-filter | filter-images | eval-rd | eval-task |
//   report
int run_cli(const std::vector<std::string>& args);

}  // namespace prefilter

#endif  // PREFILTER_CLI_H_
