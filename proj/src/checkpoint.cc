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

#include "prefilter/checkpoint.h"

#include <cstring>
#include <fstream>

#include "prefilter/rng.h"

namespace prefilter {

namespace {
constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("checkpoint: missing tensor " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const ParamList& params) {
  nlohmann::json j;
  j["meta"] = meta;
  auto manifest = nlohmann::json::array();
  for (const Parameter* p : params) {
    manifest.push_back({{"name", p->name},
                        {"h", p->value.shape().h},
                        {"w", p->value.shape().w},
                        {"c", p->value.shape().c}});
  }
  j["tensors"] = manifest;
  const std::string js = j.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kMagic, 4);
  const uint32_t ver = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const uint64_t jlen = js.size();
  f.write(reinterpret_cast<const char*>(&jlen), sizeof(jlen));
  f.write(js.data(), std::streamsize(js.size()));
  for (const Parameter* p : params)
    f.write(reinterpret_cast<const char*>(p->value.data()),
            std::streamsize(sizeof(double) * p->value.size()));
  if (!f) throw std::runtime_error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  uint64_t jlen = 0;
  f.read(reinterpret_cast<char*>(&jlen), sizeof(jlen));
  std::string js(jlen, '\0');
  f.read(js.data(), std::streamsize(jlen));
  nlohmann::json j = nlohmann::json::parse(js);

  Checkpoint ck;
  ck.meta = j.value("meta", nlohmann::json::object());
  for (const auto& m : j["tensors"]) {
    Tensor t(Shape{m["h"].get<int>(), m["w"].get<int>(), m["c"].get<int>()});
    f.read(reinterpret_cast<char*>(t.data()),
           std::streamsize(sizeof(double) * t.size()));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    ck.tensors.emplace_back(m["name"].get<std::string>(), std::move(t));
  }
  return ck;
}

void restore_params(const Checkpoint& ck, const ParamList& params) {
  for (Parameter* p : params) {
    const Tensor& src = ck.get(p->name);
    if (!(src.shape() == p->value.shape()))
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name +
                               " (" + src.shape().str() + " vs " +
                               p->value.shape().str() + ")");
    std::copy(src.data(), src.data() + src.size(), p->value.data());
  }
}

uint64_t file_content_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    h = fnv1a(buf, size_t(f.gcount()), h);
  }
  return h;
}

}  // namespace prefilter
