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

#ifndef PREFILTER_CLASSIFIER_H_
#define PREFILTER_CLASSIFIER_H_

#include <nlohmann/json.hpp>

#include "prefilter/checkpoint.h"
#include "prefilter/nn.h"

namespace prefilter {

// Small CNN classifier used as the pluggable task model: three strided
// conv stages, global average pooling, 1x1 head. Any classifier exposing
// logits_graph can stand in; paper-scale setups would plug a pretrained
// network here instead.
class Classifier {
 public:
  Classifier(int num_classes, uint64_t seed = 31);

  Var logits_graph(Tape& t, Var image) const;  // 1 x 1 x num_classes
  int predict(const Tensor& image) const;
  int num_classes() const { return num_classes_; }

  ParamList params();
  void freeze();

  void save(const std::string& path, int64_t iterations,
            nlohmann::json extra = {}) const;
  static Classifier load(const std::string& path);

 private:
  int num_classes_;
  Conv2d conv1_, conv2_, conv3_, head_;
};

}  // namespace prefilter

#endif  // PREFILTER_CLASSIFIER_H_
