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

#include "prefilter/classifier.h"

namespace prefilter {

Classifier::Classifier(int num_classes, uint64_t seed)
    : num_classes_(num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("classifier: need at least 2 classes");
  Rng rng(derive_seed(seed, "classifier_init"));
  conv1_ = Conv2d("clf.conv1", 3, 16, 3, 2, 2.0, rng);
  conv2_ = Conv2d("clf.conv2", 16, 32, 3, 2, 2.0, rng);
  conv3_ = Conv2d("clf.conv3", 32, 64, 3, 2, 2.0, rng);
  head_ = Conv2d("clf.head", 64, num_classes, 1, 1, 1.0, rng);
}

Var Classifier::logits_graph(Tape& t, Var image) const {
  Var h = ops::relu(t, conv1_(t, image));
  h = ops::relu(t, conv2_(t, h));
  h = ops::relu(t, conv3_(t, h));
  h = ops::global_avg_pool(t, h);
  return head_(t, h);
}

int Classifier::predict(const Tensor& image) const {
  Tape t;
  Var logits = logits_graph(t, t.leaf(image));
  int arg = 0;
  for (int i = 1; i < num_classes_; ++i)
    if (logits->value[i] > logits->value[arg]) arg = i;
  return arg;
}

ParamList Classifier::params() {
  ParamList p;
  conv1_.collect(p);
  conv2_.collect(p);
  conv3_.collect(p);
  head_.collect(p);
  return p;
}

void Classifier::freeze() {
  for (Parameter* p : params()) p->trainable = false;
}

void Classifier::save(const std::string& path, int64_t iterations,
                      nlohmann::json extra) const {
  nlohmann::json meta = std::move(extra);
  meta["type"] = "classifier";
  meta["num_classes"] = num_classes_;
  meta["iterations"] = iterations;
  save_checkpoint(path, meta, const_cast<Classifier*>(this)->params());
}

Classifier Classifier::load(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("type", "") != "classifier")
    throw std::runtime_error("not a classifier checkpoint: " + path);
  Classifier c(ck.meta.at("num_classes").get<int>());
  restore_params(ck, c.params());
  return c;
}

}  // namespace prefilter
