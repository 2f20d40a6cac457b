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

#ifndef PREFILTER_TAPE_H_
#define PREFILTER_TAPE_H_

#include <deque>
#include <functional>
#include <unordered_map>

#include "prefilter/tensor.h"

namespace prefilter {

struct Parameter;

// One node of the reverse-mode tape. `grad` stays empty until a backward
// pass touches it.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward;
  int id = -1;
};

using Var = Node*;

// Dynamic single-pass tape. Nodes live in a deque so Var pointers stay
// stable. One tape per forward/backward; parameters are bound once per
// tape via param().
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.id = int(nodes_.size()) - 1;
    return &n;
  }

  Var make(Tensor value, bool requires_grad, std::function<void(Node&)> bw) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = requires_grad ? std::move(bw) : nullptr;
    n.id = int(nodes_.size()) - 1;
    return &n;
  }

  // Binds a Parameter to this tape (cached: the same Parameter maps to the
  // same node). The node's value shares the parameter's buffer.
  Var param(Parameter& p);

  // Accumulates d(root)/d(node) into every reachable node's grad.
  // `root` must be scalar.
  void backward(Var root) {
    if (root->value.size() != 1)
      throw std::logic_error("Tape::backward: root must be scalar");
    ensure_grad(root);
    root->grad[0] += 1.0;
    for (int i = root->id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requires_grad && !n.grad.empty() && n.backward) n.backward(n);
    }
  }

  static void ensure_grad(Var v) {
    if (v->grad.empty()) v->grad = Tensor::zeros(v->value.shape());
  }

  // Adds g into v's grad if v participates in differentiation.
  static void add_grad(Var v, const Tensor& g) {
    if (!v->requires_grad) return;
    ensure_grad(v);
    double* d = v->grad.data();
    const double* s = g.data();
    for (int64_t i = 0; i < g.size(); ++i) d[i] += s[i];
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
  std::unordered_map<const void*, Var> param_cache_;
};

}  // namespace prefilter

#endif  // PREFILTER_TAPE_H_
