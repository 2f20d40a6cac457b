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

#ifndef PREFILTER_TENSOR_H_
#define PREFILTER_TENSOR_H_

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace prefilter {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

struct Shape {
  int h = 0;
  int w = 0;
  int c = 0;

  int64_t size() const { return int64_t(h) * w * c; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" +
           std::to_string(c);
  }
};

// Dense HWC tensor of doubles. Copies are shallow (buffer is shared);
// use clone() for an independent buffer. Values on an autodiff tape are
// treated as immutable after creation.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s)
      : shape_(s), buf_(std::make_shared<std::vector<double>>(s.size(), 0.0)) {}
  Tensor(int h, int w, int c) : Tensor(Shape{h, w, c}) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double v) {
    Tensor t(s);
    std::fill(t.data(), t.data() + t.size(), v);
    return t;
  }
  static Tensor scalar(double v) { return full({1, 1, 1}, v); }

  bool empty() const { return buf_ == nullptr; }
  const Shape& shape() const { return shape_; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  int64_t size() const { return shape_.size(); }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }

  double& at(int y, int x, int ch) {
    return (*buf_)[(int64_t(y) * shape_.w + x) * shape_.c + ch];
  }
  double at(int y, int x, int ch) const {
    return (*buf_)[(int64_t(y) * shape_.w + x) * shape_.c + ch];
  }
  double& operator[](int64_t i) { return (*buf_)[i]; }
  double operator[](int64_t i) const { return (*buf_)[i]; }

  double item() const {
    if (size() != 1) throw std::logic_error("Tensor::item on non-scalar");
    return (*buf_)[0];
  }

  Tensor clone() const {
    if (empty()) return Tensor();
    Tensor t(shape_);
    std::copy(data(), data() + size(), t.data());
    return t;
  }

  // Interprets the buffer as a (h*w) x c row-major matrix (pixels x channels).
  MapRM pixels() { return MapRM(data(), int64_t(shape_.h) * shape_.w, shape_.c); }
  ConstMapRM pixels() const {
    return ConstMapRM(data(), int64_t(shape_.h) * shape_.w, shape_.c);
  }
  // Interprets the buffer as an arbitrary rows x cols row-major matrix.
  MapRM mat(int64_t rows, int64_t cols) {
    if (rows * cols != size()) throw std::logic_error("Tensor::mat size");
    return MapRM(data(), rows, cols);
  }
  ConstMapRM mat(int64_t rows, int64_t cols) const {
    if (rows * cols != size()) throw std::logic_error("Tensor::mat size");
    return ConstMapRM(data(), rows, cols);
  }

  bool all_finite() const {
    for (int64_t i = 0; i < size(); ++i) {
      if (!std::isfinite((*buf_)[i])) return false;
    }
    return true;
  }

  double sum() const {
    double s = 0;
    for (int64_t i = 0; i < size(); ++i) s += (*buf_)[i];
    return s;
  }
  double min() const;
  double max() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> buf_;
};

inline double Tensor::min() const {
  double m = (*buf_)[0];
  for (int64_t i = 1; i < size(); ++i) m = std::min(m, (*buf_)[i]);
  return m;
}
inline double Tensor::max() const {
  double m = (*buf_)[0];
  for (int64_t i = 1; i < size(); ++i) m = std::max(m, (*buf_)[i]);
  return m;
}

}  // namespace prefilter

#endif  // PREFILTER_TENSOR_H_
