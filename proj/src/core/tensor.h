// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsav {

class Rng;

// Dense float32 array with shared storage. Copies are shallow; clone() is
// deep. Shapes are small int vectors, row-major layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float v);
  static Tensor from(std::vector<int> shape, std::vector<float> data);
  static Tensor scalar(float v) { return full({1}, v); }
  static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f);
  static Tensor rand_uniform(std::vector<int> shape, Rng& rng, float lo, float hi);

  bool defined() const { return static_cast<bool>(data_); }
  int64_t numel() const { return numel_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  float* data() { return data_->data(); }
  const float* data() const { return data_->data(); }
  float& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  float& at(int i, int j) { return (*data_)[static_cast<size_t>(i) * shape_[1] + j]; }
  float at(int i, int j) const { return (*data_)[static_cast<size_t>(i) * shape_[1] + j]; }

  Tensor clone() const;
  // Same storage, new shape with equal element count.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(float v);
  void zero() { fill(0.0f); }
  float item() const {
    if (numel_ != 1) throw std::runtime_error("Tensor::item: numel != 1");
    return (*data_)[0];
  }

  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  int64_t numel_ = 0;
  std::shared_ptr<std::vector<float>> data_;
};

}  // namespace gsav
