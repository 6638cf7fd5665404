// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "core/tensor.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "core/rng.h"

namespace gsav {

static int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::runtime_error("Tensor: negative dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)),
      data_(std::make_shared<std::vector<float>>(static_cast<size_t>(numel_), 0.0f)) {}

Tensor Tensor::full(std::vector<int> shape, float v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> data) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = shape_numel(t.shape_);
  if (t.numel_ != static_cast<int64_t>(data.size()))
    throw std::runtime_error("Tensor::from: data size does not match shape");
  t.data_ = std::make_shared<std::vector<float>>(std::move(data));
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, float stddev) {
  Tensor t(std::move(shape));
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = stddev * static_cast<float>(rng.normal());
  return t;
}

Tensor Tensor::rand_uniform(std::vector<int> shape, Rng& rng, float lo, float hi) {
  Tensor t(std::move(shape));
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.numel_ = numel_;
  t.data_ = std::make_shared<std::vector<float>>(*data_);
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != numel_)
    throw std::runtime_error("Tensor::reshaped: element count mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = numel_;
  t.data_ = data_;
  return t;
}

void Tensor::fill(float v) {
  if (data_) std::fill(data_->begin(), data_->end(), v);
}

bool Tensor::all_finite() const {
  const float* p = data();
  for (int64_t i = 0; i < numel_; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

}  // namespace gsav
