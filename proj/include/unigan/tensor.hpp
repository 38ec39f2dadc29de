#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace unigan {

// Arithmetic is carried out in double; persisted state is float32 (see Adam and checkpoint).
using Scalar = double;

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major tensor. Image-like tensors are NCHW.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = 0.0);
  Tensor(Shape shape, std::vector<Scalar> values);

  static Tensor scalar(Scalar v) { return Tensor({1}, v); }

  const Shape& shape() const { return shape_; }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // NCHW accessors; valid only for rank-4 tensors.
  std::int64_t n() const { return shape_.at(0); }
  std::int64_t c() const { return shape_.at(1); }
  std::int64_t h() const { return shape_.at(2); }
  std::int64_t w() const { return shape_.at(3); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return data_; }
  std::span<const Scalar> span() const { return data_; }
  std::vector<Scalar>& values() { return data_; }
  const std::vector<Scalar>& values() const { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  Scalar& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  Scalar at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  // Value of a one-element tensor.
  Scalar item() const;

  void fill(Scalar v);
  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

Scalar max_abs_diff(const Tensor& a, const Tensor& b);

// Concatenate rank-4 tensors along dim 0.
Tensor stack_batch(std::span<const Tensor> parts);
// Single sample `index` of a rank-4 tensor, keeping a batch dim of 1.
Tensor batch_slice(const Tensor& t, std::int64_t index);

}  // namespace unigan
