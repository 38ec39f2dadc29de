#include "unigan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unigan/errors.hpp"

namespace unigan {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, Scalar fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
}

Scalar Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.data_.size() != data_.size()) {
    throw ShapeError("+= between " + shape_to_string(shape_) + " and " + shape_to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
}

Scalar max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff between " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  Scalar m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor stack_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack_batch of zero tensors");
  Shape shape = parts.front().shape();
  if (shape.size() != 4) throw ShapeError("stack_batch expects rank-4 tensors");
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.c() != shape[1] || p.h() != shape[2] || p.w() != shape[3]) {
      throw ShapeError("stack_batch shape mismatch: " + shape_to_string(p.shape()) + " vs " + shape_to_string(shape));
    }
    total += p.n();
  }
  shape[0] = total;
  std::vector<Scalar> values;
  values.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
  return Tensor(std::move(shape), std::move(values));
}

Tensor batch_slice(const Tensor& t, std::int64_t index) {
  if (t.rank() != 4 || index < 0 || index >= t.n()) throw ShapeError("batch_slice index out of range");
  const auto per = static_cast<std::size_t>(t.c() * t.h() * t.w());
  std::vector<Scalar> values(t.values().begin() + static_cast<std::ptrdiff_t>(per * index),
                             t.values().begin() + static_cast<std::ptrdiff_t>(per * (index + 1)));
  return Tensor({1, t.c(), t.h(), t.w()}, std::move(values));
}

}  // namespace unigan
