#include "dacnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dacnet/errors.hpp"

namespace dacnet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
void check_dims(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor dimension " + std::to_string(i) + " is zero in shape " +
                       shape_string(shape));
    }
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_dims(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
  check_dims(shape);
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("shape mismatch in +=: " + shape_string(shape_) + " vs " +
                     shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("max_abs_diff shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = items.front().shape();
  shape.insert(shape.begin(), items.size());
  Tensor out(shape);
  const std::size_t n = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].same_shape(items.front())) {
      throw ShapeError("stack: item " + std::to_string(i) + " has shape " +
                       shape_string(items[i].shape()) + ", expected " +
                       shape_string(items.front().shape()));
    }
    std::copy_n(items[i].data(), n, out.data() + i * n);
  }
  return out;
}

Tensor slice_leading(const Tensor& t, std::size_t index) {
  if (t.rank() == 0 || index >= t.dim(0)) throw ShapeError("slice_leading index out of range");
  Shape shape(t.shape().begin() + 1, t.shape().end());
  const std::size_t n = shape_size(shape);
  std::vector<double> values(t.data() + index * n, t.data() + (index + 1) * n);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace dacnet
