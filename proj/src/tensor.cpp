#include "rlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace rlab {

std::size_t shape_size(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::span<const double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::span<const double>(values.begin(), values.size()));
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw std::invalid_argument("Tensor::reshape: cannot view " + shape_string(shape_) + " as " +
                                shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Tensor stack_batch(std::span<const Tensor> samples) {
  if (samples.empty()) throw std::invalid_argument("stack_batch: no samples");
  Tensor::Shape shape{samples.size()};
  const auto& sample_shape = samples.front().shape();
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  const std::size_t stride = samples.front().size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != sample_shape) throw std::invalid_argument("stack_batch: mixed sample shapes");
    std::copy(samples[i].data().begin(), samples[i].data().end(), out.raw() + i * stride);
  }
  return out;
}

}  // namespace rlab
