#pragma once

#include <functional>

#include "rlab/tensor.hpp"

namespace rlab {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero pairs comparable.
double relative_error(double a, double b, double floor = 1e-6);

/// Largest elementwise relative_error between two equally shaped tensors.
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace rlab
