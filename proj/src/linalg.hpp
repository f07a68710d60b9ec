#pragma once

// Internal matrix-product helpers over raw row-major buffers.

#include <Eigen/Core>

#include <cstddef>

namespace rlab::linalg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap view(double* data, std::size_t rows, std::size_t cols) {
  return MatrixMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline ConstMatrixMap view(const double* data, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace rlab::linalg
