#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jointcast/core/errors.hpp"

namespace jointcast {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense array with a logical shape of any rank.
///
/// Storage is a row-major matrix whose column count is the trailing extent and
/// whose row count is the product of the leading extents, so an [A, T, D]
/// array is stored as (A*T) x D. Rank 0 and rank 1 arrays occupy one row.
template <typename Scalar>
struct Array {
  Shape shape;
  Matrix<Scalar> data;
  std::optional<Matrix<Scalar>> grad;

  Array() = default;
  explicit Array(Shape s) : shape(std::move(s)), data(Matrix<Scalar>::Zero(rows_of(shape), cols_of(shape))) {}
  Array(Shape s, Matrix<Scalar> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.rows() != rows_of(shape) || data.cols() != cols_of(shape)) {
      throw DimensionError("array data " + std::to_string(data.rows()) + "x" + std::to_string(data.cols()) +
                           " does not match shape " + shape_string(shape));
    }
  }

  Index size() const { return data.size(); }

  static Index cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }
  static Index rows_of(const Shape& s) {
    if (s.size() <= 1) return 1;
    Index n = 1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
    return n;
  }
};

}  // namespace jointcast
