#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sssd/errors.hpp"

namespace sssd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major n-dimensional array backed by an Eigen array.
///
/// Rank-2 tensors expose a row-major matrix view; rank-3 tensors laid out as
/// (batch, channels, length) expose one (channels x length) matrix per batch
/// entry through slice().
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    check_shape();
    data_ = Array::Constant(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Eigen::Map<const Array>(values.begin(), Index(values.size()))) {}

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  // Contents unspecified; for outputs that are fully overwritten.
  static BasicTensor uninitialized(Shape shape) {
    BasicTensor t;
    t.shape_ = std::move(shape);
    t.check_shape();
    t.data_.resize(shape_size(t.shape_));
    return t;
  }
  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_); }
  static BasicTensor scalar(Scalar value) { return BasicTensor(Shape{1}, value); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index i, Index j) { return data_[i * shape_[1] + j]; }
  Scalar operator()(Index i, Index j) const { return data_[i * shape_[1] + j]; }
  Scalar& operator()(Index b, Index c, Index t) { return data_[(b * shape_[1] + c) * shape_[2] + t]; }
  Scalar operator()(Index b, Index c, Index t) const {
    return data_[(b * shape_[1] + c) * shape_[2] + t];
  }

  MatrixMap matrix() {
    require_rank(2);
    return MatrixMap(data_.data(), shape_[0], shape_[1]);
  }
  ConstMatrixMap matrix() const {
    require_rank(2);
    return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
  }

  // (channels x length) view of batch entry b of a rank-3 tensor.
  MatrixMap slice(Index b) {
    require_rank(3);
    return MatrixMap(data_.data() + b * shape_[1] * shape_[2], shape_[1], shape_[2]);
  }
  ConstMatrixMap slice(Index b) const {
    require_rank(3);
    return ConstMatrixMap(data_.data() + b * shape_[1] * shape_[2], shape_[1], shape_[2]);
  }

  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  void check_shape() const {
    for (Index d : shape_) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
  }
  void require_rank(int r) const {
    if (rank() != r) {
      throw DimensionError("expected rank-" + std::to_string(r) + " tensor, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  Array data_;
};

using Tensor = BasicTensor<double>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace sssd
