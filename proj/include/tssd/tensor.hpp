#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tssd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major array with an optional gradient buffer of the same size.
///
/// Rank-3 tensors are laid out batch x channels x time; rank-2 tensors are
/// batch x features. The gradient buffer is empty until something writes to
/// it (see `grad()`).
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Array::Zero(shape_size(shape_))) {
    check_shape();
  }

  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_size(shape_)) {
      throw std::invalid_argument("tensor: " + std::to_string(values_.size()) +
                                  " values do not fill shape " + shape_string(shape_));
    }
  }

  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.values_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar& at(Index b, Index c, Index t) { return values_[(b * shape_[1] + c) * shape_[2] + t]; }
  Scalar at(Index b, Index c, Index t) const { return values_[(b * shape_[1] + c) * shape_[2] + t]; }
  Scalar& at(Index r, Index c) { return values_[r * shape_[1] + c]; }
  Scalar at(Index r, Index c) const { return values_[r * shape_[1] + c]; }

  /// Leading axis as rows, everything else flattened into columns.
  MatrixMap matrix() { return MatrixMap(data(), shape_.at(0), shape_.at(0) ? size() / shape_[0] : 0); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data(), shape_.at(0), shape_.at(0) ? size() / shape_[0] : 0);
  }

  /// Channels x time view of one batch item of a rank-3 tensor.
  MatrixMap item(Index b) { return MatrixMap(data() + b * shape_[1] * shape_[2], shape_[1], shape_[2]); }
  ConstMatrixMap item(Index b) const {
    return ConstMatrixMap(data() + b * shape_[1] * shape_[2], shape_[1], shape_[2]);
  }

  bool has_grad() const { return grad_.size() == values_.size() && values_.size() > 0; }
  /// Gradient buffer, allocated as zeros on first access.
  Array& grad() {
    if (grad_.size() != values_.size()) grad_ = Array::Zero(values_.size());
    return grad_;
  }
  const Array& grad() const { return grad_; }
  void zero_grad() { grad_ = Array::Zero(values_.size()); }
  void clear_grad() { grad_.resize(0); }

  bool all_finite() const { return values_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    if (shape_.empty() && values_.size() == 0) return Tensor<Other>();
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.values_ == b.values_).all();
  }

 private:
  void check_shape() const {
    for (Index d : shape_) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension in " + shape_string(shape_));
    }
  }

  Shape shape_;
  Array values_;
  Array grad_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace tssd
