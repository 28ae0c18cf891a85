#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace quantgrid {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);

inline Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

/// Dense row-major tensor. Rank 0 (empty shape) holds one value.
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = RowMatrix<Scalar>;

  BasicTensor() : data_(Array::Zero(1)) {}

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    validate_extents();
    data_ = Array::Zero(shape_size(shape_));
  }

  BasicTensor(Shape shape, Array data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), to_array(values)) {}

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

  static BasicTensor full(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static BasicTensor scalar(Scalar value) { return BasicTensor(Shape{}, Array::Constant(1, value)); }

  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::DenseBase<Derived>& m) {
    BasicTensor t(Shape{m.rows(), m.cols()});
    t.matrix() = m.derived().template cast<Scalar>();
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }

  /// Extent of an axis; negative axes count from the back.
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(normalize_axis(axis))); }

  Index normalize_axis(Index axis) const {
    const Index r = rank();
    const Index a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
    }
    return a;
  }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  template <typename... Idx>
  Scalar& operator()(Idx... idx) {
    return data_[offset({static_cast<Index>(idx)...})];
  }
  template <typename... Idx>
  Scalar operator()(Idx... idx) const {
    return data_[offset({static_cast<Index>(idx)...})];
  }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor of shape " + to_string(shape_));
    return data_[0];
  }

  /// Rank-2 view.
  Eigen::Map<Matrix> matrix() {
    require_rank2();
    return Eigen::Map<Matrix>(data_.data(), shape_[0], shape_[1]);
  }
  Eigen::Map<const Matrix> matrix() const {
    require_rank2();
    return Eigen::Map<const Matrix>(data_.data(), shape_[0], shape_[1]);
  }

  /// The data viewed as (size / cols) x cols.
  Eigen::Map<Matrix> flat_matrix(Index cols) {
    return Eigen::Map<Matrix>(data_.data(), size() / cols, cols);
  }
  Eigen::Map<const Matrix> flat_matrix(Index cols) const {
    return Eigen::Map<const Matrix>(data_.data(), size() / cols, cols);
  }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  bool all_finite() const { return data_.isFinite().all(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    if (a.shape_ != b.shape_) return false;
    for (Index i = 0; i < a.size(); ++i) {
      if (a.data_[i] != b.data_[i]) return false;
    }
    return true;
  }

 private:
  static Array to_array(std::initializer_list<Scalar> values) {
    Array a(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) a[i++] = v;
    return a;
  }

  void validate_extents() const {
    for (Index d : shape_) {
      if (d <= 0) throw ShapeError("non-positive extent in shape " + to_string(shape_));
    }
  }

  void require_rank2() const {
    if (rank() != 2) throw ShapeError("expected a rank-2 tensor, got shape " + to_string(shape_));
  }

  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank()) {
      throw ShapeError("index arity does not match shape " + to_string(shape_));
    }
    Index off = 0;
    std::size_t a = 0;
    for (Index i : idx) {
      off = off * shape_[a] + i;
      ++a;
    }
    return off;
  }

  Shape shape_;
  Array data_;
};

using Tensor = BasicTensor<double>;

}  // namespace quantgrid
