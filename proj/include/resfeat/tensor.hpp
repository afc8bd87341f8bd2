#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "resfeat/error.hpp"

namespace resfeat {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Shape& shape);
Index shape_size(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer of the same shape.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Array values);

  static Tensor constant(Shape shape, Scalar value);

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return values_.size(); }

  Array& values() noexcept { return values_; }
  const Array& values() const noexcept { return values_; }
  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  bool has_grad() const noexcept { return grad_.has_value(); }
  /// Gradient buffer; allocated (zero-filled) on first access.
  Array& grad();
  const Array& grad() const;
  void zero_grad();
  void drop_grad() noexcept { grad_.reset(); }

  /// Row-major view as a rows x cols matrix; rows * cols must equal size().
  Eigen::Map<RowMatrix<Scalar>> matrix(Index rows, Index cols);
  Eigen::Map<const RowMatrix<Scalar>> matrix(Index rows, Index cols) const;
  Eigen::Map<RowMatrix<Scalar>> grad_matrix(Index rows, Index cols);

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  Shape shape_;
  Array values_;
  std::optional<Array> grad_;
};

/// Throws NumericError naming `op` when t holds a NaN or Inf.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* op);

/// Trainable weight tensor plus ADAM state.
template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> adam_m;
  Tensor<Scalar> adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<Scalar> v)
      : name(std::move(n)),
        value(std::move(v)),
        adam_m(value.shape()),
        adam_v(value.shape()) {}
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace resfeat
