#include "resfeat/tensor.hpp"

#include <sstream>

namespace resfeat {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape)
    : shape_(std::move(shape)), values_(Array::Zero(shape_size(shape_))) {}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(values_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Scalar value) {
  const Index n = shape_size(shape);
  return Tensor(std::move(shape), Array::Constant(n, value));
}

template <typename Scalar>
typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() {
  if (!grad_) grad_ = Array::Zero(values_.size());
  return *grad_;
}

template <typename Scalar>
const typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() const {
  if (!grad_) throw Error("tensor " + shape_string(shape_) + " has no gradient buffer");
  return *grad_;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  if (grad_) {
    grad_->setZero();
  } else {
    grad_ = Array::Zero(values_.size());
  }
}

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> Tensor<Scalar>::matrix(Index rows, Index cols) {
  if (rows * cols != size()) {
    throw DimensionError("cannot view tensor " + shape_string(shape_) + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return {values_.data(), rows, cols};
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> Tensor<Scalar>::matrix(Index rows, Index cols) const {
  if (rows * cols != size()) {
    throw DimensionError("cannot view tensor " + shape_string(shape_) + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return {values_.data(), rows, cols};
}

template <typename Scalar>
Eigen::Map<RowMatrix<Scalar>> Tensor<Scalar>::grad_matrix(Index rows, Index cols) {
  if (rows * cols != size()) {
    throw DimensionError("cannot view gradient of " + shape_string(shape_) + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return {grad().data(), rows, cols};
}

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in output " + shape_string(t.shape()));
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);

}  // namespace resfeat
