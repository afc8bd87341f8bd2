#pragma once

#include <functional>

#include "resfeat/tensor.hpp"

namespace resfeat {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update from `param.value.grad()`. The gradient
/// buffer is zeroed afterwards and `step_count` advances by one. A gradient
/// that is zero everywhere leaves the value untouched (moments still decay).
/// Throws Error when the value has no gradient buffer.
template <typename Scalar>
void adam_step(Parameter<Scalar>& param, const AdamOptions& options);

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index worst_index = -1;
  bool passed = false;
};

/// Central-difference gradient check in 64-bit. `loss` maps a point to a
/// scalar, `gradient` returns its analytic gradient at that point. The error
/// per element is |a - n| / max(1, |a| + |n|). When `max_probes` > 0 only that
/// many evenly spaced elements are probed.
GradCheckResult grad_check(const std::function<double(const Tensor<double>&)>& loss,
                           const std::function<Tensor<double>::Array(const Tensor<double>&)>& gradient,
                           const Tensor<double>& point, double tol, double step = 1e-4,
                           Index max_probes = -1);

/// Gradient check of a layer with loss = sum of its outputs.
GradCheckResult grad_check_op(const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                              const std::function<void(Tensor<double>&, const Tensor<double>::Array&)>& backward,
                              const Tensor<double>& input, double tol, double step = 1e-4);

}  // namespace resfeat
