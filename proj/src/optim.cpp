#include "resfeat/optim.hpp"

#include <cmath>

namespace resfeat {

template <typename Scalar>
void adam_step(Parameter<Scalar>& param, const AdamOptions& options) {
  if (!param.value.has_grad()) {
    throw Error("adam_step: parameter '" + param.name + "' has no gradient");
  }
  auto& grad = param.value.grad();
  if (param.adam_m.size() != param.value.size() || param.adam_v.size() != param.value.size()) {
    throw DimensionError("adam_step: moment buffers of '" + param.name + "' do not match value");
  }
  const Scalar b1 = static_cast<Scalar>(options.beta1);
  const Scalar b2 = static_cast<Scalar>(options.beta2);
  param.step_count += 1;
  auto& m = param.adam_m.values();
  auto& v = param.adam_v.values();
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.square();

  if ((grad != Scalar(0)).any()) {
    const double t = static_cast<double>(param.step_count);
    const Scalar m_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(options.beta1, t)));
    const Scalar v_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(options.beta2, t)));
    const Scalar lr = static_cast<Scalar>(options.learning_rate);
    const Scalar eps = static_cast<Scalar>(options.eps);
    param.value.values() -= lr * (m * m_scale) / ((v * v_scale).sqrt() + eps);
  }
  grad.setZero();
}

template void adam_step(Parameter<float>&, const AdamOptions&);
template void adam_step(Parameter<double>&, const AdamOptions&);

namespace {

std::vector<Index> probe_indices(Index n, Index max_probes) {
  std::vector<Index> idx;
  if (max_probes <= 0 || max_probes >= n) {
    idx.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }
  for (Index k = 0; k < max_probes; ++k) idx.push_back((k * n) / max_probes + (n / max_probes) / 2);
  return idx;
}

}  // namespace

GradCheckResult grad_check(const std::function<double(const Tensor<double>&)>& loss,
                           const std::function<Tensor<double>::Array(const Tensor<double>&)>& gradient,
                           const Tensor<double>& point, double tol, double step, Index max_probes) {
  const Tensor<double>::Array analytic = gradient(point);
  if (analytic.size() != point.size()) {
    throw DimensionError("grad_check: analytic gradient has wrong length");
  }
  GradCheckResult result;
  Tensor<double> probe = point;
  for (Index i : probe_indices(point.size(), max_probes)) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = loss(probe);
    probe[i] = saved - step;
    const double down = loss(probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
    if (err > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = err;
      result.worst_index = i;
    }
  }
  result.passed = result.max_relative_error < tol;
  return result;
}

GradCheckResult grad_check_op(const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                              const std::function<void(Tensor<double>&, const Tensor<double>::Array&)>& backward,
                              const Tensor<double>& input, double tol, double step) {
  auto loss = [&](const Tensor<double>& x) { return forward(x).values().sum(); };
  auto gradient = [&](const Tensor<double>& x) {
    Tensor<double> in = x;
    in.zero_grad();
    const Tensor<double> out = forward(in);
    backward(in, Tensor<double>::Array::Ones(out.size()));
    return Tensor<double>::Array(in.grad());
  };
  return grad_check(loss, gradient, input, tol, step);
}

}  // namespace resfeat
