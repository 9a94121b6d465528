#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ssvc/tensor.hpp"

namespace ssvc {

// Raised when the probed function is not finite at the evaluation point, as
// opposed to a mismatch between analytic and numeric gradients.
class non_finite_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat index across all probed elements
  std::size_t probed = 0;
};

namespace detail {

template <std::floating_point T>
double eval_scalar(const std::function<Tensor<T>()>& f) {
  Tensor<T> y = f();
  if (y.size() != 1) throw shape_error("grad_check needs a scalar-valued function");
  double v = static_cast<double>(y.item());
  if (!std::isfinite(v)) throw non_finite_error("function value is not finite");
  return v;
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace detail

// Compares autodiff gradients of `f` with respect to `params` against
// central differences. `max_per_param` (0 = all) limits probing to an
// evenly strided subset of each parameter's elements. Parameter values are
// restored afterwards; their grad slots are zeroed.
template <std::floating_point T>
GradCheckResult grad_check_params(const std::function<Tensor<T>()>& f,
                                  std::vector<Tensor<T>> params, double eps,
                                  std::size_t max_per_param = 0) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check eps must be positive");
  for (auto& p : params) p.zero_grad();
  {
    Tensor<T> y = f();
    if (y.size() != 1) throw shape_error("grad_check needs a scalar-valued function");
    if (!std::isfinite(static_cast<double>(y.item()))) {
      throw non_finite_error("function value is not finite at the probe point");
    }
    y.backward();
  }
  GradCheckResult result;
  std::size_t flat = 0;
  for (auto& p : params) {
    std::vector<T> analytic(p.size(), T(0));
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::size_t stride = 1;
    if (max_per_param != 0 && p.size() > max_per_param) stride = p.size() / max_per_param;
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < p.size(); i += stride) {
      const T orig = vals[i];
      vals[i] = static_cast<T>(orig + eps);
      double up = detail::eval_scalar<T>(f);
      vals[i] = static_cast<T>(orig - eps);
      double down = detail::eval_scalar<T>(f);
      vals[i] = orig;
      double numeric = (up - down) / (2.0 * eps);
      double err = detail::rel_error(static_cast<double>(analytic[i]), numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_index = flat + i;
      }
      ++result.probed;
    }
    flat += p.size();
    p.zero_grad();
  }
  return result;
}

// Single-input form: the gradient of f at x0.
template <std::floating_point T>
GradCheckResult grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                           const Tensor<T>& x0, double eps) {
  Tensor<T> x(x0.shape(), std::vector<T>(x0.values().begin(), x0.values().end()), true);
  return grad_check_params<T>([&] { return f(x); }, {x}, eps);
}

}  // namespace ssvc
