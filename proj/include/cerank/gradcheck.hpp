#pragma once

// Central-difference gradient oracle. Deliberately independent of the tensor
// tape: it only needs a scalar function of a flat parameter vector, and all
// arithmetic here is 64-bit.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace cerank {

inline std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::vector<double> params, double eps = 1e-3) {
  if (!(eps > 0.0))
    throw std::invalid_argument("finite_difference_gradient: eps must be > 0");
  std::vector<double> grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double fp = f(params);
    params[i] = saved - eps;
    const double fm = f(params);
    params[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error(
          "finite_difference_gradient: non-finite function value at "
          "coordinate " +
          std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

// abs_floor absorbs finite-difference noise around zero gradients.
inline double gradient_rel_error(std::span<const double> analytic,
                                 std::span<const double> numeric,
                                 double abs_floor = 1e-7) {
  if (analytic.size() != numeric.size())
    throw std::invalid_argument("gradient_rel_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), abs_floor});
    const double rel = std::abs(a - b) / denom;
    if (std::abs(a - b) <= abs_floor) continue;
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace cerank
