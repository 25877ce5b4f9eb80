#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/tape.hpp"

namespace ranrec {

/// Computes a scalar loss from the current parameter values. When
/// `accumulate_gradient` is true it must also add d(loss)/d(param) into each
/// Parameter::grad.
using DifferentiableLoss = std::function<double(bool accumulate_gradient)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

namespace detail {

template <class Evaluate>
GradCheckResult grad_check_impl(const DifferentiableLoss& loss, const Evaluate& evaluate,
                                std::span<Parameter* const> params, double h) {
  for (Parameter* p : params) p->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const auto plus = evaluate();
      p.value[i] = saved - h;
      const auto minus = evaluate();
      p.value[i] = saved;
      if (!std::isfinite(static_cast<double>(plus)) || !std::isfinite(static_cast<double>(minus)))
        throw NumericError("grad_check: non-finite loss under perturbation of " + p.name);
      const double fd = static_cast<double>((plus - minus) / (2.0 * h));
      const double ad = analytic[k][i];
      const double err = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace detail

/// Central-difference gradient check. The error at each coordinate is
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|); the maximum is reported.
inline GradCheckResult grad_check(const DifferentiableLoss& loss,
                                  std::span<Parameter* const> params, double h = 1e-6) {
  return detail::grad_check_impl(loss, [&] { return loss(false); }, params, h);
}

/// The same check with the finite differences taken on `reference`, an
/// extended-precision evaluation of the same loss at the current parameter
/// values.
///
/// Needed when some gradient coordinates are exactly zero: a double loss
/// carries about one ulp of roundoff, which central differences with
/// h = 1e-6 amplify to ~1e-10, far above the 1e-8 floor.
using ReferenceLoss = std::function<long double()>;

inline GradCheckResult grad_check(const DifferentiableLoss& loss, const ReferenceLoss& reference,
                                  std::span<Parameter* const> params, double h = 1e-6) {
  return detail::grad_check_impl(loss, reference, params, h);
}

/// Convenience overload: `build` records a scalar-valued computation on a
/// fresh tape, binding the parameters through Tape::param.
inline GradCheckResult grad_check(const std::function<Var(Tape&)>& build,
                                  std::span<Parameter* const> params, double h = 1e-6) {
  return grad_check(
      [&](bool accumulate) {
        Tape tape;
        const Var out = build(tape);
        const double v = tape.scalar(out);
        if (accumulate) tape.backward(out);
        return v;
      },
      params, h);
}

}  // namespace ranrec
