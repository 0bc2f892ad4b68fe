#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "must/tensor.hpp"

namespace must {

struct GradCheckResult {
  double max_relative_error = 0.0;
  // Location of the worst coordinate.
  std::size_t param_index = 0;
  std::size_t coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Compares reverse-mode gradients of the scalar `f` with respect to `params`
// against the fourth-order central difference
// (8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h, coordinate by coordinate. Relative error uses the denominator max(|a|, |b|, 1e-8).
// `f` must rebuild its graph from the current parameter values on each call.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                           double h = 1e-5);

}  // namespace must
