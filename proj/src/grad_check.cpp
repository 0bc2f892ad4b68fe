#include "must/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "must/error.hpp"

namespace must {

GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, double h) {
  if (!(h >= 1e-6 && h <= 1e-4))
    throw ContractError("grad_check: step h=" + std::to_string(h) + " outside [1e-6, 1e-4]");

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const Tensor y = f();
  if (y.numel() != 1)
    throw ContractError("grad_check: f must be scalar-valued, got shape " + shape_to_string(y.shape()));
  y.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.numel(), 0.0);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return f().item();
      };
      // Fourth-order central stencil: the two-point rule's O(h²) truncation
      // term alone exceeds the tolerance on coordinates with |g| near 1e-5.
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      values[i] = saved;
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_relative_error || result.coordinates_checked == 1) {
        result.max_relative_error = rel;
        result.param_index = pi;
        result.coordinate = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace must
