#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ssdg/tensor.hpp"

namespace ssdg {

// Compares the recorded gradient of a scalar-valued function against central
// finite differences, coordinate by coordinate over every given parameter.
// Returns the max relative error with denominator max(|analytic|, |numeric|,
// 1e-8). The function must be a pure function of the parameters' data and is
// re-evaluated 2 * numel times.
inline double grad_check(const std::function<TensorT<double>()>& f,
                         std::vector<TensorT<double>> params, double epsilon = 1e-5) {
  for (auto& p : params) p.zero_grad();
  TensorT<double> loss = f();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  double max_rel = 0.0;
  autograd::NoGradGuard no_grad;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto pd = params[pi].data();
    for (size_t j = 0; j < pd.size(); ++j) {
      const double saved = pd[j];
      pd[j] = saved + epsilon;
      const double fp = f().item();
      pd[j] = saved - epsilon;
      const double fm = f().item();
      pd[j] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[pi][j];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace ssdg
