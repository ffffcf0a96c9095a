#include "finite_difference.hpp"

#include <algorithm>
#include <cmath>

namespace fruitlet::testing {

using tensor::Tensor;

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn,
                                std::vector<std::pair<std::string, Tensor>> wrt, double h,
                                std::size_t max_entries_per_tensor) {
  for (auto& [_, t] : wrt) t.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& [_, t] : wrt) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  GradCheckReport report;
  tensor::NoGradGuard no_grad;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto& [name, t] = wrt[k];
    auto data = t.mutable_data();
    const std::size_t n = data.size();
    std::size_t step = 1;
    if (max_entries_per_tensor > 0 && n > max_entries_per_tensor) {
      step = (n + max_entries_per_tensor - 1) / max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = loss_fn().item();
      data[i] = orig - h;
      const double fm = loss_fn().item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = relative_error(analytic[k][i], numeric);
      ++report.entries_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_entry = name + "[" + std::to_string(i) + "] analytic=" +
                             std::to_string(analytic[k][i]) + " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

}  // namespace fruitlet::testing
