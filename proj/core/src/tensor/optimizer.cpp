#include "fruitlet/tensor/optimizer.hpp"

#include <cmath>
#include <mutex>

namespace fruitlet::tensor {

OptimizerError::OptimizerError(const std::string& parameter, const std::string& detail)
    : std::runtime_error("optimizer: parameter '" + parameter + "': " + detail),
      parameter_(parameter) {}

namespace {

void check_gradients(const ParameterStore& store) {
  for (const auto& [name, t] : store.parameters()) {
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw OptimizerError(name, "non-finite gradient at flat index " + std::to_string(i));
      }
    }
  }
}

}  // namespace

void Sgd::step(ParameterStore& store) {
  std::unique_lock lock(store.mutex());
  check_gradients(store);
  for (auto& [name, t] : store.parameters()) {
    if (!t.has_grad()) continue;
    auto w = t.mutable_data();
    const auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
  }
}

void Adam::step(ParameterStore& store) {
  std::unique_lock lock(store.mutex());
  check_gradients(store);
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (auto& [name, t] : store.parameters()) {
    if (!t.has_grad()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(t.numel(), 0.0);
      v.assign(t.numel(), 0.0);
    }
    auto w = t.mutable_data();
    const auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
    }
  }
}

}  // namespace fruitlet::tensor
