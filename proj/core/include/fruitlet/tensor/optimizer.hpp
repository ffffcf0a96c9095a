#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fruitlet/tensor/parameter_store.hpp"

namespace fruitlet::tensor {

/// Raised when a step would consume a NaN/Inf gradient. No parameter is
/// modified when this is thrown.
class OptimizerError : public std::runtime_error {
 public:
  OptimizerError(const std::string& parameter, const std::string& detail);
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update using the gradients accumulated on `store`.
  /// Parameters without a gradient are left untouched.
  virtual void step(ParameterStore& store) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParameterStore& store) override;

 private:
  double lr_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {}
  void step(ParameterStore& store) override;
  long steps_taken() const { return t_; }

 private:
  AdamOptions opt_;
  long t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace fruitlet::tensor
