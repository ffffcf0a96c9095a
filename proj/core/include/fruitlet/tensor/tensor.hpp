#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fruitlet::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when a primitive receives operands of incompatible shape.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& primitive, const std::string& detail);
  const std::string& primitive() const { return primitive_; }

 private:
  std::string primitive_;
};

/// Raised by backward() on misuse (non-scalar loss, detached graph).
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a NaN/Inf is found where finite values are required.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorImpl;

/// Backward closure of one recorded operation. `out` is the tensor the op
/// produced; its grad buffer is populated when the closure runs.
struct GradNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
  const char* name = "";
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::shared_ptr<GradNode> grad_fn;

  void accumulate_grad(std::span<const double> g);
  std::span<double> grad_buffer();  // allocates zeros on first use
};

/// Dense row-major float64 tensor handle.
///
/// Copies share storage and graph history, like a reference-counted array.
/// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate; the
  /// recorded graph is released afterwards.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  bool all_finite() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Thread-local switch; while disabled, operations record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Throws NonFiniteError naming `what` when any element is NaN or Inf.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace fruitlet::tensor
