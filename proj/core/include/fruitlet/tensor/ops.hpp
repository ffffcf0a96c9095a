#pragma once

#include <cstddef>
#include <vector>

#include "fruitlet/tensor/tensor.hpp"

// Differentiable primitives. Each records a backward closure when grad mode is
// on and at least one operand requires grad.
namespace fruitlet::tensor {

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,n] -> [n,m]
Tensor transpose(const Tensor& a);

// Elementwise with broadcasting between equal-rank operands: every dimension
// must match or be 1 in one of the operands.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// Softmax over the last axis of a rank-2 tensor.
Tensor softmax_rows(const Tensor& a);
// log(sum(exp(.))) along `axis` (0 or 1) of a rank-2 tensor; the reduced axis
// is kept with size 1. Max-shifted so it is overflow-safe.
Tensor logsumexp(const Tensor& a, std::size_t axis);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
// Contiguous sub-range [start, start+length) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
// Flat-index gather into a rank-1 tensor.
Tensor pick(const Tensor& a, const std::vector<std::size_t>& flat_indices);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// input [N,C,H,W], weight [O,C,kh,kw], bias [O] (may be undefined)
// -> [N,O,Ho,Wo] with Ho = (H + 2p - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Conv2dOptions options = {});

}  // namespace fruitlet::tensor
