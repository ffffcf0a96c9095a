#include "fruitlet/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace fruitlet::tensor {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Wraps a freshly computed value and, when needed, attaches its backward.
Tensor record(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
              const char* name, std::function<void(const TensorImpl&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  bool any = false;
  if (grad_mode_enabled()) {
    for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
  }
  if (!any) return out;
  auto node = std::make_shared<GradNode>();
  for (const auto& t : inputs) {
    if (t.defined()) node->inputs.push_back(t.impl());
  }
  node->backward = std::move(backward);
  node->name = name;
  out.impl()->grad_fn = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

void require_rank(const char* prim, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(prim, "expected rank " + std::to_string(rank) + ", got " +
                               shape_str(t.shape()));
  }
}

// Strides for reading `in` while iterating over `out`; broadcast axes get 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[i] = in[i] == 1 && out[i] != 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

Shape broadcast_shape(const char* prim, const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError(prim, "rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError(prim, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
  }
  return out;
}

// Calls fn(out_flat, a_flat, b_flat) over the broadcast iteration space.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, Fn&& fn) {
  const std::size_t n = numel_of(out);
  if (sa == out && sb == out) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const auto stra = broadcast_strides(sa, out);
  const auto strb = broadcast_strides(sb, out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      ia += stra[ax];
      ib += strb[ax];
      if (idx[ax] < out[ax]) break;
      ia -= stra[ax] * idx[ax];
      ib -= strb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const char* prim, BinOp op, const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shape(prim, a.shape(), b.shape());
  std::vector<double> out(numel_of(out_shape));
  const auto da = a.data();
  const auto db = b.data();
  for_each_broadcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t o, std::size_t i, std::size_t j) {
                       switch (op) {
                         case BinOp::kAdd: out[o] = da[i] + db[j]; break;
                         case BinOp::kSub: out[o] = da[i] - db[j]; break;
                         case BinOp::kMul: out[o] = da[i] * db[j]; break;
                       }
                     });
  return record(out_shape, std::move(out), {a, b}, prim,
                [a, b, op, out_shape](const TensorImpl& res) {
                  const auto& g = res.grad;
                  std::vector<double> ga, gb;
                  if (a.requires_grad()) ga.assign(a.numel(), 0.0);
                  if (b.requires_grad()) gb.assign(b.numel(), 0.0);
                  const auto da = a.data();
                  const auto db = b.data();
                  for_each_broadcast(out_shape, a.shape(), b.shape(),
                                     [&](std::size_t o, std::size_t i, std::size_t j) {
                                       switch (op) {
                                         case BinOp::kAdd:
                                           if (!ga.empty()) ga[i] += g[o];
                                           if (!gb.empty()) gb[j] += g[o];
                                           break;
                                         case BinOp::kSub:
                                           if (!ga.empty()) ga[i] += g[o];
                                           if (!gb.empty()) gb[j] -= g[o];
                                           break;
                                         case BinOp::kMul:
                                           if (!ga.empty()) ga[i] += g[o] * db[j];
                                           if (!gb.empty()) gb[j] += g[o] * da[i];
                                           break;
                                       }
                                     });
                  if (!ga.empty()) a.impl()->accumulate_grad(ga);
                  if (!gb.empty()) b.impl()->accumulate_grad(gb);
                });
}

// Unary elementwise op given value fn and derivative fn(x, y).
template <typename F, typename D>
Tensor unary(const char* prim, const Tensor& a, F f, D dfdx) {
  std::vector<double> out(a.numel());
  const auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(da[i]);
  return record(a.shape(), std::move(out), {a}, prim, [a, dfdx](const TensorImpl& res) {
    if (!a.requires_grad()) return;
    const auto da = a.data();
    std::vector<double> g(res.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = res.grad[i] * dfdx(da[i], res.data[i]);
    a.impl()->accumulate_grad(g);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " +
                                   shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  return record({m, n}, std::move(out), {a, b}, "matmul", [a, b, m, k, n](const TensorImpl& res) {
    ConstMapMat g(res.grad.data(), m, n);
    if (a.requires_grad()) {
      std::vector<double> ga(m * k);
      MapMat(ga.data(), m, k).noalias() = g * ConstMapMat(b.data().data(), k, n).transpose();
      a.impl()->accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(k * n);
      MapMat(gb.data(), k, n).noalias() = ConstMapMat(a.data().data(), m, k).transpose() * g;
      b.impl()->accumulate_grad(gb);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto da = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = da[i * n + j];
  return record({n, m}, std::move(out), {a}, "transpose", [a, m, n](const TensorImpl& res) {
    if (!a.requires_grad()) return;
    std::vector<double> g(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] = res.grad[j * m + i];
    a.impl()->accumulate_grad(g);
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::kMul, a, b); }

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double x) { return x + value; },
               [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor softmax_rows(const Tensor& a) {
  require_rank("softmax_rows", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (n == 0) throw ShapeError("softmax_rows", "empty rows in " + shape_str(a.shape()));
  std::vector<double> out(m * n);
  const auto da = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = da.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  return record({m, n}, std::move(out), {a}, "softmax_rows", [a, m, n](const TensorImpl& res) {
    if (!a.requires_grad()) return;
    std::vector<double> g(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += res.grad[i * n + j] * res.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] = res.data[i * n + j] * (res.grad[i * n + j] - dot);
    }
    a.impl()->accumulate_grad(g);
  });
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  require_rank("logsumexp", a, 2);
  if (axis > 1) throw ShapeError("logsumexp", "axis must be 0 or 1");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if ((axis == 0 ? m : n) == 0) throw ShapeError("logsumexp", "empty reduction axis");
  const auto da = a.data();
  // Views the reduction as `outer` lanes of `inner` elements with stride.
  const std::size_t lanes = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t lane_step = axis == 1 ? n : 1;
  const std::size_t elem_step = axis == 1 ? 1 : n;
  std::vector<double> out(lanes);
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t base = l * lane_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < len; ++e) mx = std::max(mx, da[base + e * elem_step]);
    if (!std::isfinite(mx)) {
      out[l] = mx;
      continue;
    }
    double s = 0.0;
    for (std::size_t e = 0; e < len; ++e) s += std::exp(da[base + e * elem_step] - mx);
    out[l] = mx + std::log(s);
  }
  Shape shape = axis == 1 ? Shape{m, 1} : Shape{1, n};
  return record(shape, std::move(out), {a}, "logsumexp",
                [a, lanes, len, lane_step, elem_step](const TensorImpl& res) {
                  if (!a.requires_grad()) return;
                  const auto da = a.data();
                  std::vector<double> g(a.numel(), 0.0);
                  for (std::size_t l = 0; l < lanes; ++l) {
                    const std::size_t base = l * lane_step;
                    for (std::size_t e = 0; e < len; ++e) {
                      const std::size_t idx = base + e * elem_step;
                      g[idx] = res.grad[l] * std::exp(da[idx] - res.data[l]);
                    }
                  }
                  a.impl()->accumulate_grad(g);
                });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no operands");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat", "axis " + std::to_string(axis) + " out of range for " +
                                   shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat", "operand " + shape_str(s) + " incompatible with " +
                                     shape_str(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(numel_of(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.shape()[axis] * inner;
    const auto dp = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(dp.begin() + o * chunk, chunk, out.begin() + o * out_row + off);
    off += chunk;
  }
  return record(out_shape, std::move(out), parts, "concat",
                [parts, offsets, outer, inner, out_row, axis](const TensorImpl& res) {
                  for (std::size_t k = 0; k < parts.size(); ++k) {
                    const auto& p = parts[k];
                    if (!p.requires_grad()) continue;
                    const std::size_t chunk = p.shape()[axis] * inner;
                    std::vector<double> g(p.numel());
                    for (std::size_t o = 0; o < outer; ++o)
                      std::copy_n(res.grad.begin() + o * out_row + offsets[k], chunk,
                                  g.begin() + o * chunk);
                    p.impl()->accumulate_grad(g);
                  }
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return record(std::move(shape), std::move(out), {a}, "reshape", [a](const TensorImpl& res) {
    if (a.requires_grad()) a.impl()->accumulate_grad(res.grad);
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || start + length > s[axis]) {
    throw ShapeError("slice", "range [" + std::to_string(start) + "," +
                                  std::to_string(start + length) + ") on axis " +
                                  std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t in_row = s[axis] * inner, chunk = length * inner, off = start * inner;
  std::vector<double> out(outer * chunk);
  const auto da = a.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(da.begin() + o * in_row + off, chunk, out.begin() + o * chunk);
  return record(out_shape, std::move(out), {a}, "slice",
                [a, outer, in_row, chunk, off](const TensorImpl& res) {
                  if (!a.requires_grad()) return;
                  auto g = a.impl()->grad_buffer();
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < chunk; ++i)
                      g[o * in_row + off + i] += res.grad[o * chunk + i];
                });
}

Tensor pick(const Tensor& a, const std::vector<std::size_t>& flat_indices) {
  const auto da = a.data();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= da.size()) {
      throw ShapeError("pick", "flat index " + std::to_string(flat_indices[i]) +
                                   " out of range for " + shape_str(a.shape()));
    }
    out[i] = da[flat_indices[i]];
  }
  return record({flat_indices.size()}, std::move(out), {a}, "pick",
                [a, flat_indices](const TensorImpl& res) {
                  if (!a.requires_grad()) return;
                  auto g = a.impl()->grad_buffer();
                  for (std::size_t i = 0; i < flat_indices.size(); ++i)
                    g[flat_indices[i]] += res.grad[i];
                });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return record({}, {s}, {a}, "sum", [a](const TensorImpl& res) {
    if (!a.requires_grad()) return;
    auto g = a.impl()->grad_buffer();
    for (auto& v : g) v += res.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Conv2dOptions options) {
  require_rank("conv2d", input, 4);
  require_rank("conv2d", weight, 4);
  const std::size_t nb = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t stride = options.stride, pad = options.padding;
  if (weight.dim(1) != c) {
    throw ShapeError("conv2d", "input " + shape_str(input.shape()) + " has " +
                                   std::to_string(c) + " channels, weight " +
                                   shape_str(weight.shape()) + " expects " +
                                   std::to_string(weight.dim(1)));
  }
  if (stride == 0) throw ShapeError("conv2d", "stride must be positive");
  if (h + 2 * pad < kh || w + 2 * pad < kw) {
    throw ShapeError("conv2d", "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                                   shape_str(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw ShapeError("conv2d", "bias " + shape_str(bias.shape()) + " does not match " +
                                   std::to_string(o) + " output channels");
  }
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  const std::size_t patch = c * kh * kw;
  const std::size_t positions = ho * wo;

  // im2col: one row per (batch, output position), one column per (c, ky, kx).
  auto cols = std::make_shared<std::vector<double>>(nb * positions * patch, 0.0);
  const auto din = input.data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* row = cols->data() + ((b * ho + oy) * wo + ox) * patch;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* plane = din.data() + (b * c + ch) * h * w;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              row[(ch * kh + ky) * kw + kx] = plane[iy * w + ix];
            }
          }
        }
      }
    }
  }

  // [nb*positions, patch] x [patch, o] -> [nb*positions, o], then to NCHW.
  RowMat prod = ConstMapMat(cols->data(), nb * positions, patch) *
                ConstMapMat(weight.data().data(), o, patch).transpose();
  std::vector<double> out(nb * o * positions);
  const auto dbias = bias.defined() ? bias.data() : std::span<const double>{};
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t oc = 0; oc < o; ++oc) {
      const double bv = dbias.empty() ? 0.0 : dbias[oc];
      for (std::size_t p = 0; p < positions; ++p)
        out[(b * o + oc) * positions + p] = prod(b * positions + p, oc) + bv;
    }

  return record(
      {nb, o, ho, wo}, std::move(out), {input, weight, bias}, "conv2d",
      [=](const TensorImpl& res) {
        RowMat g(nb * positions, o);
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t oc = 0; oc < o; ++oc)
            for (std::size_t p = 0; p < positions; ++p)
              g(b * positions + p, oc) = res.grad[(b * o + oc) * positions + p];
        if (bias.defined() && bias.requires_grad()) {
          std::vector<double> gb(o);
          for (std::size_t oc = 0; oc < o; ++oc) gb[oc] = g.col(oc).sum();
          bias.impl()->accumulate_grad(gb);
        }
        if (weight.requires_grad()) {
          std::vector<double> gw(o * patch);
          MapMat(gw.data(), o, patch).noalias() =
              g.transpose() * ConstMapMat(cols->data(), nb * positions, patch);
          weight.impl()->accumulate_grad(gw);
        }
        if (input.requires_grad()) {
          RowMat gcols = g * ConstMapMat(weight.data().data(), o, patch);
          auto gin = input.impl()->grad_buffer();
          for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t oy = 0; oy < ho; ++oy)
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const double* row = gcols.data() + ((b * ho + oy) * wo + ox) * patch;
                for (std::size_t ch = 0; ch < c; ++ch) {
                  double* plane = gin.data() + (b * c + ch) * h * w;
                  for (std::size_t ky = 0; ky < kh; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                static_cast<std::ptrdiff_t>(pad);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                      plane[iy * w + ix] += row[(ch * kh + ky) * kw + kx];
                    }
                  }
                }
              }
        }
      });
}

}  // namespace fruitlet::tensor
