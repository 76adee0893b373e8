#pragma once

// Differentiable primitives. Broadcasting is limited to the leading
// dimensions: a binary op accepts operands whose shapes are equal or where
// one shape is a suffix of the other.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "vampnet/rng.hpp"
#include "vampnet/tensor.hpp"

namespace vampnet {

/// Magnitude subtracted from masked attention scores before the softmax.
inline constexpr double kMaskLarge = 1e9;

namespace detail {

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

inline void check_finite(std::span<const double> v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
}

template <typename F>
Tensor unary(const Tensor& x, F f, const char* name, std::function<void(Node&)> bw) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_op(x.shape(), std::move(out), {x}, std::move(bw), name);
}

}  // namespace detail

// ---------------------------------------------------------------- arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  Shape s = detail::broadcast_shape(a.shape(), b.shape(), "add");
  const std::size_t n = numel(s), na = a.size(), nb = b.size();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] + bv[i % nb];
  return make_op(std::move(s), std::move(out), {a, b},
                 [n, na, nb](detail::Node& o) {
                   if (double* ga = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < n; ++i) ga[i % na] += o.grad[i];
                   if (double* gb = detail::grad_ptr(o.inputs[1]))
                     for (std::size_t i = 0; i < n; ++i) gb[i % nb] += o.grad[i];
                 },
                 "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  Shape s = detail::broadcast_shape(a.shape(), b.shape(), "sub");
  const std::size_t n = numel(s), na = a.size(), nb = b.size();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] - bv[i % nb];
  return make_op(std::move(s), std::move(out), {a, b},
                 [n, na, nb](detail::Node& o) {
                   if (double* ga = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < n; ++i) ga[i % na] += o.grad[i];
                   if (double* gb = detail::grad_ptr(o.inputs[1]))
                     for (std::size_t i = 0; i < n; ++i) gb[i % nb] -= o.grad[i];
                 },
                 "sub");
}

/// Element-wise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  Shape s = detail::broadcast_shape(a.shape(), b.shape(), "mul");
  const std::size_t n = numel(s), na = a.size(), nb = b.size();
  std::vector<double> out(n);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i % na] * bv[i % nb];
  return make_op(std::move(s), std::move(out), {a, b},
                 [n, na, nb](detail::Node& o) {
                   const auto& A = o.inputs[0]->data;
                   const auto& B = o.inputs[1]->data;
                   if (double* ga = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < n; ++i) ga[i % na] += o.grad[i] * B[i % nb];
                   if (double* gb = detail::grad_ptr(o.inputs[1]))
                     for (std::size_t i = 0; i < n; ++i) gb[i % nb] += o.grad[i] * A[i % na];
                 },
                 "mul");
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      x, [c](double v) { return c * v; }, "scale",
      [c](detail::Node& o) {
        if (double* g = detail::grad_ptr(o.inputs[0]))
          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += c * o.grad[i];
      });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      x, [c](double v) { return v + c; }, "add_scalar",
      [](detail::Node& o) {
        if (double* g = detail::grad_ptr(o.inputs[0]))
          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
      });
}

// ---------------------------------------------------------------- activations

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x,
      [](double v) {
        // Branches keep exp() from overflowing for large |v|.
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      "sigmoid",
      [](detail::Node& o) {
        if (double* g = detail::grad_ptr(o.inputs[0]))
          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * o.data[i] * (1.0 - o.data[i]);
      });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, "relu",
      [](detail::Node& o) {
        const auto& in = o.inputs[0]->data;
        if (double* g = detail::grad_ptr(o.inputs[0]))
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (in[i] > 0) g[i] += o.grad[i];
      });
}

/// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }, "gelu",
      [](detail::Node& o) {
        const auto& in = o.inputs[0]->data;
        if (double* g = detail::grad_ptr(o.inputs[0]))
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double v = in[i];
            double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
            double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
            g[i] += o.grad[i] * (cdf + v * pdf);
          }
      });
}

enum class Activation { Relu, Gelu };

inline Tensor activate(const Tensor& x, Activation a) { return a == Activation::Relu ? relu(x) : gelu(x); }

/// Inverted dropout: identity at evaluation, survivors rescaled by 1/(1-p)
/// during training.
inline Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0,1), got " + std::to_string(p));
  if (!train || p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> m(x.size());
  for (auto& v : m) v = rng.uniform() < p ? 0.0 : keep;
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * m[i];
  return make_op(x.shape(), std::move(out), {x},
                 [m = std::move(m)](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * m[i];
                 },
                 "dropout");
}

// ---------------------------------------------------------------- reductions

inline Tensor sum(const Tensor& x) {
  double s = 0;
  for (double v : x.data()) s += v;
  return make_op({1}, {s}, {x},
                 [](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < o.inputs[0]->data.size(); ++i) g[i] += o.grad[0];
                 },
                 "sum");
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Mean over one axis; the axis is removed from the shape.
inline Tensor mean_over_axis(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("mean_over_axis: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) os.push_back(s[i]);
  if (os.empty()) os = {1};
  std::vector<double> out(outer * inner, 0.0);
  auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += in[(o * len + l) * inner + i];
  for (auto& v : out) v /= static_cast<double>(len);
  return make_op(std::move(os), std::move(out), {x},
                 [outer, inner, len](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t a = 0; a < outer; ++a)
                       for (std::size_t l = 0; l < len; ++l)
                         for (std::size_t i = 0; i < inner; ++i)
                           g[(a * len + l) * inner + i] += o.grad[a * inner + i] / static_cast<double>(len);
                 },
                 "mean_over_axis");
}

/// Mean of x[b, l, :] over the positions l with valid[b*L + l] set. Rows with
/// no valid position produce zeros.
inline Tensor masked_mean(const Tensor& x, std::span<const std::uint8_t> valid) {
  if (x.rank() != 3) throw DimensionError("masked_mean expects [B x L x d], got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
  if (valid.size() != B * L) throw DimensionError("masked_mean: mask size does not match " + shape_str(x.shape()));
  std::vector<double> out(B * d, 0.0);
  std::vector<double> inv(B, 0.0);
  auto in = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t count = 0;
    for (std::size_t l = 0; l < L; ++l) {
      if (!valid[b * L + l]) continue;
      ++count;
      for (std::size_t k = 0; k < d; ++k) out[b * d + k] += in[(b * L + l) * d + k];
    }
    if (count) {
      inv[b] = 1.0 / static_cast<double>(count);
      for (std::size_t k = 0; k < d; ++k) out[b * d + k] *= inv[b];
    }
  }
  std::vector<std::uint8_t> mask(valid.begin(), valid.end());
  return make_op({B, d}, std::move(out), {x},
                 [B, L, d, mask = std::move(mask), inv = std::move(inv)](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t b = 0; b < B; ++b)
                       for (std::size_t l = 0; l < L; ++l)
                         if (mask[b * L + l])
                           for (std::size_t k = 0; k < d; ++k) g[(b * L + l) * d + k] += o.grad[b * d + k] * inv[b];
                 },
                 "masked_mean");
}

/// Zeroes x[b, i, :] (axis 1) or x[b, :, i] (axis 2) wherever valid[b*n + i]
/// is unset, n being the extent of that axis.
inline Tensor mask_axis(const Tensor& x, std::span<const std::uint8_t> valid, std::size_t axis) {
  if (x.rank() != 3 || (axis != 1 && axis != 2))
    throw DimensionError("mask_axis expects a rank-3 tensor and axis 1 or 2, got " + shape_str(x.shape()));
  const std::size_t B = x.dim(0), D1 = x.dim(1), D2 = x.dim(2);
  const std::size_t n = axis == 1 ? D1 : D2;
  if (valid.size() != B * n) throw DimensionError("mask_axis: mask size does not match " + shape_str(x.shape()));
  std::vector<double> keep(x.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < D1; ++i)
      for (std::size_t j = 0; j < D2; ++j)
        keep[(b * D1 + i) * D2 + j] = valid[b * n + (axis == 1 ? i : j)] ? 1.0 : 0.0;
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * keep[i];
  return make_op(x.shape(), std::move(out), {x},
                 [keep = std::move(keep)](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * keep[i];
                 },
                 "mask_axis");
}

// ---------------------------------------------------------------- shape ops

inline Tensor reshape(const Tensor& x, Shape s) {
  if (numel(s) != x.size())
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(s));
  return make_op(std::move(s), x.values(), {x},
                 [](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                 },
                 "reshape");
}

/// Swaps the last two dimensions.
inline Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  Shape s = x.shape();
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  const std::size_t batch = x.size() / (r * c);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = in[b * r * c + i * c + j];
  return make_op(std::move(s), std::move(out), {x},
                 [batch, r, c](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t b = 0; b < batch; ++b)
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) g[b * r * c + i * c + j] += o.grad[b * r * c + j * r + i];
                 },
                 "transpose");
}

/// Columns [start, start+len) of the last dimension.
inline Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
  Shape s = x.shape();
  const std::size_t c = s.back();
  if (len == 0 || start + len > c)
    throw DimensionError("slice_last [" + std::to_string(start) + "," + std::to_string(start + len) + ") of " +
                         shape_str(s));
  const std::size_t rows = x.size() / c;
  s.back() = len;
  std::vector<double> out(rows * len);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(in.begin() + r * c + start, len, out.begin() + r * len);
  return make_op(std::move(s), std::move(out), {x},
                 [rows, c, start, len](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t k = 0; k < len; ++k) g[r * c + start + k] += o.grad[r * len + k];
                 },
                 "slice_last");
}

/// Concatenation along the last dimension; leading dimensions must agree.
inline Tensor concat_last(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_last of nothing");
  Shape lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& x : xs) {
    Shape l(x.shape().begin(), x.shape().end() - 1);
    if (l != lead) throw DimensionError("concat_last: " + shape_str(xs[0].shape()) + " vs " + shape_str(x.shape()));
    widths.push_back(x.shape().back());
    total += x.shape().back();
  }
  const std::size_t rows = numel(lead);
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto in = xs[t].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(in.begin() + r * widths[t], widths[t], out.begin() + r * total + off);
    off += widths[t];
  }
  Shape s = lead;
  s.push_back(total);
  return make_op(std::move(s), std::move(out), xs,
                 [rows, total, widths](detail::Node& o) {
                   std::size_t off = 0;
                   for (std::size_t t = 0; t < widths.size(); ++t) {
                     if (double* g = detail::grad_ptr(o.inputs[t]))
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t k = 0; k < widths[t]; ++k) g[r * widths[t] + k] += o.grad[r * total + off + k];
                     off += widths[t];
                   }
                 },
                 "concat_last");
}

// ---------------------------------------------------------------- linear algebra

/// Matrix product over the last two dimensions. `b` is either a plain
/// [k x n] matrix shared by every leading index of `a`, or carries the same
/// leading dimensions as `a`.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t kb = bs[bs.size() - 2], n = bs.back();
  const bool shared = b.rank() == 2;
  bool ok = k == kb;
  if (!shared) ok = ok && Shape(as.begin(), as.end() - 2) == Shape(bs.begin(), bs.end() - 2);
  if (!ok) throw DimensionError("matmul shape mismatch " + shape_str(as) + " x " + shape_str(bs));
  const std::size_t batch = a.size() / (m * k);
  Shape s = as;
  s.back() = n;
  std::vector<double> out(batch * m * n, 0.0);
  const double* A = a.data().data();
  const double* Bp = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) {
    const double* At = A + t * m * k;
    const double* Bt = Bp + (shared ? 0 : t * k * n);
    double* Ct = out.data() + t * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = At[i * k + p];
        if (av == 0.0) continue;
        const double* brow = Bt + p * n;
        double* crow = Ct + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  }
  return make_op(std::move(s), std::move(out), {a, b},
                 [batch, m, k, n, shared](detail::Node& o) {
                   const double* A = o.inputs[0]->data.data();
                   const double* B = o.inputs[1]->data.data();
                   double* ga = detail::grad_ptr(o.inputs[0]);
                   double* gb = detail::grad_ptr(o.inputs[1]);
                   std::vector<double> bt;
                   for (std::size_t t = 0; t < batch; ++t) {
                     const double* G = o.grad.data() + t * m * n;
                     const double* At = A + t * m * k;
                     const double* Bt = B + (shared ? 0 : t * k * n);
                     if (ga) {
                       // dA = G B^T, accumulated row by row over a transposed copy of B
                       if (t == 0 || !shared) {
                         bt.resize(k * n);
                         for (std::size_t p = 0; p < k; ++p)
                           for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = Bt[p * n + j];
                       }
                       double* gat = ga + t * m * k;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) {
                           const double gv = G[i * n + j];
                           if (gv == 0.0) continue;
                           const double* brow = bt.data() + j * k;
                           double* arow = gat + i * k;
                           for (std::size_t p = 0; p < k; ++p) arow[p] += gv * brow[p];
                         }
                     }
                     if (gb) {
                       double* gbt = gb + (shared ? 0 : t * k * n);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t p = 0; p < k; ++p) {
                           const double av = At[i * k + p];
                           if (av == 0.0) continue;
                           for (std::size_t j = 0; j < n; ++j) gbt[p * n + j] += av * G[i * n + j];
                         }
                     }
                   }
                 },
                 "matmul");
}

/// Row-wise softmax over the last dimension, stabilised by subtracting the
/// row maximum. With `additive` (same element count as x), the mask is added
/// to the scores first and every entry whose mask is <= -kMaskLarge/2 is set
/// to exactly zero afterwards; a row masked everywhere becomes all zeros.
inline Tensor softmax_rows(const Tensor& x, std::span<const double> additive = {}) {
  detail::check_finite(x.data(), "softmax_rows");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  const bool masked = !additive.empty();
  if (masked && additive.size() != x.size())
    throw DimensionError("softmax_rows: mask has " + std::to_string(additive.size()) + " entries for " +
                         shape_str(x.shape()));
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    bool any_valid = !masked;
    for (std::size_t j = 0; j < n; ++j) {
      double v = xr[j] + (masked ? additive[r * n + j] : 0.0);
      yr[j] = v;
      mx = std::max(mx, v);
      if (masked && additive[r * n + j] > -kMaskLarge / 2) any_valid = true;
    }
    if (!any_valid) {
      std::fill(yr, yr + n, 0.0);
      continue;
    }
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(yr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] /= z;
      if (masked && additive[r * n + j] <= -kMaskLarge / 2) yr[j] = 0.0;
    }
  }
  return make_op(x.shape(), std::move(out), {x},
                 [rows, n](detail::Node& o) {
                   double* g = detail::grad_ptr(o.inputs[0]);
                   if (!g) return;
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* y = o.data.data() + r * n;
                     const double* gy = o.grad.data() + r * n;
                     double dot = 0;
                     for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
                     for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
                   }
                 },
                 "softmax_rows");
}

/// Layer normalisation over the last dimension with affine gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("layer_norm: parameters must have " + std::to_string(d) + " entries");
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size()), xhat(x.size()), inv_std(rows);
  auto in = x.data();
  auto gm = gamma.data(), bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0;
    for (std::size_t k = 0; k < d; ++k) mu += in[r * d + k];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t k = 0; k < d; ++k) {
      double c = in[r * d + k] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < d; ++k) {
      xhat[r * d + k] = (in[r * d + k] - mu) * inv_std[r];
      out[r * d + k] = xhat[r * d + k] * gm[k] + bt[k];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& o) {
                   const auto& gm = o.inputs[1]->data;
                   double* gx = detail::grad_ptr(o.inputs[0]);
                   double* gg = detail::grad_ptr(o.inputs[1]);
                   double* gbeta = detail::grad_ptr(o.inputs[2]);
                   std::vector<double> dxhat(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* gy = o.grad.data() + r * d;
                     const double* xh = xhat.data() + r * d;
                     double s1 = 0, s2 = 0;
                     for (std::size_t k = 0; k < d; ++k) {
                       if (gg) gg[k] += gy[k] * xh[k];
                       if (gbeta) gbeta[k] += gy[k];
                       dxhat[k] = gy[k] * gm[k];
                       s1 += dxhat[k];
                       s2 += dxhat[k] * xh[k];
                     }
                     if (gx) {
                       const double dd = static_cast<double>(d);
                       for (std::size_t k = 0; k < d; ++k)
                         gx[r * d + k] += inv_std[r] / dd * (dd * dxhat[k] - s1 - xh[k] * s2);
                     }
                   }
                 },
                 "layer_norm");
}

// ---------------------------------------------------------------- convolution

/// 1-D cross-correlation over the last axis of x [..., C_in, L] with kernels
/// [C_out, C_in, K] and an optional bias [C_out]. Output length is
/// floor((L + pad_left + pad_right - K) / stride) + 1.
inline Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride,
                     std::size_t pad_left, std::size_t pad_right) {
  if (x.rank() < 2 || kernels.rank() != 3)
    throw DimensionError("conv1d expects x [... x C_in x L] and kernels [C_out x C_in x K], got " +
                         shape_str(x.shape()) + " and " + shape_str(kernels.shape()));
  if (stride < 1) throw ConfigError("conv1d stride must be >= 1");
  const Shape& xs = x.shape();
  const std::size_t cin = xs[xs.size() - 2], L = xs.back();
  const std::size_t cout = kernels.dim(0), K = kernels.dim(2);
  if (kernels.dim(1) != cin)
    throw DimensionError("conv1d channel mismatch: input " + shape_str(xs) + ", kernels " +
                         shape_str(kernels.shape()));
  if (K > L + pad_left + pad_right)
    throw DimensionError("conv1d kernel of width " + std::to_string(K) + " exceeds padded input " + shape_str(xs));
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != cout) throw DimensionError("conv1d bias must have C_out entries");
  const std::size_t Lout = (L + pad_left + pad_right - K) / stride + 1;
  const std::size_t batch = x.size() / (cin * L);
  Shape s = xs;
  s[s.size() - 2] = cout;
  s.back() = Lout;
  std::vector<double> out(batch * cout * Lout, 0.0);
  const double* X = x.data().data();
  const double* W = kernels.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      double* y = out.data() + (b * cout + co) * Lout;
      if (has_bias) std::fill(y, y + Lout, bias[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xr = X + (b * cin + ci) * L;
        const double* w = W + (co * cin + ci) * K;
        for (std::size_t t = 0; t < Lout; ++t) {
          double acc = 0;
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad_left);
          for (std::size_t q = 0; q < K; ++q) {
            const std::ptrdiff_t pos = base + static_cast<std::ptrdiff_t>(q);
            if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) acc += w[q] * xr[pos];
          }
          y[t] += acc;
        }
      }
    }
  std::vector<Tensor> inputs{x, kernels};
  if (has_bias) inputs.push_back(bias);
  return make_op(std::move(s), std::move(out), inputs,
                 [=](detail::Node& o) {
                   const double* X = o.inputs[0]->data.data();
                   const double* W = o.inputs[1]->data.data();
                   double* gx = detail::grad_ptr(o.inputs[0]);
                   double* gw = detail::grad_ptr(o.inputs[1]);
                   double* gbias = has_bias ? detail::grad_ptr(o.inputs[2]) : nullptr;
                   for (std::size_t b = 0; b < batch; ++b)
                     for (std::size_t co = 0; co < cout; ++co) {
                       const double* gy = o.grad.data() + (b * cout + co) * Lout;
                       if (gbias)
                         for (std::size_t t = 0; t < Lout; ++t) gbias[co] += gy[t];
                       for (std::size_t ci = 0; ci < cin; ++ci) {
                         const double* xr = X + (b * cin + ci) * L;
                         const double* w = W + (co * cin + ci) * K;
                         for (std::size_t t = 0; t < Lout; ++t) {
                           const std::ptrdiff_t base =
                               static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(pad_left);
                           for (std::size_t q = 0; q < K; ++q) {
                             const std::ptrdiff_t pos = base + static_cast<std::ptrdiff_t>(q);
                             if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
                             if (gw) gw[(co * cin + ci) * K + q] += gy[t] * xr[pos];
                             if (gx) gx[(b * cin + ci) * L + pos] += gy[t] * w[q];
                           }
                         }
                       }
                     }
                 },
                 "conv1d");
}

inline Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  return conv1d(x, kernels, Tensor{}, stride, padding, padding);
}

/// Non-overlapping max pooling over the last axis (window == stride).
inline Tensor max_pool1d(const Tensor& x, std::size_t pool) {
  const std::size_t L = x.shape().back();
  if (pool < 1) throw ConfigError("max_pool1d window must be >= 1");
  if (L < pool)
    throw DimensionError("max_pool1d window " + std::to_string(pool) + " exceeds length of " + shape_str(x.shape()));
  const std::size_t Lout = L / pool;
  const std::size_t rows = x.size() / L;
  Shape s = x.shape();
  s.back() = Lout;
  std::vector<double> out(rows * Lout);
  std::vector<std::size_t> argmax(rows * Lout);
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < Lout; ++t) {
      std::size_t best = r * L + t * pool;
      for (std::size_t q = 1; q < pool; ++q)
        if (in[r * L + t * pool + q] > in[best]) best = r * L + t * pool + q;
      out[r * Lout + t] = in[best];
      argmax[r * Lout + t] = best;
    }
  return make_op(std::move(s), std::move(out), {x},
                 [argmax = std::move(argmax)](detail::Node& o) {
                   if (double* g = detail::grad_ptr(o.inputs[0]))
                     for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += o.grad[i];
                 },
                 "max_pool1d");
}

// ---------------------------------------------------------------- lookup & loss

/// Mean-pooled embedding lookup. bags[b*L + l] lists the table rows feeding
/// position (b, l); an empty bag yields a zero row. Row 0 (padding) never
/// contributes and never receives gradient.
inline Tensor embedding_bag(const Tensor& table, const std::vector<std::vector<int>>& bags, std::size_t B,
                            std::size_t L) {
  if (table.rank() != 2) throw DimensionError("embedding table must be [V x d], got " + shape_str(table.shape()));
  if (bags.size() != B * L) throw DimensionError("embedding_bag: bag count does not equal B*L");
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<double> out(B * L * d, 0.0);
  auto T = table.data();
  for (std::size_t p = 0; p < bags.size(); ++p) {
    if (bags[p].empty()) continue;
    const double w = 1.0 / static_cast<double>(bags[p].size());
    for (int id : bags[p]) {
      if (id < 0 || static_cast<std::size_t>(id) >= V)
        throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(V));
      if (id == 0) continue;
      for (std::size_t k = 0; k < d; ++k) out[p * d + k] += w * T[id * d + k];
    }
  }
  Shape s{B, L, d};
  return make_op(std::move(s), std::move(out), {table},
                 [bags, d](detail::Node& o) {
                   double* g = detail::grad_ptr(o.inputs[0]);
                   if (!g) return;
                   for (std::size_t p = 0; p < bags.size(); ++p) {
                     if (bags[p].empty()) continue;
                     const double w = 1.0 / static_cast<double>(bags[p].size());
                     for (int id : bags[p]) {
                       if (id == 0) continue;
                       for (std::size_t k = 0; k < d; ++k) g[id * d + k] += w * o.grad[p * d + k];
                     }
                   }
                 },
                 "embedding_bag");
}

/// Mean over the batch of w[y] * -log softmax(logits)[y].
inline Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels,
                                     std::span<const double> class_weights) {
  if (logits.rank() != 2) throw DimensionError("logits must be [B x C], got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  if (labels.size() != B) throw DimensionError("label count does not match batch size");
  if (class_weights.size() != C) throw ConfigError("need one class weight per logit column");
  for (double w : class_weights)
    if (!(w > 0)) throw ConfigError("class weights must be positive");
  detail::check_finite(logits.data(), "weighted_cross_entropy");
  std::vector<double> prob(B * C);
  std::vector<int> y(labels.begin(), labels.end());
  std::vector<double> w(class_weights.begin(), class_weights.end());
  auto in = logits.data();
  double loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if (y[b] < 0 || static_cast<std::size_t>(y[b]) >= C) throw ContractError("label outside class range");
    double mx = in[b * C];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, in[b * C + c]);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(in[b * C + c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c) prob[b * C + c] = std::exp(in[b * C + c] - lse);
    loss += w[y[b]] * (lse - in[b * C + y[b]]);
  }
  loss /= static_cast<double>(B);
  return make_op({1}, {loss}, {logits},
                 [B, C, prob = std::move(prob), y = std::move(y), w = std::move(w)](detail::Node& o) {
                   double* g = detail::grad_ptr(o.inputs[0]);
                   if (!g) return;
                   for (std::size_t b = 0; b < B; ++b) {
                     const double s = o.grad[0] * w[y[b]] / static_cast<double>(B);
                     for (std::size_t c = 0; c < C; ++c)
                       g[b * C + c] += s * (prob[b * C + c] - (static_cast<int>(c) == y[b] ? 1.0 : 0.0));
                   }
                 },
                 "weighted_cross_entropy");
}

}  // namespace vampnet
