#pragma once

#include <array>
#include <cmath>

#include "occlinker/tensor.hpp"

namespace occlinker {

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const std::string& op) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError(op + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline void add_into(std::vector<Real>& dst, const std::vector<Real>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<Real> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return Tensor::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::TensorNode& n) {
    for (int pi = 0; pi < 2; ++pi) {
      auto& p = n.parents[static_cast<size_t>(pi)];
      if (!detail::wants_grad(p)) continue;
      p->ensure_grad();
      detail::add_into(p->grad, n.grad);
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<Real> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  return Tensor::make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::TensorNode& n) {
    if (detail::wants_grad(n.parents[0])) {
      n.parents[0]->ensure_grad();
      detail::add_into(n.parents[0]->grad, n.grad);
    }
    if (detail::wants_grad(n.parents[1])) {
      auto& p = n.parents[1];
      p->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<Real> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::TensorNode& n) {
    const auto& av = n.parents[0]->values;
    const auto& bv = n.parents[1]->values;
    if (detail::wants_grad(n.parents[0])) {
      n.parents[0]->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * bv[i];
    }
    if (detail::wants_grad(n.parents[1])) {
      n.parents[1]->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) n.parents[1]->grad[i] += n.grad[i] * av[i];
    }
  });
}

inline Tensor add_scalar(const Tensor& a, Real s) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v += s;
  return Tensor::make_result("add_scalar", a.shape(), std::move(out), {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    n.parents[0]->ensure_grad();
    detail::add_into(n.parents[0]->grad, n.grad);
  });
}

inline Tensor mul_scalar(const Tensor& a, Real s) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v *= s;
  return Tensor::make_result("mul_scalar", a.shape(), std::move(out), {a}, [s](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    n.parents[0]->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * s;
  });
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, Real(-1)); }

inline Tensor relu(const Tensor& a) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v = v > Real(0) ? v : Real(0);
  return Tensor::make_result("relu", a.shape(), std::move(out), {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (p->values[i] > Real(0)) p->grad[i] += n.grad[i];
  });
}

inline Tensor exp(const Tensor& a) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v = std::exp(v);
  return Tensor::make_result("exp", a.shape(), std::move(out), {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] * n.values[i];
  });
}

inline Tensor log(const Tensor& a) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v = std::log(v);
  return Tensor::make_result("log", a.shape(), std::move(out), {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i] / p->values[i];
  });
}

inline Tensor abs(const Tensor& a) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v = std::fabs(v);
  return Tensor::make_result("abs", a.shape(), std::move(out), {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      Real x = p->values[i];
      p->grad[i] += n.grad[i] * (x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0)));
    }
  });
}

inline Tensor pow_scalar(const Tensor& a, Real e) {
  std::vector<Real> out(a.data());
  for (auto& v : out) v = std::pow(v, e);
  return Tensor::make_result("pow_scalar", a.shape(), std::move(out), {a}, [e](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      Real d = (e == Real(0)) ? Real(0) : e * std::pow(p->values[i], e - Real(1));
      p->grad[i] += n.grad[i] * d;
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dims differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<Real> out(static_cast<size_t>(m * n), Real(0));
  const Real* A = a.data().data();
  const Real* B = b.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t kk = 0; kk < k; ++kk) {
      Real av = A[i * k + kk];
      if (av == Real(0)) continue;
      for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] += av * B[kk * n + j];
    }
  return Tensor::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::TensorNode& nd) {
    const Real* A = nd.parents[0]->values.data();
    const Real* B = nd.parents[1]->values.data();
    const Real* G = nd.grad.data();
    if (detail::wants_grad(nd.parents[0])) {
      nd.parents[0]->ensure_grad();
      Real* dA = nd.parents[0]->grad.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          Real g = G[i * n + j];
          if (g == Real(0)) continue;
          for (int64_t kk = 0; kk < k; ++kk) dA[i * k + kk] += g * B[kk * n + j];
        }
    }
    if (detail::wants_grad(nd.parents[1])) {
      nd.parents[1]->ensure_grad();
      Real* dB = nd.parents[1]->grad.data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
          Real av = A[i * k + kk];
          if (av == Real(0)) continue;
          for (int64_t j = 0; j < n; ++j) dB[kk * n + j] += av * G[i * n + j];
        }
    }
  });
}

inline Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d: expects rank-2, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<Real> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = a.data()[static_cast<size_t>(i * n + j)];
  return Tensor::make_result("transpose2d", {n, m}, std::move(out), {a}, [m, n](detail::TensorNode& nd) {
    if (!detail::wants_grad(nd.parents[0])) return;
    nd.parents[0]->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        nd.parents[0]->grad[static_cast<size_t>(i * n + j)] += nd.grad[static_cast<size_t>(j * m + i)];
  });
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<Real> out(a.data());
  return Tensor::make_result("reshape", std::move(shape), std::move(out), {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    n.parents[0]->ensure_grad();
    detail::add_into(n.parents[0]->grad, n.grad);
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int64_t rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: invalid axis " + std::to_string(axis));
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int64_t i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != out_shape[static_cast<size_t>(i)])
        throw ShapeError("concat: dim mismatch at axis " + std::to_string(i) + ": " +
                         shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    total += p.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  int64_t inner = 1;
  for (int64_t i = axis + 1; i < rank; ++i) inner *= out_shape[static_cast<size_t>(i)];
  int64_t outer = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];

  std::vector<Real> out(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<int64_t> axis_sizes;
  for (const auto& p : parts) axis_sizes.push_back(p.dim(axis));

  int64_t off_axis = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const int64_t an = axis_sizes[pi];
    const auto& src = parts[pi].data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(src.begin() + o * an * inner, src.begin() + (o + 1) * an * inner,
                out.begin() + (o * total + off_axis) * inner);
    off_axis += an;
  }
  return Tensor::make_result("concat", out_shape, std::move(out), parts,
                             [outer, inner, total, axis_sizes](detail::TensorNode& n) {
                               int64_t off_axis = 0;
                               for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                                 const int64_t an = axis_sizes[pi];
                                 auto& p = n.parents[pi];
                                 if (detail::wants_grad(p)) {
                                   p->ensure_grad();
                                   for (int64_t o = 0; o < outer; ++o)
                                     for (int64_t j = 0; j < an * inner; ++j)
                                       p->grad[static_cast<size_t>(o * an * inner + j)] +=
                                           n.grad[static_cast<size_t>((o * total + off_axis) * inner + j)];
                                 }
                                 off_axis += an;
                               }
                             });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  Real s = 0;
  for (Real v : a.data()) s += v;
  return Tensor::make_result("sum_all", {1}, {s}, {a}, [](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (auto& g : p->grad) g += n.grad[0];
  });
}

inline Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), Real(1) / static_cast<Real>(a.numel())); }

inline Tensor sum_axis0(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("sum_axis0: rank 0");
  const int64_t n0 = a.dim(0);
  const int64_t inner = a.numel() / n0;
  Shape out_shape(a.shape().begin() + 1, a.shape().end());
  if (out_shape.empty()) out_shape = {1};
  std::vector<Real> out(static_cast<size_t>(inner), Real(0));
  for (int64_t i = 0; i < n0; ++i)
    for (int64_t j = 0; j < inner; ++j) out[static_cast<size_t>(j)] += a.data()[static_cast<size_t>(i * inner + j)];
  return Tensor::make_result("sum_axis0", std::move(out_shape), std::move(out), {a},
                             [n0, inner](detail::TensorNode& n) {
                               if (!detail::wants_grad(n.parents[0])) return;
                               auto& p = n.parents[0];
                               p->ensure_grad();
                               for (int64_t i = 0; i < n0; ++i)
                                 for (int64_t j = 0; j < inner; ++j)
                                   p->grad[static_cast<size_t>(i * inner + j)] += n.grad[static_cast<size_t>(j)];
                             });
}

inline Tensor mean_axis0(const Tensor& a) { return mul_scalar(sum_axis0(a), Real(1) / static_cast<Real>(a.dim(0))); }

// ---------------------------------------------------------------------------
// softmax family (row-wise max subtraction for stability)
// ---------------------------------------------------------------------------

namespace detail {
struct AxisLines {
  int64_t outer, n, inner;
};
inline AxisLines axis_lines(const Shape& s, int64_t axis, const std::string& op) {
  if (axis < 0 || axis >= static_cast<int64_t>(s.size()))
    throw ShapeError(op + ": invalid axis " + std::to_string(axis) + " for " + shape_str(s));
  AxisLines out{1, s[static_cast<size_t>(axis)], 1};
  for (int64_t i = 0; i < axis; ++i) out.outer *= s[static_cast<size_t>(i)];
  for (int64_t i = axis + 1; i < static_cast<int64_t>(s.size()); ++i) out.inner *= s[static_cast<size_t>(i)];
  return out;
}
}  // namespace detail

inline Tensor softmax_axis(const Tensor& a, int64_t axis) {
  auto L = detail::axis_lines(a.shape(), axis, "softmax_axis");
  std::vector<Real> out(a.data().size());
  const auto& x = a.data();
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t in = 0; in < L.inner; ++in) {
      const int64_t base = o * L.n * L.inner + in;
      Real mx = x[static_cast<size_t>(base)];
      for (int64_t j = 1; j < L.n; ++j) mx = std::max(mx, x[static_cast<size_t>(base + j * L.inner)]);
      Real sum = 0;
      for (int64_t j = 0; j < L.n; ++j) {
        Real e = std::exp(x[static_cast<size_t>(base + j * L.inner)] - mx);
        out[static_cast<size_t>(base + j * L.inner)] = e;
        sum += e;
      }
      for (int64_t j = 0; j < L.n; ++j) out[static_cast<size_t>(base + j * L.inner)] /= sum;
    }
  return Tensor::make_result("softmax_axis", a.shape(), std::move(out), {a}, [L](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int64_t o = 0; o < L.outer; ++o)
      for (int64_t in = 0; in < L.inner; ++in) {
        const int64_t base = o * L.n * L.inner + in;
        Real dot = 0;
        for (int64_t j = 0; j < L.n; ++j) {
          size_t idx = static_cast<size_t>(base + j * L.inner);
          dot += n.grad[idx] * n.values[idx];
        }
        for (int64_t j = 0; j < L.n; ++j) {
          size_t idx = static_cast<size_t>(base + j * L.inner);
          p->grad[idx] += n.values[idx] * (n.grad[idx] - dot);
        }
      }
  });
}

inline Tensor log_softmax_axis(const Tensor& a, int64_t axis) {
  auto L = detail::axis_lines(a.shape(), axis, "log_softmax_axis");
  std::vector<Real> out(a.data().size());
  const auto& x = a.data();
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t in = 0; in < L.inner; ++in) {
      const int64_t base = o * L.n * L.inner + in;
      Real mx = x[static_cast<size_t>(base)];
      for (int64_t j = 1; j < L.n; ++j) mx = std::max(mx, x[static_cast<size_t>(base + j * L.inner)]);
      Real sum = 0;
      for (int64_t j = 0; j < L.n; ++j) sum += std::exp(x[static_cast<size_t>(base + j * L.inner)] - mx);
      Real lse = mx + std::log(sum);
      for (int64_t j = 0; j < L.n; ++j) {
        size_t idx = static_cast<size_t>(base + j * L.inner);
        out[idx] = x[idx] - lse;
      }
    }
  return Tensor::make_result("log_softmax_axis", a.shape(), std::move(out), {a}, [L](detail::TensorNode& n) {
    if (!detail::wants_grad(n.parents[0])) return;
    auto& p = n.parents[0];
    p->ensure_grad();
    for (int64_t o = 0; o < L.outer; ++o)
      for (int64_t in = 0; in < L.inner; ++in) {
        const int64_t base = o * L.n * L.inner + in;
        Real gsum = 0;
        for (int64_t j = 0; j < L.n; ++j) gsum += n.grad[static_cast<size_t>(base + j * L.inner)];
        for (int64_t j = 0; j < L.n; ++j) {
          size_t idx = static_cast<size_t>(base + j * L.inner);
          p->grad[idx] += n.grad[idx] - std::exp(n.values[idx]) * gsum;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// broadcast add of a per-axis vector (bias)
// ---------------------------------------------------------------------------

inline Tensor bias_add(const Tensor& x, const Tensor& b, int64_t axis) {
  auto L = detail::axis_lines(x.shape(), axis, "bias_add");
  if (b.rank() != 1 || b.dim(0) != L.n)
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " does not match axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  std::vector<Real> out(x.data());
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t j = 0; j < L.n; ++j) {
      Real bv = b.data()[static_cast<size_t>(j)];
      Real* row = out.data() + (o * L.n + j) * L.inner;
      for (int64_t in = 0; in < L.inner; ++in) row[in] += bv;
    }
  return Tensor::make_result("bias_add", x.shape(), std::move(out), {x, b}, [L](detail::TensorNode& n) {
    if (detail::wants_grad(n.parents[0])) {
      n.parents[0]->ensure_grad();
      detail::add_into(n.parents[0]->grad, n.grad);
    }
    if (detail::wants_grad(n.parents[1])) {
      auto& p = n.parents[1];
      p->ensure_grad();
      for (int64_t o = 0; o < L.outer; ++o)
        for (int64_t j = 0; j < L.n; ++j) {
          Real s = 0;
          const Real* row = n.grad.data() + (o * L.n + j) * L.inner;
          for (int64_t in = 0; in < L.inner; ++in) s += row[in];
          p->grad[static_cast<size_t>(j)] += s;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

// input [B,Cin,H,W], kernel [Cout,Cin,kh,kw]
inline Tensor conv2d(const Tensor& x, const Tensor& k, int64_t stride = 1, int64_t padding = 0) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,Cin,H,W], got " + shape_str(x.shape()));
  if (k.rank() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw], got " + shape_str(k.shape()));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != Ci)
    throw ShapeError("conv2d: channel axis mismatch, input Cin=" + std::to_string(Ci) +
                     " kernel Cin=" + std::to_string(k.dim(1)));
  if (kh > H + 2 * padding || kw > W + 2 * padding)
    throw ShapeError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " + shape_str(x.shape()));
  const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const int64_t Wo = (W + 2 * padding - kw) / stride + 1;

  std::vector<Real> out(static_cast<size_t>(B * Co * Ho * Wo), Real(0));
  const Real* X = x.data().data();
  const Real* K = k.data().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          Real acc = 0;
          for (int64_t ci = 0; ci < Ci; ++ci)
            for (int64_t th = 0; th < kh; ++th) {
              const int64_t ih = oh * stride - padding + th;
              if (ih < 0 || ih >= H) continue;
              const Real* xrow = X + ((b * Ci + ci) * H + ih) * W;
              const Real* krow = K + ((co * Ci + ci) * kh + th) * kw;
              for (int64_t tw = 0; tw < kw; ++tw) {
                const int64_t iw = ow * stride - padding + tw;
                if (iw < 0 || iw >= W) continue;
                acc += xrow[iw] * krow[tw];
              }
            }
          out[static_cast<size_t>(((b * Co + co) * Ho + oh) * Wo + ow)] = acc;
        }

  auto bw = [B, Ci, H, W, Co, kh, kw, Ho, Wo, stride, padding](detail::TensorNode& n) {
    const Real* X = n.parents[0]->values.data();
    const Real* K = n.parents[1]->values.data();
    const Real* G = n.grad.data();
    const bool wx = detail::wants_grad(n.parents[0]);
    const bool wk = detail::wants_grad(n.parents[1]);
    if (wx) n.parents[0]->ensure_grad();
    if (wk) n.parents[1]->ensure_grad();
    Real* dX = wx ? n.parents[0]->grad.data() : nullptr;
    Real* dK = wk ? n.parents[1]->grad.data() : nullptr;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t oh = 0; oh < Ho; ++oh)
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const Real g = G[((b * Co + co) * Ho + oh) * Wo + ow];
            if (g == Real(0)) continue;
            for (int64_t ci = 0; ci < Ci; ++ci)
              for (int64_t th = 0; th < kh; ++th) {
                const int64_t ih = oh * stride - padding + th;
                if (ih < 0 || ih >= H) continue;
                for (int64_t tw = 0; tw < kw; ++tw) {
                  const int64_t iw = ow * stride - padding + tw;
                  if (iw < 0 || iw >= W) continue;
                  const int64_t xi = ((b * Ci + ci) * H + ih) * W + iw;
                  const int64_t ki = ((co * Ci + ci) * kh + th) * kw + tw;
                  if (dX) dX[xi] += g * K[ki];
                  if (dK) dK[ki] += g * X[xi];
                }
              }
          }
  };
  return Tensor::make_result("conv2d", {B, Co, Ho, Wo}, std::move(out), {x, k}, bw);
}

using Dims3 = std::array<int64_t, 3>;

// input [B,Cin,H,W,D], kernel [Cout,Cin,kh,kw,kd]
inline Tensor conv3d(const Tensor& x, const Tensor& k, Dims3 stride = {1, 1, 1}, Dims3 padding = {1, 1, 1}) {
  if (x.rank() != 5) throw ShapeError("conv3d: input must be [B,Cin,H,W,D], got " + shape_str(x.shape()));
  if (k.rank() != 5) throw ShapeError("conv3d: kernel must be [Cout,Cin,kh,kw,kd], got " + shape_str(k.shape()));
  for (auto s : stride)
    if (s < 1) throw ShapeError("conv3d: stride must be >= 1");
  const int64_t B = x.dim(0), Ci = x.dim(1);
  const Dims3 in{x.dim(2), x.dim(3), x.dim(4)};
  const int64_t Co = k.dim(0);
  const Dims3 ks{k.dim(2), k.dim(3), k.dim(4)};
  if (k.dim(1) != Ci)
    throw ShapeError("conv3d: channel axis mismatch, input Cin=" + std::to_string(Ci) +
                     " kernel Cin=" + std::to_string(k.dim(1)));
  Dims3 out_d;
  for (int a = 0; a < 3; ++a) {
    if (ks[a] > in[a] + 2 * padding[a])
      throw ShapeError("conv3d: kernel exceeds padded input on axis " + std::to_string(a + 2));
    out_d[a] = (in[a] + 2 * padding[a] - ks[a]) / stride[a] + 1;
  }

  std::vector<Real> out(static_cast<size_t>(B * Co * out_d[0] * out_d[1] * out_d[2]), Real(0));
  const Real* X = x.data().data();
  const Real* K = k.data().data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t o0 = 0; o0 < out_d[0]; ++o0)
        for (int64_t o1 = 0; o1 < out_d[1]; ++o1)
          for (int64_t o2 = 0; o2 < out_d[2]; ++o2) {
            Real acc = 0;
            for (int64_t ci = 0; ci < Ci; ++ci)
              for (int64_t t0 = 0; t0 < ks[0]; ++t0) {
                const int64_t i0 = o0 * stride[0] - padding[0] + t0;
                if (i0 < 0 || i0 >= in[0]) continue;
                for (int64_t t1 = 0; t1 < ks[1]; ++t1) {
                  const int64_t i1 = o1 * stride[1] - padding[1] + t1;
                  if (i1 < 0 || i1 >= in[1]) continue;
                  const Real* xrow = X + (((b * Ci + ci) * in[0] + i0) * in[1] + i1) * in[2];
                  const Real* krow = K + (((co * Ci + ci) * ks[0] + t0) * ks[1] + t1) * ks[2];
                  for (int64_t t2 = 0; t2 < ks[2]; ++t2) {
                    const int64_t i2 = o2 * stride[2] - padding[2] + t2;
                    if (i2 < 0 || i2 >= in[2]) continue;
                    acc += xrow[i2] * krow[t2];
                  }
                }
              }
            out[static_cast<size_t>((((b * Co + co) * out_d[0] + o0) * out_d[1] + o1) * out_d[2] + o2)] = acc;
          }

  auto bw = [B, Ci, in, Co, ks, out_d, stride, padding](detail::TensorNode& n) {
    const Real* X = n.parents[0]->values.data();
    const Real* K = n.parents[1]->values.data();
    const Real* G = n.grad.data();
    const bool wx = detail::wants_grad(n.parents[0]);
    const bool wk = detail::wants_grad(n.parents[1]);
    if (wx) n.parents[0]->ensure_grad();
    if (wk) n.parents[1]->ensure_grad();
    Real* dX = wx ? n.parents[0]->grad.data() : nullptr;
    Real* dK = wk ? n.parents[1]->grad.data() : nullptr;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t o0 = 0; o0 < out_d[0]; ++o0)
          for (int64_t o1 = 0; o1 < out_d[1]; ++o1)
            for (int64_t o2 = 0; o2 < out_d[2]; ++o2) {
              const Real g = G[(((b * Co + co) * out_d[0] + o0) * out_d[1] + o1) * out_d[2] + o2];
              if (g == Real(0)) continue;
              for (int64_t ci = 0; ci < Ci; ++ci)
                for (int64_t t0 = 0; t0 < ks[0]; ++t0) {
                  const int64_t i0 = o0 * stride[0] - padding[0] + t0;
                  if (i0 < 0 || i0 >= in[0]) continue;
                  for (int64_t t1 = 0; t1 < ks[1]; ++t1) {
                    const int64_t i1 = o1 * stride[1] - padding[1] + t1;
                    if (i1 < 0 || i1 >= in[1]) continue;
                    for (int64_t t2 = 0; t2 < ks[2]; ++t2) {
                      const int64_t i2 = o2 * stride[2] - padding[2] + t2;
                      if (i2 < 0 || i2 >= in[2]) continue;
                      const int64_t xi = (((b * Ci + ci) * in[0] + i0) * in[1] + i1) * in[2] + i2;
                      const int64_t ki = (((co * Ci + ci) * ks[0] + t0) * ks[1] + t1) * ks[2] + t2;
                      if (dX) dX[xi] += g * K[ki];
                      if (dK) dK[ki] += g * X[xi];
                    }
                  }
                }
            }
  };
  return Tensor::make_result("conv3d", {B, Co, out_d[0], out_d[1], out_d[2]}, std::move(out), {x, k}, bw);
}

inline Tensor conv3d(const Tensor& x, const Tensor& k, int64_t stride, int64_t padding) {
  return conv3d(x, k, Dims3{stride, stride, stride}, Dims3{padding, padding, padding});
}

// input [B,Cin,H,W,D], kernel [Cin,Cout,kh,kw,kd].
// Output spatial dim per axis: (in-1)*stride - 2*padding + k.
// With a kernel stored as conv3d's [Cout,Cin,...], this op is the adjoint of
// conv3d: <conv3d(x,k), y> == <x, conv_transpose3d(y,k)>.
inline Tensor conv_transpose3d(const Tensor& x, const Tensor& k, Dims3 stride = {1, 1, 1},
                               Dims3 padding = {0, 0, 0}) {
  if (x.rank() != 5)
    throw ShapeError("conv_transpose3d: input must be [B,Cin,H,W,D], got " + shape_str(x.shape()));
  if (k.rank() != 5)
    throw ShapeError("conv_transpose3d: kernel must be [Cin,Cout,kh,kw,kd], got " + shape_str(k.shape()));
  for (auto s : stride)
    if (s < 1) throw ShapeError("conv_transpose3d: stride must be >= 1");
  const int64_t B = x.dim(0), Ci = x.dim(1);
  const Dims3 in{x.dim(2), x.dim(3), x.dim(4)};
  if (k.dim(0) != Ci)
    throw ShapeError("conv_transpose3d: channel axis mismatch, input Cin=" + std::to_string(Ci) +
                     " kernel Cin=" + std::to_string(k.dim(0)));
  const int64_t Co = k.dim(1);
  const Dims3 ks{k.dim(2), k.dim(3), k.dim(4)};
  Dims3 out_d;
  for (int a = 0; a < 3; ++a) {
    out_d[a] = (in[a] - 1) * stride[a] - 2 * padding[a] + ks[a];
    if (out_d[a] < 1) throw ShapeError("conv_transpose3d: non-positive output dim on axis " + std::to_string(a + 2));
  }

  std::vector<Real> out(static_cast<size_t>(B * Co * out_d[0] * out_d[1] * out_d[2]), Real(0));
  const Real* X = x.data().data();
  const Real* K = k.data().data();
  // gather form: out[o] = sum over kernel taps t with (o + p - t) divisible by stride
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t o0 = 0; o0 < out_d[0]; ++o0)
        for (int64_t o1 = 0; o1 < out_d[1]; ++o1)
          for (int64_t o2 = 0; o2 < out_d[2]; ++o2) {
            Real acc = 0;
            for (int64_t t0 = 0; t0 < ks[0]; ++t0) {
              const int64_t num0 = o0 + padding[0] - t0;
              if (num0 < 0 || num0 % stride[0]) continue;
              const int64_t i0 = num0 / stride[0];
              if (i0 >= in[0]) continue;
              for (int64_t t1 = 0; t1 < ks[1]; ++t1) {
                const int64_t num1 = o1 + padding[1] - t1;
                if (num1 < 0 || num1 % stride[1]) continue;
                const int64_t i1 = num1 / stride[1];
                if (i1 >= in[1]) continue;
                for (int64_t t2 = 0; t2 < ks[2]; ++t2) {
                  const int64_t num2 = o2 + padding[2] - t2;
                  if (num2 < 0 || num2 % stride[2]) continue;
                  const int64_t i2 = num2 / stride[2];
                  if (i2 >= in[2]) continue;
                  for (int64_t ci = 0; ci < Ci; ++ci)
                    acc += X[(((b * Ci + ci) * in[0] + i0) * in[1] + i1) * in[2] + i2] *
                           K[(((ci * Co + co) * ks[0] + t0) * ks[1] + t1) * ks[2] + t2];
                }
              }
            }
            out[static_cast<size_t>((((b * Co + co) * out_d[0] + o0) * out_d[1] + o1) * out_d[2] + o2)] = acc;
          }

  auto bw = [B, Ci, in, Co, ks, out_d, stride, padding](detail::TensorNode& n) {
    const Real* X = n.parents[0]->values.data();
    const Real* K = n.parents[1]->values.data();
    const Real* G = n.grad.data();
    const bool wx = detail::wants_grad(n.parents[0]);
    const bool wk = detail::wants_grad(n.parents[1]);
    if (wx) n.parents[0]->ensure_grad();
    if (wk) n.parents[1]->ensure_grad();
    Real* dX = wx ? n.parents[0]->grad.data() : nullptr;
    Real* dK = wk ? n.parents[1]->grad.data() : nullptr;
    // scatter form mirrors the input->output contribution map exactly
    for (int64_t b = 0; b < B; ++b)
      for (int64_t ci = 0; ci < Ci; ++ci)
        for (int64_t i0 = 0; i0 < in[0]; ++i0)
          for (int64_t i1 = 0; i1 < in[1]; ++i1)
            for (int64_t i2 = 0; i2 < in[2]; ++i2) {
              const int64_t xi = (((b * Ci + ci) * in[0] + i0) * in[1] + i1) * in[2] + i2;
              const Real xv = X[xi];
              Real dx_acc = 0;
              for (int64_t co = 0; co < Co; ++co)
                for (int64_t t0 = 0; t0 < ks[0]; ++t0) {
                  const int64_t o0 = i0 * stride[0] - padding[0] + t0;
                  if (o0 < 0 || o0 >= out_d[0]) continue;
                  for (int64_t t1 = 0; t1 < ks[1]; ++t1) {
                    const int64_t o1 = i1 * stride[1] - padding[1] + t1;
                    if (o1 < 0 || o1 >= out_d[1]) continue;
                    for (int64_t t2 = 0; t2 < ks[2]; ++t2) {
                      const int64_t o2 = i2 * stride[2] - padding[2] + t2;
                      if (o2 < 0 || o2 >= out_d[2]) continue;
                      const int64_t oi = (((b * Co + co) * out_d[0] + o0) * out_d[1] + o1) * out_d[2] + o2;
                      const int64_t ki = (((ci * Co + co) * ks[0] + t0) * ks[1] + t1) * ks[2] + t2;
                      dx_acc += G[oi] * K[ki];
                      if (dK) dK[ki] += G[oi] * xv;
                    }
                  }
                }
              if (dX) dX[xi] += dx_acc;
            }
  };
  return Tensor::make_result("conv_transpose3d", {B, Co, out_d[0], out_d[1], out_d[2]}, std::move(out), {x, k}, bw);
}

inline Tensor conv_transpose3d(const Tensor& x, const Tensor& k, int64_t stride, int64_t padding) {
  return conv_transpose3d(x, k, Dims3{stride, stride, stride}, Dims3{padding, padding, padding});
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

struct BatchNormStats {
  std::vector<Real> mean, var;  // per channel; var biased
};

// input [B,C,...], channel axis 1. Train mode normalizes with batch stats and
// updates `running` (EMA, biased variance); eval mode normalizes with the
// running stats.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps, bool training,
                         BatchNormStats* running, Real momentum = Real(0.1)) {
  if (x.rank() < 2) throw ShapeError("batch_norm: input must be [B,C,...], got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1);
  const int64_t spatial = x.numel() / (B * C);
  const int64_t N = B * spatial;  // elements per channel
  if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
    throw ShapeError("batch_norm: gamma/beta must have shape [C]");
  if (training && N < 2) throw ShapeError("batch_norm: train mode needs B*spatial >= 2 per channel");
  if (!training && (!running || running->mean.size() != static_cast<size_t>(C)))
    throw ConfigError("batch_norm: eval mode requires running stats");

  std::vector<Real> mean(static_cast<size_t>(C)), var(static_cast<size_t>(C));
  const auto& X = x.data();
  auto at = [&](int64_t b, int64_t c, int64_t s) -> Real {
    return X[static_cast<size_t>((b * C + c) * spatial + s)];
  };
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      Real m = 0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t s = 0; s < spatial; ++s) m += at(b, c, s);
      m /= static_cast<Real>(N);
      Real v = 0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t s = 0; s < spatial; ++s) {
          Real d = at(b, c, s) - m;
          v += d * d;
        }
      v /= static_cast<Real>(N);
      mean[static_cast<size_t>(c)] = m;
      var[static_cast<size_t>(c)] = v;
    }
    if (running) {
      if (running->mean.size() != static_cast<size_t>(C)) {
        running->mean.assign(static_cast<size_t>(C), Real(0));
        running->var.assign(static_cast<size_t>(C), Real(1));
      }
      for (int64_t c = 0; c < C; ++c) {
        running->mean[static_cast<size_t>(c)] =
            (Real(1) - momentum) * running->mean[static_cast<size_t>(c)] + momentum * mean[static_cast<size_t>(c)];
        running->var[static_cast<size_t>(c)] =
            (Real(1) - momentum) * running->var[static_cast<size_t>(c)] + momentum * var[static_cast<size_t>(c)];
      }
    }
  } else {
    mean = running->mean;
    var = running->var;
  }

  std::vector<Real> istd(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) istd[static_cast<size_t>(c)] = Real(1) / std::sqrt(var[static_cast<size_t>(c)] + eps);

  std::vector<Real> xhat(X.size()), out(X.size());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const Real m = mean[static_cast<size_t>(c)], is = istd[static_cast<size_t>(c)];
      const Real g = gamma.data()[static_cast<size_t>(c)], be = beta.data()[static_cast<size_t>(c)];
      for (int64_t s = 0; s < spatial; ++s) {
        const size_t i = static_cast<size_t>((b * C + c) * spatial + s);
        xhat[i] = (X[i] - m) * is;
        out[i] = g * xhat[i] + be;
      }
    }

  auto bw = [B, C, spatial, N, training, xhat, istd](detail::TensorNode& n) {
    const auto& gamma_v = n.parents[1]->values;
    const bool wx = detail::wants_grad(n.parents[0]);
    const bool wg = detail::wants_grad(n.parents[1]);
    const bool wb = detail::wants_grad(n.parents[2]);
    if (wx) n.parents[0]->ensure_grad();
    if (wg) n.parents[1]->ensure_grad();
    if (wb) n.parents[2]->ensure_grad();
    for (int64_t c = 0; c < C; ++c) {
      Real sum_dy = 0, sum_dy_xhat = 0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t s = 0; s < spatial; ++s) {
          const size_t i = static_cast<size_t>((b * C + c) * spatial + s);
          sum_dy += n.grad[i];
          sum_dy_xhat += n.grad[i] * xhat[i];
        }
      if (wg) n.parents[1]->grad[static_cast<size_t>(c)] += sum_dy_xhat;
      if (wb) n.parents[2]->grad[static_cast<size_t>(c)] += sum_dy;
      if (wx) {
        const Real g = gamma_v[static_cast<size_t>(c)];
        const Real is = istd[static_cast<size_t>(c)];
        for (int64_t b = 0; b < B; ++b)
          for (int64_t s = 0; s < spatial; ++s) {
            const size_t i = static_cast<size_t>((b * C + c) * spatial + s);
            if (training) {
              n.parents[0]->grad[i] += g * is *
                                       (n.grad[i] - sum_dy / static_cast<Real>(N) -
                                        xhat[i] * sum_dy_xhat / static_cast<Real>(N));
            } else {
              n.parents[0]->grad[i] += g * is * n.grad[i];
            }
          }
      }
    }
  };
  return Tensor::make_result("batch_norm", x.shape(), std::move(out), {x, gamma, beta}, bw);
}

// ---------------------------------------------------------------------------
// patch pooling and token layout
// ---------------------------------------------------------------------------

// [B,C,h,w] -> [B,C,floor(h/p),floor(w/p)], averaging non-overlapping p x p
// patches; remainder rows/cols are discarded.
inline Tensor patch_mean(const Tensor& x, int64_t p) {
  if (x.rank() != 4) throw ShapeError("patch_mean: input must be [B,C,h,w], got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (p < 1 || p > h || p > w)
    throw ShapeError("patch_mean: patch size " + std::to_string(p) + " invalid for " + shape_str(x.shape()));
  const int64_t gh = h / p, gw = w / p;
  std::vector<Real> out(static_cast<size_t>(B * C * gh * gw), Real(0));
  const Real* X = x.data().data();
  const Real inv = Real(1) / static_cast<Real>(p * p);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < gh; ++i)
        for (int64_t j = 0; j < gw; ++j) {
          Real acc = 0;
          for (int64_t di = 0; di < p; ++di)
            for (int64_t dj = 0; dj < p; ++dj)
              acc += X[((b * C + c) * h + i * p + di) * w + j * p + dj];
          out[static_cast<size_t>(((b * C + c) * gh + i) * gw + j)] = acc * inv;
        }
  return Tensor::make_result("patch_mean", {B, C, gh, gw}, std::move(out), {x},
                             [B, C, h, w, p, gh, gw, inv](detail::TensorNode& n) {
                               if (!detail::wants_grad(n.parents[0])) return;
                               auto& pr = n.parents[0];
                               pr->ensure_grad();
                               for (int64_t b = 0; b < B; ++b)
                                 for (int64_t c = 0; c < C; ++c)
                                   for (int64_t i = 0; i < gh; ++i)
                                     for (int64_t j = 0; j < gw; ++j) {
                                       const Real g = n.grad[static_cast<size_t>(((b * C + c) * gh + i) * gw + j)] * inv;
                                       for (int64_t di = 0; di < p; ++di)
                                         for (int64_t dj = 0; dj < p; ++dj)
                                           pr->grad[static_cast<size_t>(((b * C + c) * h + i * p + di) * w + j * p +
                                                                        dj)] += g;
                                     }
                             });
}

// tokens [N,d] with N == V*gh*gw in (view, patch-row, patch-col) row order
// -> volume [1,d,gh,gw,V] for the 3D decoding heads.
inline Tensor tokens_to_volume(const Tensor& tokens, int64_t V, int64_t gh, int64_t gw) {
  if (tokens.rank() != 2) throw ShapeError("tokens_to_volume: tokens must be [N,d]");
  const int64_t N = tokens.dim(0), d = tokens.dim(1);
  if (N != V * gh * gw)
    throw ShapeError("tokens_to_volume: token count " + std::to_string(N) + " != V*gh*gw = " +
                     std::to_string(V * gh * gw));
  std::vector<Real> out(static_cast<size_t>(d * gh * gw * V));
  const Real* T = tokens.data().data();
  for (int64_t c = 0; c < d; ++c)
    for (int64_t i = 0; i < gh; ++i)
      for (int64_t j = 0; j < gw; ++j)
        for (int64_t v = 0; v < V; ++v)
          out[static_cast<size_t>(((c * gh + i) * gw + j) * V + v)] = T[((v * gh + i) * gw + j) * d + c];
  return Tensor::make_result("tokens_to_volume", {1, d, gh, gw, V}, std::move(out), {tokens},
                             [V, gh, gw, d](detail::TensorNode& n) {
                               if (!detail::wants_grad(n.parents[0])) return;
                               auto& p = n.parents[0];
                               p->ensure_grad();
                               for (int64_t c = 0; c < d; ++c)
                                 for (int64_t i = 0; i < gh; ++i)
                                   for (int64_t j = 0; j < gw; ++j)
                                     for (int64_t v = 0; v < V; ++v)
                                       p->grad[static_cast<size_t>(((v * gh + i) * gw + j) * d + c)] +=
                                           n.grad[static_cast<size_t>(((c * gh + i) * gw + j) * V + v)];
                             });
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

// Q [n_q,d], K [n_k,d], V [n_k,d] -> [n_q,d]: Softmax(Q K^T / sqrt(d_grad)) V.
// Composite of primitive ops, so the backward pass is inherited.
inline Tensor scaled_dot_product_attention(const Tensor& Q, const Tensor& K, const Tensor& V, int64_t d_grad) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
    throw ShapeError("attention: Q/K/V must be rank-2 token matrices");
  if (K.dim(0) == 0) throw ShapeError("attention: empty key set");
  if (Q.dim(1) != K.dim(1))
    throw ShapeError("attention: feature dims differ, Q " + shape_str(Q.shape()) + " K " + shape_str(K.shape()));
  if (K.dim(0) != V.dim(0)) throw ShapeError("attention: K/V row counts differ");
  if (d_grad <= 0) throw ShapeError("attention: d_grad must be positive");
  Tensor scores = mul_scalar(matmul(Q, transpose2d(K)), Real(1) / std::sqrt(static_cast<Real>(d_grad)));
  return matmul(softmax_axis(scores, 1), V);
}

// ---------------------------------------------------------------------------
// non-differentiable utilities
// ---------------------------------------------------------------------------

// labels (any shape, integral values in [0,C)) -> one-hot with a new leading
// class axis: [C, ...labels shape].
inline Tensor one_hot(const Tensor& labels, int64_t C) {
  Shape out_shape;
  out_shape.push_back(C);
  for (int64_t d : labels.shape()) out_shape.push_back(d);
  const int64_t n = labels.numel();
  std::vector<Real> out(static_cast<size_t>(C * n), Real(0));
  for (int64_t i = 0; i < n; ++i) {
    const Real lv = labels.data()[static_cast<size_t>(i)];
    const int64_t l = static_cast<int64_t>(lv);
    if (static_cast<Real>(l) != lv || l < 0 || l >= C)
      throw ShapeError("one_hot: label " + std::to_string(lv) + " out of range [0," + std::to_string(C) + ")");
    out[static_cast<size_t>(l * n + i)] = Real(1);
  }
  return Tensor::from_data(std::move(out_shape), std::move(out), "one_hot");
}

// argmax along `axis` (first max wins); result drops that axis. Not differentiable.
inline Tensor argmax_axis(const Tensor& x, int64_t axis) {
  auto L = detail::axis_lines(x.shape(), axis, "argmax_axis");
  Shape out_shape;
  for (int64_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape = {1};
  std::vector<Real> out(static_cast<size_t>(L.outer * L.inner));
  for (int64_t o = 0; o < L.outer; ++o)
    for (int64_t in = 0; in < L.inner; ++in) {
      const int64_t base = o * L.n * L.inner + in;
      int64_t best = 0;
      Real bv = x.data()[static_cast<size_t>(base)];
      for (int64_t j = 1; j < L.n; ++j) {
        Real v = x.data()[static_cast<size_t>(base + j * L.inner)];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      out[static_cast<size_t>(o * L.inner + in)] = static_cast<Real>(best);
    }
  return Tensor::from_data(std::move(out_shape), std::move(out), "argmax_axis");
}

}  // namespace occlinker
