// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "core/tensor.hpp"

// Operation family of the tensor core. Every op is pure (inputs are never
// mutated) and records a backward node on the active tape when any input
// requires gradients. Broadcasting is allowed only over leading singleton
// dims: the smaller operand's non-singleton suffix must match the larger
// operand exactly; anything else requires an explicit reshape/expand.

namespace mtvl::nc {

template <class T>
using CMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using MMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
inline void record_if(bool needs_grad, Tensor<T>& out, std::function<void()> fn) {
  if (needs_grad && Tape<T>::recording()) {
    out.set_requires_grad(true);
    Tape<T>::current()->record(std::move(fn));
  }
}

template <class T>
inline void guard_inputs(std::initializer_list<const Tensor<T>*> ts, const char* op) {
  if (!finite_checks()) return;
  for (const Tensor<T>* t : ts) check_finite(t->values(), op);
}

// ---------------------------------------------------------------------------
// shape ops

template <class T>
Tensor<T> reshape(Tensor<T> x, Shape shape) {
  // -1 wildcard on a single axis
  int64_t wild = -1, prod = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      require(wild < 0, "reshape: more than one -1 in " + shape_str(shape));
      wild = int64_t(i);
    } else {
      prod *= shape[i];
    }
  }
  if (wild >= 0) {
    require(prod > 0 && x.numel() % prod == 0,
            "reshape: cannot infer -1 for " + shape_str(x.shape()) + " -> " + shape_str(shape));
    shape[size_t(wild)] = x.numel() / prod;
  }
  require(numel_of(shape) == x.numel(),
          "reshape: numel mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor<T> out = x.detach().alias_with_shape(std::move(shape));
  record_if(x.requires_grad(), out, [x, out]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (size_t i = 0; i < og.size(); ++i) ig[i] += og[i];
  });
  return out;
}

template <class T>
Tensor<T> flatten(Tensor<T> x) {
  return reshape(x, {x.numel()});
}

namespace detail {

inline Shape permuted_shape(const Shape& s, const std::vector<int64_t>& perm) {
  Shape out(s.size());
  for (size_t i = 0; i < perm.size(); ++i) out[i] = s[size_t(perm[i])];
  return out;
}

// Iterates the destination with an incrementing multi-index; `accumulate`
// lets the backward pass reuse the same kernel with the inverse perm.
template <class T>
void permute_fill(const std::vector<T>& src, const Shape& sshape, const std::vector<int64_t>& perm,
                  std::vector<T>& dst, bool accumulate) {
  const int64_t r = int64_t(sshape.size());
  Shape sstr(size_t(r), 1);
  for (int64_t i = r - 2; i >= 0; --i) sstr[size_t(i)] = sstr[size_t(i + 1)] * sshape[size_t(i + 1)];
  Shape dshape = permuted_shape(sshape, perm);
  std::vector<int64_t> step(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) step[size_t(i)] = sstr[size_t(perm[size_t(i)])];
  std::vector<int64_t> idx(size_t(r), 0);
  const int64_t n = numel_of(sshape);
  int64_t soff = 0;
  for (int64_t lin = 0; lin < n; ++lin) {
    if (accumulate)
      dst[size_t(lin)] += src[size_t(soff)];
    else
      dst[size_t(lin)] = src[size_t(soff)];
    for (int64_t i = r - 1; i >= 0; --i) {
      idx[size_t(i)]++;
      soff += step[size_t(i)];
      if (idx[size_t(i)] < dshape[size_t(i)]) break;
      soff -= idx[size_t(i)] * step[size_t(i)];
      idx[size_t(i)] = 0;
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> permute(Tensor<T> x, std::vector<int64_t> perm) {
  require(int64_t(perm.size()) == x.rank(),
          "permute: perm size " + std::to_string(perm.size()) + " vs rank " +
              std::to_string(x.rank()));
  guard_inputs<T>({&x}, "permute");
  Tensor<T> out = Tensor<T>::zeros(detail::permuted_shape(x.shape(), perm));
  detail::permute_fill(x.values(), x.shape(), perm, out.values(), false);
  record_if(x.requires_grad(), out, [x, out, perm]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    std::vector<int64_t> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int64_t(i);
    detail::permute_fill(og, out.shape(), inv, x.grad(), true);
  });
  return out;
}

template <class T>
Tensor<T> transpose2d(Tensor<T> x) {
  require(x.rank() == 2, "transpose2d: need rank-2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

template <class T>
Tensor<T> concat(std::vector<Tensor<T>> xs, int64_t axis) {
  require(!xs.empty(), "concat: empty input list");
  const int64_t r = xs[0].rank();
  require(axis >= 0 && axis < r, "concat: axis out of range");
  Shape oshape = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    require(x.rank() == r, "concat: rank mismatch");
    for (int64_t i = 0; i < r; ++i)
      require(i == axis || x.dim(i) == oshape[size_t(i)],
              "concat: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(oshape));
    total += x.dim(axis);
  }
  oshape[size_t(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= oshape[size_t(i)];
  for (int64_t i = axis + 1; i < r; ++i) inner *= oshape[size_t(i)];

  Tensor<T> out = Tensor<T>::zeros(oshape);
  auto& ov = out.values();
  int64_t offset = 0;
  bool any_rg = false;
  for (const auto& x : xs) {
    guard_inputs<T>({&x}, "concat");
    any_rg = any_rg || x.requires_grad();
    const auto& xv = x.values();
    const int64_t da = x.dim(axis);
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(xv.begin() + o * da * inner, da * inner,
                  ov.begin() + (o * total + offset) * inner);
    offset += da;
  }
  record_if(any_rg, out, [xs, out, axis, outer, inner, total]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    int64_t offset = 0;
    for (auto& x : xs) {
      const int64_t da = x.dim(axis);
      if (x.requires_grad()) {
        auto& ig = x.grad();
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = og.data() + (o * total + offset) * inner;
          T* dst = ig.data() + o * da * inner;
          for (int64_t i = 0; i < da * inner; ++i) dst[i] += src[i];
        }
      }
      offset += da;
    }
  });
  return out;
}

template <class T>
Tensor<T> slice(Tensor<T> x, int64_t axis, int64_t start, int64_t len) {
  const int64_t r = x.rank();
  require(axis >= 0 && axis < r, "slice: axis out of range");
  require(start >= 0 && len >= 0 && start + len <= x.dim(axis),
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
              ") out of bounds for " + shape_str(x.shape()));
  guard_inputs<T>({&x}, "slice");
  Shape oshape = x.shape();
  oshape[size_t(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int64_t i = axis + 1; i < r; ++i) inner *= x.dim(i);
  const int64_t da = x.dim(axis);

  Tensor<T> out = Tensor<T>::zeros(oshape);
  auto& ov = out.values();
  const auto& xv = x.values();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(xv.begin() + (o * da + start) * inner, len * inner, ov.begin() + o * len * inner);
  record_if(x.requires_grad(), out, [x, out, axis, start, len, outer, inner, da]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (int64_t o = 0; o < outer; ++o) {
      const T* src = og.data() + o * len * inner;
      T* dst = ig.data() + (o * da + start) * inner;
      for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

// [1, rest...] -> [n, rest...]; backward sums over the leading axis.
template <class T>
Tensor<T> expand_leading(Tensor<T> x, int64_t n) {
  require(x.rank() >= 1 && x.dim(0) == 1,
          "expand_leading: leading dim must be 1, got " + shape_str(x.shape()));
  guard_inputs<T>({&x}, "expand_leading");
  Shape oshape = x.shape();
  oshape[0] = n;
  Tensor<T> out = Tensor<T>::zeros(oshape);
  const auto& xv = x.values();
  auto& ov = out.values();
  const int64_t m = x.numel();
  for (int64_t i = 0; i < n; ++i) std::copy_n(xv.begin(), m, ov.begin() + i * m);
  record_if(x.requires_grad(), out, [x, out, n, m]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) ig[size_t(j)] += og[size_t(i * m + j)];
  });
  return out;
}

// ---------------------------------------------------------------------------
// elementwise binary ops with leading-singleton broadcast

namespace detail {

// Returns true if `small` broadcasts against `big` over leading singleton
// dims (equal shapes also return true).
inline bool leading_broadcastable(const Shape& small, const Shape& big) {
  if (small.size() != big.size()) return false;
  size_t i = 0;
  while (i < small.size() && small[i] == 1 && big[i] != 1) ++i;
  for (; i < small.size(); ++i)
    if (small[i] != big[i]) return false;
  return true;
}

template <class T>
struct BinaryPlan {
  bool a_small = false;  // a is the broadcast (tiled) side
  bool b_small = false;
  int64_t repeats = 1;
  int64_t block = 1;  // numel of the smaller operand
  Shape oshape;
};

template <class T>
BinaryPlan<T> binary_plan(Tensor<T> a, Tensor<T> b, const char* op) {
  BinaryPlan<T> p;
  if (a.shape() == b.shape()) {
    p.oshape = a.shape();
    p.block = a.numel();
    return p;
  }
  if (leading_broadcastable(a.shape(), b.shape())) {
    p.a_small = true;
    p.oshape = b.shape();
    p.block = a.numel();
    p.repeats = b.numel() / std::max<int64_t>(a.numel(), 1);
  } else if (leading_broadcastable(b.shape(), a.shape())) {
    p.b_small = true;
    p.oshape = a.shape();
    p.block = b.numel();
    p.repeats = a.numel() / std::max<int64_t>(b.numel(), 1);
  } else {
    throw ContractError(std::string(op) + ": shapes not broadcastable " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  }
  return p;
}

}  // namespace detail

template <class T, class FwdFn, class BwdFn>
Tensor<T> binary_op(Tensor<T> a, Tensor<T> b, const char* name, FwdFn fwd,
                    BwdFn bwd) {
  guard_inputs<T>({&a, &b}, name);
  auto plan = detail::binary_plan(a, b, name);
  Tensor<T> out = Tensor<T>::zeros(plan.oshape);
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  const int64_t blk = plan.block, reps = plan.repeats;
  if (plan.a_small) {
    for (int64_t r = 0; r < reps; ++r)
      for (int64_t i = 0; i < blk; ++i) ov[r * blk + i] = fwd(av[i], bv[r * blk + i]);
  } else if (plan.b_small) {
    for (int64_t r = 0; r < reps; ++r)
      for (int64_t i = 0; i < blk; ++i) ov[r * blk + i] = fwd(av[r * blk + i], bv[i]);
  } else {
    for (int64_t i = 0; i < blk; ++i) ov[i] = fwd(av[i], bv[i]);
  }
  check_finite(ov, name);
  record_if(a.requires_grad() || b.requires_grad(), out, [a, b, out, plan, bwd]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    const auto& av = a.values();
    const auto& bv = b.values();
    const int64_t blk = plan.block, reps = plan.repeats;
    const bool need_a = a.requires_grad(), need_b = b.requires_grad();
    T* ga = need_a ? a.grad().data() : nullptr;
    T* gb = need_b ? b.grad().data() : nullptr;
    auto accum = [&](int64_t ai, int64_t bi, int64_t oi) {
      T da, db;
      bwd(av[ai], bv[bi], og[oi], da, db);
      if (ga) ga[ai] += da;
      if (gb) gb[bi] += db;
    };
    if (plan.a_small) {
      for (int64_t r = 0; r < reps; ++r)
        for (int64_t i = 0; i < blk; ++i) accum(i, r * blk + i, r * blk + i);
    } else if (plan.b_small) {
      for (int64_t r = 0; r < reps; ++r)
        for (int64_t i = 0; i < blk; ++i) accum(r * blk + i, i, r * blk + i);
    } else {
      for (int64_t i = 0; i < blk; ++i) accum(i, i, i);
    }
  });
  return out;
}

template <class T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T, T, T g, T& da, T& db) {
        da = g;
        db = g;
      });
}

template <class T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T, T g, T& da, T& db) {
        da = g;
        db = -g;
      });
}

template <class T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& da, T& db) {
        da = g * y;
        db = g * x;
      });
}

template <class T>
Tensor<T> div(Tensor<T> a, Tensor<T> b) {
  return binary_op(
      a, b, "div", [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& da, T& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

// elementwise min/max; on ties the gradient goes to the first operand
template <class T>
Tensor<T> minimum(Tensor<T> a, Tensor<T> b) {
  return binary_op(
      a, b, "minimum", [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y, T g, T& da, T& db) {
        da = x <= y ? g : T(0);
        db = x <= y ? T(0) : g;
      });
}

template <class T>
Tensor<T> maximum(Tensor<T> a, Tensor<T> b) {
  return binary_op(
      a, b, "maximum", [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y, T g, T& da, T& db) {
        da = x >= y ? g : T(0);
        db = x >= y ? T(0) : g;
      });
}

// ---------------------------------------------------------------------------
// unary ops

template <class T, class FwdFn, class BwdFn>
Tensor<T> unary_op(Tensor<T> x, const char* name, FwdFn fwd, BwdFn dfdx) {
  guard_inputs<T>({&x}, name);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  check_finite(ov, name);
  record_if(x.requires_grad(), out, [x, out, dfdx]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    const auto& xv = x.values();
    const auto& ov = out.values();
    auto& ig = x.grad();
    for (size_t i = 0; i < og.size(); ++i) ig[i] += og[i] * dfdx(xv[i], ov[i]);
  });
  return out;
}

template <class T>
Tensor<T> neg(Tensor<T> x) {
  return unary_op(
      x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> abs(Tensor<T> x) {
  return unary_op(
      x, "abs", [](T v) { return v < T(0) ? -v : v; },
      [](T v, T) { return v < T(0) ? T(-1) : (v > T(0) ? T(1) : T(0)); });
}

template <class T>
Tensor<T> relu(Tensor<T> x) {
  return unary_op(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(Tensor<T> x) {
  return unary_op(
      x, "gelu",
      [](T v) { return T(0.5) * v * (T(1) + T(std::erf(double(v) * M_SQRT1_2))); },
      [](T v, T) {
        double phi = 0.5 * (1.0 + std::erf(double(v) * M_SQRT1_2));
        double pdf = std::exp(-0.5 * double(v) * double(v)) / std::sqrt(2.0 * M_PI);
        return T(phi + double(v) * pdf);
      });
}

template <class T>
Tensor<T> sigmoid(Tensor<T> x) {
  return unary_op(
      x, "sigmoid",
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + T(std::exp(-double(v))));
        T e = T(std::exp(double(v)));
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> exp(Tensor<T> x) {
  return unary_op(
      x, "exp", [](T v) { return T(std::exp(double(v))); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(Tensor<T> x) {
  return unary_op(
      x, "log", [](T v) { return T(std::log(double(v))); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> sqrt(Tensor<T> x) {
  return unary_op(
      x, "sqrt", [](T v) { return T(std::sqrt(double(v))); },
      [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> sin(Tensor<T> x) {
  return unary_op(
      x, "sin", [](T v) { return T(std::sin(double(v))); },
      [](T v, T) { return T(std::cos(double(v))); });
}

template <class T>
Tensor<T> add_scalar(Tensor<T> x, double c) {
  return unary_op(
      x, "add_scalar", [c](T v) { return v + T(c); }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(Tensor<T> x, double c) {
  return unary_op(
      x, "mul_scalar", [c](T v) { return v * T(c); }, [c](T, T) { return T(c); });
}

// ---------------------------------------------------------------------------
// matmul family (Eigen-backed inner kernel, single-threaded)

template <class T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: need rank-2 operands, got " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  require(a.dim(1) == b.dim(0), "matmul: inner dims differ " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
  guard_inputs<T>({&a, &b}, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  MMap<T>(out.values().data(), m, n).noalias() =
      CMap<T>(a.values().data(), m, k) * CMap<T>(b.values().data(), k, n);
  check_finite(out.values(), "matmul");
  record_if(a.requires_grad() || b.requires_grad(), out, [a, b, out, m, k, n]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    CMap<T> g(og.data(), m, n);
    if (a.requires_grad())
      MMap<T>(a.grad().data(), m, k).noalias() += g * CMap<T>(b.values().data(), k, n).transpose();
    if (b.requires_grad())
      MMap<T>(b.grad().data(), k, n).noalias() += CMap<T>(a.values().data(), m, k).transpose() * g;
  });
  return out;
}

// batched matmul: a is [B,m,k] (or [m,k], broadcast over the batch), b is [B,k,n]
template <class T>
Tensor<T> bmm(Tensor<T> a, Tensor<T> b) {
  require(b.rank() == 3, "bmm: rhs must be rank-3, got " + shape_str(b.shape()));
  const bool bc = a.rank() == 2;
  require(bc || a.rank() == 3, "bmm: lhs must be rank-2 or rank-3");
  const int64_t B = b.dim(0);
  require(bc || a.dim(0) == B, "bmm: batch mismatch " + shape_str(a.shape()) + " x " +
                                   shape_str(b.shape()));
  const int64_t m = bc ? a.dim(0) : a.dim(1);
  const int64_t k = bc ? a.dim(1) : a.dim(2);
  require(k == b.dim(1), "bmm: inner dims differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  const int64_t n = b.dim(2);
  guard_inputs<T>({&a, &b}, "bmm");
  Tensor<T> out = Tensor<T>::zeros({B, m, n});
  for (int64_t i = 0; i < B; ++i) {
    CMap<T> ai(a.values().data() + (bc ? 0 : i * m * k), m, k);
    CMap<T> bi(b.values().data() + i * k * n, k, n);
    MMap<T>(out.values().data() + i * m * n, m, n).noalias() = ai * bi;
  }
  check_finite(out.values(), "bmm");
  record_if(a.requires_grad() || b.requires_grad(), out, [a, b, out, B, m, k, n, bc]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    for (int64_t i = 0; i < B; ++i) {
      CMap<T> g(og.data() + i * m * n, m, n);
      CMap<T> ai(a.values().data() + (bc ? 0 : i * m * k), m, k);
      CMap<T> bi(b.values().data() + i * k * n, k, n);
      if (a.requires_grad())
        MMap<T>(a.grad().data() + (bc ? 0 : i * m * k), m, k).noalias() += g * bi.transpose();
      if (b.requires_grad())
        MMap<T>(b.grad().data() + i * k * n, k, n).noalias() += ai.transpose() * g;
    }
  });
  return out;
}

// a [B,m,k] x b [B,n,k]^T -> [B,m,n]
template <class T>
Tensor<T> bmm_nt(Tensor<T> a, Tensor<T> b) {
  require(a.rank() == 3 && b.rank() == 3, "bmm_nt: need rank-3 operands");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
          "bmm_nt: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  guard_inputs<T>({&a, &b}, "bmm_nt");
  const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({B, m, n});
  for (int64_t i = 0; i < B; ++i) {
    CMap<T> ai(a.values().data() + i * m * k, m, k);
    CMap<T> bi(b.values().data() + i * n * k, n, k);
    MMap<T>(out.values().data() + i * m * n, m, n).noalias() = ai * bi.transpose();
  }
  check_finite(out.values(), "bmm_nt");
  record_if(a.requires_grad() || b.requires_grad(), out, [a, b, out, B, m, k, n]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    for (int64_t i = 0; i < B; ++i) {
      CMap<T> g(og.data() + i * m * n, m, n);
      CMap<T> ai(a.values().data() + i * m * k, m, k);
      CMap<T> bi(b.values().data() + i * n * k, n, k);
      if (a.requires_grad()) MMap<T>(a.grad().data() + i * m * k, m, k).noalias() += g * bi;
      if (b.requires_grad())
        MMap<T>(b.grad().data() + i * n * k, n, k).noalias() += g.transpose() * ai;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// reductions

template <class T>
Tensor<T> sum_all(Tensor<T> x) {
  guard_inputs<T>({&x}, "sum_all");
  T acc = T(0);
  for (T v : x.values()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  record_if(x.requires_grad(), out, [x, out]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (auto& g : ig) g += og[0];
  });
  return out;
}

template <class T>
Tensor<T> mean_all(Tensor<T> x) {
  require(x.numel() > 0, "mean_all: empty tensor");
  return mul_scalar(sum_all(x), 1.0 / double(x.numel()));
}

template <class T>
Tensor<T> sum_axis(Tensor<T> x, int64_t axis, bool keepdim = false) {
  const int64_t r = x.rank();
  require(axis >= 0 && axis < r, "sum_axis: axis out of range");
  guard_inputs<T>({&x}, "sum_axis");
  int64_t outer = 1, inner = 1;
  const int64_t d = x.dim(axis);
  for (int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int64_t i = axis + 1; i < r; ++i) inner *= x.dim(i);
  Shape oshape;
  for (int64_t i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) oshape.push_back(1);
    } else {
      oshape.push_back(x.dim(i));
    }
  }
  Tensor<T> out = Tensor<T>::zeros(oshape);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < d; ++j)
      for (int64_t i = 0; i < inner; ++i) ov[o * inner + i] += xv[(o * d + j) * inner + i];
  record_if(x.requires_grad(), out, [x, out, outer, inner, d]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < d; ++j)
        for (int64_t i = 0; i < inner; ++i) ig[(o * d + j) * inner + i] += og[o * inner + i];
  });
  return out;
}

template <class T>
Tensor<T> mean_axis(Tensor<T> x, int64_t axis, bool keepdim = false) {
  return mul_scalar(sum_axis(x, axis, keepdim), 1.0 / double(x.dim(axis)));
}

}  // namespace mtvl::nc
