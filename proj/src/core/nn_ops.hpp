// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "core/ops.hpp"

// Structured ops: softmax/normalization/pooling/conv/embedding. Spatial ops
// follow one layout convention: rank-2 tensors are [H,W]; rank-3 are
// [N,H,W]; rank-4 are [B,H,W,C] (channels last). Pooling and upsampling act
// on the H,W dims of that convention.

namespace mtvl::nc {

namespace detail {

struct AxisSplit {
  int64_t outer, dim, inner;
};

inline AxisSplit axis_split(const Shape& s, int64_t axis) {
  AxisSplit a{1, s[size_t(axis)], 1};
  for (int64_t i = 0; i < axis; ++i) a.outer *= s[size_t(i)];
  for (int64_t i = axis + 1; i < int64_t(s.size()); ++i) a.inner *= s[size_t(i)];
  return a;
}

struct SpatialView {
  int64_t lead, h, w, chan;  // tensor viewed as [lead, h, w, chan]
};

inline SpatialView spatial_view(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1], 1};
  if (s.size() == 3) return {s[0], s[1], s[2], 1};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ContractError(std::string(op) + ": need rank 2..4, got " + shape_str(s));
}

}  // namespace detail

// softmax over a named axis; invariant to constant shifts along that axis
template <class T>
Tensor<T> softmax(Tensor<T> x, int64_t axis) {
  const int64_t r = x.rank();
  require(axis >= 0 && axis < r, "softmax: axis " + std::to_string(axis) + " out of range for " +
                                     shape_str(x.shape()));
  guard_inputs<T>({&x}, "softmax");
  auto sp = detail::axis_split(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.dim * sp.inner + i;
      T mx = xv[base];
      for (int64_t j = 1; j < sp.dim; ++j) mx = std::max(mx, xv[base + j * sp.inner]);
      T sum = T(0);
      for (int64_t j = 0; j < sp.dim; ++j) {
        T e = T(std::exp(double(xv[base + j * sp.inner] - mx)));
        ov[base + j * sp.inner] = e;
        sum += e;
      }
      for (int64_t j = 0; j < sp.dim; ++j) ov[base + j * sp.inner] /= sum;
    }
  }
  check_finite(ov, "softmax");
  record_if(x.requires_grad(), out, [x, out, sp]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    const auto& yv = out.values();
    auto& ig = x.grad();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t i = 0; i < sp.inner; ++i) {
        const int64_t base = o * sp.dim * sp.inner + i;
        T dot = T(0);
        for (int64_t j = 0; j < sp.dim; ++j)
          dot += og[base + j * sp.inner] * yv[base + j * sp.inner];
        for (int64_t j = 0; j < sp.dim; ++j) {
          const int64_t k = base + j * sp.inner;
          ig[k] += yv[k] * (og[k] - dot);
        }
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> log_softmax(Tensor<T> x, int64_t axis) {
  const int64_t r = x.rank();
  require(axis >= 0 && axis < r, "log_softmax: axis out of range");
  guard_inputs<T>({&x}, "log_softmax");
  auto sp = detail::axis_split(x.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.dim * sp.inner + i;
      T mx = xv[base];
      for (int64_t j = 1; j < sp.dim; ++j) mx = std::max(mx, xv[base + j * sp.inner]);
      double sum = 0.0;
      for (int64_t j = 0; j < sp.dim; ++j) sum += std::exp(double(xv[base + j * sp.inner] - mx));
      const T lse = mx + T(std::log(sum));
      for (int64_t j = 0; j < sp.dim; ++j)
        ov[base + j * sp.inner] = xv[base + j * sp.inner] - lse;
    }
  }
  check_finite(ov, "log_softmax");
  record_if(x.requires_grad(), out, [x, out, sp]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    const auto& yv = out.values();
    auto& ig = x.grad();
    for (int64_t o = 0; o < sp.outer; ++o) {
      for (int64_t i = 0; i < sp.inner; ++i) {
        const int64_t base = o * sp.dim * sp.inner + i;
        T gsum = T(0);
        for (int64_t j = 0; j < sp.dim; ++j) gsum += og[base + j * sp.inner];
        for (int64_t j = 0; j < sp.dim; ++j) {
          const int64_t k = base + j * sp.inner;
          ig[k] += og[k] - T(std::exp(double(yv[k]))) * gsum;
        }
      }
    }
  });
  return out;
}

// layer normalization over the last dim with learned scale/shift
template <class T>
Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta,
                     double eps = 1e-5) {
  const int64_t d = x.dim(x.rank() - 1);
  require(gamma.numel() == d && beta.numel() == d,
          "layer_norm: gamma/beta must have " + std::to_string(d) + " elements");
  guard_inputs<T>({&x, &gamma, &beta}, "layer_norm");
  const int64_t rows = x.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(size_t(rows));
  auto rstd = std::make_shared<std::vector<T>>(size_t(rows));
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += double(xr[j]);
    mu /= double(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      double c = double(xr[j]) - mu;
      var += c * c;
    }
    var /= double(d);
    const T rs = T(1.0 / std::sqrt(var + eps));
    (*mean)[size_t(r)] = T(mu);
    (*rstd)[size_t(r)] = rs;
    T* orow = ov.data() + r * d;
    for (int64_t j = 0; j < d; ++j) orow[j] = (xr[j] - T(mu)) * rs * gv[size_t(j)] + bv[size_t(j)];
  }
  check_finite(ov, "layer_norm");
  record_if(x.requires_grad() || gamma.requires_grad() || beta.requires_grad(), out,
            [x, gamma, beta, out, mean, rstd, rows, d]() mutable {
              const auto& og = out.grad_view();
              if (og.empty()) return;
              const auto& xv = x.values();
              const auto& gv = gamma.values();
              const bool nx = x.requires_grad(), ng = gamma.requires_grad(),
                         nb = beta.requires_grad();
              T* gx = nx ? x.grad().data() : nullptr;
              T* gg = ng ? gamma.grad().data() : nullptr;
              T* gb = nb ? beta.grad().data() : nullptr;
              for (int64_t r = 0; r < rows; ++r) {
                const T* xr = xv.data() + r * d;
                const T* go = og.data() + r * d;
                const T mu = (*mean)[size_t(r)], rs = (*rstd)[size_t(r)];
                double ha = 0.0, hb = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                  const T xh = (xr[j] - mu) * rs;
                  const T h = go[j] * gv[size_t(j)];
                  ha += double(h);
                  hb += double(h * xh);
                  if (gg) gg[j] += go[j] * xh;
                  if (gb) gb[j] += go[j];
                }
                if (gx) {
                  const T a = T(ha / double(d)), b = T(hb / double(d));
                  for (int64_t j = 0; j < d; ++j) {
                    const T xh = (xr[j] - mu) * rs;
                    gx[r * d + j] += rs * (go[j] * gv[size_t(j)] - a - xh * b);
                  }
                }
              }
            });
  return out;
}

// group normalization for channels-last [B,H,W,C] maps
template <class T>
Tensor<T> group_norm(Tensor<T> x, int64_t groups, Tensor<T> gamma,
                     Tensor<T> beta, double eps = 1e-5) {
  require(x.rank() == 4, "group_norm: need [B,H,W,C], got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(C % groups == 0, "group_norm: channels " + std::to_string(C) +
                               " not divisible by groups " + std::to_string(groups));
  require(gamma.numel() == C && beta.numel() == C, "group_norm: gamma/beta size mismatch");
  guard_inputs<T>({&x, &gamma, &beta}, "group_norm");
  const int64_t cs = C / groups;
  const int64_t hw = H * W;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(size_t(B * groups));
  auto rstd = std::make_shared<std::vector<T>>(size_t(B * groups));
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto& ov = out.values();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t g = 0; g < groups; ++g) {
      double mu = 0.0;
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t c = 0; c < cs; ++c) mu += double(xv[(b * hw + p) * C + g * cs + c]);
      const double n = double(hw * cs);
      mu /= n;
      double var = 0.0;
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t c = 0; c < cs; ++c) {
          double v = double(xv[(b * hw + p) * C + g * cs + c]) - mu;
          var += v * v;
        }
      var /= n;
      const T rs = T(1.0 / std::sqrt(var + eps));
      (*mean)[size_t(b * groups + g)] = T(mu);
      (*rstd)[size_t(b * groups + g)] = rs;
      for (int64_t p = 0; p < hw; ++p)
        for (int64_t c = 0; c < cs; ++c) {
          const int64_t k = (b * hw + p) * C + g * cs + c;
          ov[k] = (xv[k] - T(mu)) * rs * gv[size_t(g * cs + c)] + bv[size_t(g * cs + c)];
        }
    }
  }
  check_finite(ov, "group_norm");
  record_if(x.requires_grad() || gamma.requires_grad() || beta.requires_grad(), out,
            [x, gamma, beta, out, mean, rstd, B, groups, cs, hw, C]() mutable {
              const auto& og = out.grad_view();
              if (og.empty()) return;
              const auto& xv = x.values();
              const auto& gv = gamma.values();
              const bool nx = x.requires_grad(), ng = gamma.requires_grad(),
                         nb = beta.requires_grad();
              T* gx = nx ? x.grad().data() : nullptr;
              T* gg = ng ? gamma.grad().data() : nullptr;
              T* gb = nb ? beta.grad().data() : nullptr;
              const double n = double(hw * cs);
              for (int64_t b = 0; b < B; ++b) {
                for (int64_t g = 0; g < groups; ++g) {
                  const T mu = (*mean)[size_t(b * groups + g)];
                  const T rs = (*rstd)[size_t(b * groups + g)];
                  double ha = 0.0, hb = 0.0;
                  for (int64_t p = 0; p < hw; ++p)
                    for (int64_t c = 0; c < cs; ++c) {
                      const int64_t k = (b * hw + p) * C + g * cs + c;
                      const T xh = (xv[k] - mu) * rs;
                      const T h = og[k] * gv[size_t(g * cs + c)];
                      ha += double(h);
                      hb += double(h * xh);
                      if (gg) gg[g * cs + c] += og[k] * xh;
                      if (gb) gb[g * cs + c] += og[k];
                    }
                  if (gx) {
                    const T a = T(ha / n), bb = T(hb / n);
                    for (int64_t p = 0; p < hw; ++p)
                      for (int64_t c = 0; c < cs; ++c) {
                        const int64_t k = (b * hw + p) * C + g * cs + c;
                        const T xh = (xv[k] - mu) * rs;
                        gx[k] += rs * (og[k] * gv[size_t(g * cs + c)] - a - xh * bb);
                      }
                  }
                }
              }
            });
  return out;
}

// ---------------------------------------------------------------------------
// spatial ops

template <class T>
Tensor<T> adaptive_avg_pool2d(Tensor<T> x, int64_t oh, int64_t ow) {
  require(oh >= 1 && ow >= 1, "adaptive_avg_pool2d: target must be positive");
  auto v = detail::spatial_view(x.shape(), "adaptive_avg_pool2d");
  require(v.h >= 1 && v.w >= 1, "adaptive_avg_pool2d: empty input " + shape_str(x.shape()));
  guard_inputs<T>({&x}, "adaptive_avg_pool2d");
  Shape oshape = x.shape();
  oshape[x.rank() == 2 ? 0 : 1] = oh;
  oshape[x.rank() == 2 ? 1 : 2] = ow;
  Tensor<T> out = Tensor<T>::zeros(oshape);
  const auto& xv = x.values();
  auto& ov = out.values();
  auto lo = [](int64_t i, int64_t in, int64_t on) { return (i * in) / on; };
  auto hi = [](int64_t i, int64_t in, int64_t on) { return ((i + 1) * in + on - 1) / on; };
  for (int64_t l = 0; l < v.lead; ++l) {
    for (int64_t i = 0; i < oh; ++i) {
      const int64_t r0 = lo(i, v.h, oh), r1 = hi(i, v.h, oh);
      for (int64_t j = 0; j < ow; ++j) {
        const int64_t c0 = lo(j, v.w, ow), c1 = hi(j, v.w, ow);
        const T inv = T(1) / T((r1 - r0) * (c1 - c0));
        for (int64_t c = 0; c < v.chan; ++c) {
          T acc = T(0);
          for (int64_t r = r0; r < r1; ++r)
            for (int64_t cc = c0; cc < c1; ++cc)
              acc += xv[((l * v.h + r) * v.w + cc) * v.chan + c];
          ov[((l * oh + i) * ow + j) * v.chan + c] = acc * inv;
        }
      }
    }
  }
  record_if(x.requires_grad(), out, [x, out, v, oh, ow, lo, hi]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (int64_t l = 0; l < v.lead; ++l) {
      for (int64_t i = 0; i < oh; ++i) {
        const int64_t r0 = lo(i, v.h, oh), r1 = hi(i, v.h, oh);
        for (int64_t j = 0; j < ow; ++j) {
          const int64_t c0 = lo(j, v.w, ow), c1 = hi(j, v.w, ow);
          const T inv = T(1) / T((r1 - r0) * (c1 - c0));
          for (int64_t c = 0; c < v.chan; ++c) {
            const T g = og[((l * oh + i) * ow + j) * v.chan + c] * inv;
            for (int64_t r = r0; r < r1; ++r)
              for (int64_t cc = c0; cc < c1; ++cc)
                ig[((l * v.h + r) * v.w + cc) * v.chan + c] += g;
          }
        }
      }
    }
  });
  return out;
}

// bilinear upsampling (align_corners=false)
template <class T>
Tensor<T> upsample_bilinear(Tensor<T> x, int64_t oh, int64_t ow) {
  auto v = detail::spatial_view(x.shape(), "upsample_bilinear");
  guard_inputs<T>({&x}, "upsample_bilinear");
  Shape oshape = x.shape();
  oshape[x.rank() == 2 ? 0 : 1] = oh;
  oshape[x.rank() == 2 ? 1 : 2] = ow;
  Tensor<T> out = Tensor<T>::zeros(oshape);

  struct Tap {
    int64_t i0, i1;
    T w0, w1;
  };
  auto taps = [](int64_t on, int64_t in) {
    std::vector<Tap> t(static_cast<size_t>(on));
    for (int64_t i = 0; i < on; ++i) {
      double src = (double(i) + 0.5) * double(in) / double(on) - 0.5;
      src = std::max(0.0, std::min(src, double(in - 1)));
      int64_t i0 = int64_t(std::floor(src));
      int64_t i1 = std::min(i0 + 1, in - 1);
      T w1 = T(src - double(i0));
      t[size_t(i)] = {i0, i1, T(1) - w1, w1};
    }
    return t;
  };
  const auto rt = taps(oh, v.h);
  const auto ct = taps(ow, v.w);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t l = 0; l < v.lead; ++l)
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j)
        for (int64_t c = 0; c < v.chan; ++c) {
          auto px = [&](int64_t r, int64_t cc) {
            return xv[((l * v.h + r) * v.w + cc) * v.chan + c];
          };
          ov[((l * oh + i) * ow + j) * v.chan + c] =
              rt[size_t(i)].w0 * (ct[size_t(j)].w0 * px(rt[size_t(i)].i0, ct[size_t(j)].i0) +
                                  ct[size_t(j)].w1 * px(rt[size_t(i)].i0, ct[size_t(j)].i1)) +
              rt[size_t(i)].w1 * (ct[size_t(j)].w0 * px(rt[size_t(i)].i1, ct[size_t(j)].i0) +
                                  ct[size_t(j)].w1 * px(rt[size_t(i)].i1, ct[size_t(j)].i1));
        }
  record_if(x.requires_grad(), out, [x, out, v, oh, ow, rt, ct]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (int64_t l = 0; l < v.lead; ++l)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j)
          for (int64_t c = 0; c < v.chan; ++c) {
            const T g = og[((l * oh + i) * ow + j) * v.chan + c];
            auto acc = [&](int64_t r, int64_t cc, T w) {
              ig[((l * v.h + r) * v.w + cc) * v.chan + c] += g * w;
            };
            acc(rt[size_t(i)].i0, ct[size_t(j)].i0, rt[size_t(i)].w0 * ct[size_t(j)].w0);
            acc(rt[size_t(i)].i0, ct[size_t(j)].i1, rt[size_t(i)].w0 * ct[size_t(j)].w1);
            acc(rt[size_t(i)].i1, ct[size_t(j)].i0, rt[size_t(i)].w1 * ct[size_t(j)].w0);
            acc(rt[size_t(i)].i1, ct[size_t(j)].i1, rt[size_t(i)].w1 * ct[size_t(j)].w1);
          }
  });
  return out;
}

// ---------------------------------------------------------------------------
// lookup / selection

template <class T>
Tensor<T> embedding(Tensor<T> table, const std::vector<int64_t>& ids) {
  require(table.rank() == 2, "embedding: table must be [V,d]");
  guard_inputs<T>({&table}, "embedding");
  const int64_t V = table.dim(0), d = table.dim(1);
  for (int64_t id : ids)
    require(id >= 0 && id < V, "embedding: id " + std::to_string(id) + " out of range [0," +
                                   std::to_string(V) + ")");
  Tensor<T> out = Tensor<T>::zeros({int64_t(ids.size()), d});
  const auto& tv = table.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.begin() + ids[i] * d, d, ov.begin() + int64_t(i) * d);
  record_if(table.requires_grad(), out, [table, out, ids, d]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = table.grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t j = 0; j < d; ++j) ig[ids[i] * d + j] += og[int64_t(i) * d + j];
  });
  return out;
}

// pick rows of a [N, rest...] tensor; backward scatter-adds
template <class T>
Tensor<T> gather_rows(Tensor<T> x, const std::vector<int64_t>& idx) {
  require(x.rank() >= 1, "gather_rows: need rank >= 1");
  guard_inputs<T>({&x}, "gather_rows");
  const int64_t n = x.dim(0);
  const int64_t stride = x.numel() / std::max<int64_t>(n, 1);
  for (int64_t i : idx)
    require(i >= 0 && i < n, "gather_rows: index " + std::to_string(i) + " out of range");
  Shape oshape = x.shape();
  oshape[0] = int64_t(idx.size());
  Tensor<T> out = Tensor<T>::zeros(oshape);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(xv.begin() + idx[i] * stride, stride, ov.begin() + int64_t(i) * stride);
  record_if(x.requires_grad(), out, [x, out, idx, stride]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t j = 0; j < stride; ++j) ig[idx[i] * stride + j] += og[int64_t(i) * stride + j];
  });
  return out;
}

// out[i] = x[i, ids[i]] for x [N,C]
template <class T>
Tensor<T> select_last_index(Tensor<T> x, const std::vector<int64_t>& ids) {
  require(x.rank() == 2, "select_last_index: need [N,C]");
  const int64_t n = x.dim(0), c = x.dim(1);
  require(int64_t(ids.size()) == n, "select_last_index: ids size mismatch");
  guard_inputs<T>({&x}, "select_last_index");
  for (int64_t id : ids) require(id >= 0 && id < c, "select_last_index: id out of range");
  Tensor<T> out = Tensor<T>::zeros({n});
  for (int64_t i = 0; i < n; ++i) out.values()[size_t(i)] = x.values()[size_t(i * c + ids[size_t(i)])];
  record_if(x.requires_grad(), out, [x, out, ids, c]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    for (size_t i = 0; i < ids.size(); ++i) ig[int64_t(i) * c + ids[i]] += og[i];
  });
  return out;
}

// out[i, ...] = x[i, ...] * s[i]; per-row scaling with gradients to both
template <class T>
Tensor<T> scale_rows(Tensor<T> x, Tensor<T> s) {
  require(x.rank() >= 1 && s.rank() == 1 && s.dim(0) == x.dim(0),
          "scale_rows: need x [N,...] and s [N], got " + shape_str(x.shape()) + " and " +
              shape_str(s.shape()));
  guard_inputs<T>({&x, &s}, "scale_rows");
  const int64_t n = x.dim(0);
  const int64_t stride = x.numel() / std::max<int64_t>(n, 1);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.values();
  const auto& sv = s.values();
  auto& ov = out.values();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < stride; ++j) ov[i * stride + j] = xv[i * stride + j] * sv[size_t(i)];
  record_if(x.requires_grad() || s.requires_grad(), out, [x, s, out, n, stride]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    const auto& xv = x.values();
    const auto& sv = s.values();
    T* gx = x.requires_grad() ? x.grad().data() : nullptr;
    T* gs = s.requires_grad() ? s.grad().data() : nullptr;
    for (int64_t i = 0; i < n; ++i) {
      T acc = T(0);
      for (int64_t j = 0; j < stride; ++j) {
        const T g = og[size_t(i * stride + j)];
        if (gx) gx[i * stride + j] += g * sv[size_t(i)];
        acc += g * xv[size_t(i * stride + j)];
      }
      if (gs) gs[size_t(i)] += acc;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// convolution via im2col (channels-last)

// x [B,H,W,C] -> [B*Ho*Wo, kh*kw*C] patches with zero padding
template <class T>
Tensor<T> im2col(Tensor<T> x, int64_t kh, int64_t kw, int64_t stride, int64_t pad) {
  require(x.rank() == 4, "im2col: need [B,H,W,C], got " + shape_str(x.shape()));
  guard_inputs<T>({&x}, "im2col");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  require(Ho >= 1 && Wo >= 1, "im2col: kernel larger than padded input");
  Tensor<T> out = Tensor<T>::zeros({B * Ho * Wo, kh * kw * C});
  const auto& xv = x.values();
  auto& ov = out.values();
  int64_t row = 0;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t i = 0; i < Ho; ++i)
      for (int64_t j = 0; j < Wo; ++j, ++row) {
        T* dst = ov.data() + row * kh * kw * C;
        for (int64_t r = 0; r < kh; ++r) {
          const int64_t sr = i * stride - pad + r;
          for (int64_t c = 0; c < kw; ++c) {
            const int64_t sc = j * stride - pad + c;
            T* cell = dst + (r * kw + c) * C;
            if (sr >= 0 && sr < H && sc >= 0 && sc < W)
              std::copy_n(xv.begin() + ((b * H + sr) * W + sc) * C, C, cell);
          }
        }
      }
  record_if(x.requires_grad(), out, [x, out, B, H, W, C, Ho, Wo, kh, kw, stride, pad]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    auto& ig = x.grad();
    int64_t row = 0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < Ho; ++i)
        for (int64_t j = 0; j < Wo; ++j, ++row) {
          const T* src = og.data() + row * kh * kw * C;
          for (int64_t r = 0; r < kh; ++r) {
            const int64_t sr = i * stride - pad + r;
            if (sr < 0 || sr >= H) continue;
            for (int64_t c = 0; c < kw; ++c) {
              const int64_t sc = j * stride - pad + c;
              if (sc < 0 || sc >= W) continue;
              const T* cell = src + (r * kw + c) * C;
              T* dst = ig.data() + ((b * H + sr) * W + sc) * C;
              for (int64_t ch = 0; ch < C; ++ch) dst[ch] += cell[ch];
            }
          }
        }
  });
  return out;
}

// weight layout [kh*kw*Cin, Cout], bias [Cout] (optional, pass undefined)
template <class T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int64_t kh,
                 int64_t kw, int64_t stride, int64_t pad) {
  require(x.rank() == 4, "conv2d: need [B,H,W,C]");
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  require(w.rank() == 2 && w.dim(0) == kh * kw * C,
          "conv2d: weight " + shape_str(w.shape()) + " incompatible with kernel " +
              std::to_string(kh) + "x" + std::to_string(kw) + "x" + std::to_string(C));
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<T> col = im2col(x, kh, kw, stride, pad);
  Tensor<T> out2 = matmul(col, w);
  if (bias.defined()) {
    require(bias.numel() == w.dim(1), "conv2d: bias size mismatch");
    out2 = add(out2, reshape(bias, {1, w.dim(1)}));
  }
  return reshape(out2, {B, Ho, Wo, w.dim(1)});
}

// ---------------------------------------------------------------------------
// losses

// numerically stable binary cross-entropy on logits, mean reduction
template <class T>
Tensor<T> bce_with_logits(Tensor<T> logits, Tensor<T> targets) {
  require(logits.shape() == targets.shape(),
          "bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " +
              shape_str(targets.shape()));
  guard_inputs<T>({&logits, &targets}, "bce_with_logits");
  const auto& xv = logits.values();
  const auto& tv = targets.values();
  const int64_t n = logits.numel();
  require(n > 0, "bce_with_logits: empty input");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double z = double(xv[size_t(i)]);
    acc += std::max(z, 0.0) - z * double(tv[size_t(i)]) + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor<T> out = Tensor<T>::scalar(T(acc / double(n)));
  record_if(logits.requires_grad(), out, [logits, targets, out, n]() mutable {
    const auto& og = out.grad_view();
    if (og.empty()) return;
    const T g = og[0] / T(n);
    const auto& xv = logits.values();
    const auto& tv = targets.values();
    auto& ig = logits.grad();
    for (int64_t i = 0; i < n; ++i) {
      const double z = double(xv[size_t(i)]);
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      ig[size_t(i)] += g * T(s - double(tv[size_t(i)]));
    }
  });
  return out;
}

}  // namespace mtvl::nc
