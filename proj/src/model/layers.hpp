// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "core/nn_ops.hpp"

namespace mtvl::model {

using nc::Rng;
using nc::Shape;
using nc::Tensor;

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
using ParamList = std::vector<ParamRef<T>>;

template <class T>
void add_param(ParamList<T>& out, const std::string& name, const Tensor<T>& t) {
  out.push_back({name, t});
}

template <class T>
Tensor<T> xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  return Tensor<T>::rand_uniform(std::move(shape), rng, -a, a, /*requires_grad=*/true);
}

template <class T>
struct Linear {
  Tensor<T> w;  // [in, out]
  Tensor<T> b;  // [1, out] when biased

  static Linear create(int64_t in, int64_t out, Rng& rng, bool bias = true) {
    Linear l;
    l.w = xavier_uniform<T>({in, out}, in, out, rng);
    if (bias) l.b = Tensor<T>::zeros({1, out}, true);
    return l;
  }

  static Linear zero_init(int64_t in, int64_t out, bool bias = true) {
    Linear l;
    l.w = Tensor<T>::zeros({in, out}, true);
    if (bias) l.b = Tensor<T>::zeros({1, out}, true);
    return l;
  }

  int64_t in_dim() const { return w.dim(0); }
  int64_t out_dim() const { return w.dim(1); }

  // x [..., in] -> [..., out]
  Tensor<T> forward(Tensor<T> x) const {
    Shape oshape = x.shape();
    oshape.back() = w.dim(1);
    auto flat = nc::reshape(x, {-1, w.dim(0)});
    auto y = nc::matmul(flat, w);
    if (b.defined()) y = nc::add(y, b);
    return nc::reshape(y, std::move(oshape));
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".w", w);
    if (b.defined()) add_param(out, prefix + ".b", b);
  }
};

// small fully-connected stack with ReLU between layers (heads use this)
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;

  static Mlp create(const std::vector<int64_t>& dims, Rng& rng, bool zero_last = false) {
    Mlp m;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
      if (zero_last && i + 2 == dims.size())
        m.layers.push_back(Linear<T>::zero_init(dims[i], dims[i + 1]));
      else
        m.layers.push_back(Linear<T>::create(dims[i], dims[i + 1], rng));
    }
    return m;
  }

  Tensor<T> forward(Tensor<T> x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(x);
      if (i + 1 < layers.size()) x = nc::relu(x);
    }
    return x;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(out, prefix + ".fc" + std::to_string(i));
  }
};

template <class T>
struct LayerNormParams {
  Tensor<T> gamma, beta;

  static LayerNormParams create(int64_t d) {
    LayerNormParams p;
    p.gamma = Tensor<T>::filled({d}, T(1), true);
    p.beta = Tensor<T>::zeros({d}, true);
    return p;
  }

  Tensor<T> forward(Tensor<T> x) const { return nc::layer_norm(x, gamma, beta); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".gamma", gamma);
    add_param(out, prefix + ".beta", beta);
  }
};

// Additive attention-mask builder. 0 = attend, large negative = blocked.
// prefix_len < 0 disables the causal part (full attention); otherwise tokens
// at positions >= prefix_len attend to the prefix and to themselves/left
// only, while prefix tokens see the prefix only (prefix-causal scheme).
// key_valid, when nonempty, gives the number of valid key positions per
// batch row (padding beyond it is blocked for every query).
template <class T>
Tensor<T> build_attn_mask(int64_t batch, int64_t heads, int64_t lq, int64_t lk,
                          int64_t prefix_len = -1, const std::vector<int64_t>& key_valid = {}) {
  const T neg = T(-1e9);
  Tensor<T> mask = Tensor<T>::zeros({batch * heads, lq, lk});
  auto& mv = mask.values();
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t valid = key_valid.empty() ? lk : key_valid[size_t(b)];
    for (int64_t h = 0; h < heads; ++h) {
      T* m = mv.data() + ((b * heads + h) * lq) * lk;
      for (int64_t i = 0; i < lq; ++i) {
        for (int64_t j = 0; j < lk; ++j) {
          bool ok = j < valid;
          if (ok && prefix_len >= 0 && j >= prefix_len) ok = i >= prefix_len && j <= i;
          m[i * lk + j] = ok ? T(0) : neg;
        }
      }
    }
  }
  return mask;
}

template <class T>
struct MultiHeadAttention {
  int64_t dim = 0, heads = 0;
  Linear<T> wq, wk, wv, wo;

  static MultiHeadAttention create(int64_t dim, int64_t heads, Rng& rng) {
    nc::require(dim % heads == 0, "attention: dim " + std::to_string(dim) +
                                      " not divisible by heads " + std::to_string(heads));
    MultiHeadAttention a;
    a.dim = dim;
    a.heads = heads;
    a.wq = Linear<T>::create(dim, dim, rng);
    a.wk = Linear<T>::create(dim, dim, rng);
    a.wv = Linear<T>::create(dim, dim, rng);
    a.wo = Linear<T>::create(dim, dim, rng);
    return a;
  }

  // q [B,Lq,d], k/v [B,Lk,d]; mask broadcastable against [B*H,Lq,Lk]
  Tensor<T> forward(Tensor<T> q, Tensor<T> k, Tensor<T> v, Tensor<T> mask = {}) const {
    const int64_t B = q.dim(0), Lq = q.dim(1), Lk = k.dim(1);
    const int64_t dh = dim / heads;
    auto split = [&](Tensor<T> x, int64_t L) {
      x = nc::reshape(x, {B, L, heads, dh});
      x = nc::permute(x, {0, 2, 1, 3});
      return nc::reshape(x, {B * heads, L, dh});
    };
    auto qh = split(wq.forward(q), Lq);
    auto kh = split(wk.forward(k), Lk);
    auto vh = split(wv.forward(v), Lk);
    auto scores = nc::mul_scalar(nc::bmm_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
    if (mask.defined()) scores = nc::add(scores, mask);
    auto attn = nc::softmax(scores, 2);
    auto ctx = nc::bmm(attn, vh);  // [B*H, Lq, dh]
    ctx = nc::reshape(ctx, {B, heads, Lq, dh});
    ctx = nc::permute(ctx, {0, 2, 1, 3});
    ctx = nc::reshape(ctx, {B, Lq, dim});
    return wo.forward(ctx);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
  }
};

// plain two-layer FFN with GELU
template <class T>
struct Ffn {
  Linear<T> fc1, fc2;

  static Ffn create(int64_t dim, int64_t hidden, Rng& rng) {
    Ffn f;
    f.fc1 = Linear<T>::create(dim, hidden, rng);
    f.fc2 = Linear<T>::create(hidden, dim, rng);
    return f;
  }

  Tensor<T> forward(Tensor<T> x) const { return fc2.forward(nc::gelu(fc1.forward(x))); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
  }
};

// pre-LN transformer encoder block (self-attention + FFN)
template <class T>
struct TransformerLayer {
  MultiHeadAttention<T> attn;
  Ffn<T> ffn;
  LayerNormParams<T> ln1, ln2;

  static TransformerLayer create(int64_t dim, int64_t heads, int64_t ffn_dim, Rng& rng) {
    TransformerLayer l;
    l.attn = MultiHeadAttention<T>::create(dim, heads, rng);
    l.ffn = Ffn<T>::create(dim, ffn_dim, rng);
    l.ln1 = LayerNormParams<T>::create(dim);
    l.ln2 = LayerNormParams<T>::create(dim);
    return l;
  }

  Tensor<T> forward(Tensor<T> x, Tensor<T> mask = {}) const {
    auto h = ln1.forward(x);
    x = nc::add(x, attn.forward(h, h, h, mask));
    x = nc::add(x, ffn.forward(ln2.forward(x)));
    return x;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    attn.collect(out, prefix + ".attn");
    ffn.collect(out, prefix + ".ffn");
    ln1.collect(out, prefix + ".ln1");
    ln2.collect(out, prefix + ".ln2");
  }
};

// ---------------------------------------------------------------------------
// fixed (non-learned) positional encodings

// classic interleaved sine/cosine table, [len, dim]
template <class T>
Tensor<T> sinusoid_table(int64_t len, int64_t dim) {
  Tensor<T> t = Tensor<T>::zeros({len, dim});
  auto& v = t.values();
  for (int64_t p = 0; p < len; ++p)
    for (int64_t i = 0; i < dim; i += 2) {
      const double w = std::pow(10000.0, -double(i) / double(dim));
      v[size_t(p * dim + i)] = T(std::sin(double(p) * w));
      if (i + 1 < dim) v[size_t(p * dim + i + 1)] = T(std::cos(double(p) * w));
    }
  return t;
}

// 2-D positions for an h x w grid, [h*w, dim]; dim split evenly between axes
template <class T>
Tensor<T> sinusoid_2d(int64_t h, int64_t w, int64_t dim) {
  nc::require(dim % 2 == 0, "sinusoid_2d: dim must be even");
  const int64_t half = dim / 2;
  auto rows = sinusoid_table<T>(h, half);
  auto cols = sinusoid_table<T>(w, half);
  Tensor<T> t = Tensor<T>::zeros({h * w, dim});
  auto& v = t.values();
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) {
      std::copy_n(rows.values().begin() + r * half, half, v.begin() + (r * w + c) * dim);
      std::copy_n(cols.values().begin() + c * half, half, v.begin() + (r * w + c) * dim + half);
    }
  return t;
}

// sinusoidal encoding of normalized box coordinates: per coordinate,
// `bands` frequency octaves of (sin, cos). boxes [..., 4] -> [..., 8*bands].
template <class T>
Tensor<T> box_sincos(const Tensor<T>& boxes, int64_t bands) {
  const Shape& s = boxes.shape();
  nc::require(s.back() == 4, "box_sincos: last dim must be 4, got " + nc::shape_str(s));
  Shape oshape = s;
  oshape.back() = 8 * bands;
  Tensor<T> out = Tensor<T>::zeros(oshape);
  const auto& bv = boxes.values();
  auto& ov = out.values();
  const int64_t n = boxes.numel() / 4;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < 4; ++c) {
      const double x = double(bv[size_t(i * 4 + c)]);
      for (int64_t f = 0; f < bands; ++f) {
        const double ang = x * M_PI * double(int64_t(1) << f);
        ov[size_t(i * 8 * bands + c * 2 * bands + 2 * f)] = T(std::sin(ang));
        ov[size_t(i * 8 * bands + c * 2 * bands + 2 * f + 1)] = T(std::cos(ang));
      }
    }
  return out;
}

}  // namespace mtvl::model
