// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "model/layers.hpp"

namespace mtvl::model {

// conv + group norm + GELU block, channels-last
template <class T>
struct ConvGn {
  Tensor<T> w;  // [kh*kw*cin, cout]
  Tensor<T> b;  // [cout]
  Tensor<T> gn_gamma, gn_beta;
  int64_t k = 3, stride = 1, pad = 1, groups = 4;
  bool norm = true, act = true;

  static ConvGn create(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad,
                       Rng& rng, bool norm = true, bool act = true, int64_t groups = 4) {
    ConvGn c;
    c.k = k;
    c.stride = stride;
    c.pad = pad;
    c.groups = norm ? std::min<int64_t>(groups, cout) : 1;
    c.norm = norm;
    c.act = act;
    c.w = xavier_uniform<T>({k * k * cin, cout}, k * k * cin, cout, rng);
    c.b = Tensor<T>::zeros({cout}, true);
    if (norm) {
      c.gn_gamma = Tensor<T>::filled({cout}, T(1), true);
      c.gn_beta = Tensor<T>::zeros({cout}, true);
    }
    return c;
  }

  Tensor<T> forward(Tensor<T> x) const {
    auto y = nc::conv2d(x, w, b, k, k, stride, pad);
    if (norm) y = nc::group_norm(y, groups, gn_gamma, gn_beta);
    if (act) y = nc::gelu(y);
    return y;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".w", w);
    add_param(out, prefix + ".b", b);
    if (norm) {
      add_param(out, prefix + ".gn_gamma", gn_gamma);
      add_param(out, prefix + ".gn_beta", gn_beta);
    }
  }
};

template <class T>
struct Pyramid {
  std::vector<Tensor<T>> levels;  // projected maps at strides 4,8,16,32: [B,h,w,d]
  Tensor<T> extra;                // stride-64 map [B,h,w,d], present when requested
  Tensor<T> raw0;                 // unprojected stride-4 map for the mask head
};

struct BackboneConfig {
  int64_t stem_channels = 16;
  std::array<int64_t, 4> channels = {24, 32, 48, 64};
  int64_t dim = 64;  // hidden dim after 1x1 projection
};

// small strided conv stack trained from scratch: strides 4/8/16/32 plus an
// extra 3x3 stride-2 conv on the last map when the proposal network is on
template <class T>
struct Backbone {
  BackboneConfig cfg;
  ConvGn<T> stem1, stem2, down1, down2, down3;
  std::array<Linear<T>, 4> proj;  // 1x1 projections to dim
  ConvGn<T> extra_conv;           // 3x3 stride 2 on the stride-32 map

  static Backbone create(const BackboneConfig& cfg, Rng& rng) {
    Backbone b;
    b.cfg = cfg;
    b.stem1 = ConvGn<T>::create(3, cfg.stem_channels, 3, 2, 1, rng);
    b.stem2 = ConvGn<T>::create(cfg.stem_channels, cfg.channels[0], 3, 2, 1, rng);
    b.down1 = ConvGn<T>::create(cfg.channels[0], cfg.channels[1], 3, 2, 1, rng);
    b.down2 = ConvGn<T>::create(cfg.channels[1], cfg.channels[2], 3, 2, 1, rng);
    b.down3 = ConvGn<T>::create(cfg.channels[2], cfg.channels[3], 3, 2, 1, rng);
    for (int i = 0; i < 4; ++i) b.proj[size_t(i)] = Linear<T>::create(cfg.channels[size_t(i)], cfg.dim, rng);
    b.extra_conv = ConvGn<T>::create(cfg.channels[3], cfg.dim, 3, 2, 1, rng, /*norm=*/false,
                                     /*act=*/false);
    return b;
  }

  // images [B,H,W,3] with H,W divisible by 32
  Pyramid<T> forward(Tensor<T> images, bool with_extra) const {
    nc::require(images.rank() == 4 && images.dim(3) == 3,
                "backbone: need [B,H,W,3], got " + nc::shape_str(images.shape()));
    nc::require(images.dim(1) % 32 == 0 && images.dim(2) % 32 == 0,
                "backbone: H,W must be divisible by 32, got " + nc::shape_str(images.shape()));
    Pyramid<T> p;
    auto f0 = stem2.forward(stem1.forward(images));
    auto f1 = down1.forward(f0);
    auto f2 = down2.forward(f1);
    auto f3 = down3.forward(f2);
    p.raw0 = f0;
    p.levels = {proj[0].forward(f0), proj[1].forward(f1), proj[2].forward(f2),
                proj[3].forward(f3)};
    if (with_extra) p.extra = extra_conv.forward(f3);
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    stem1.collect(out, prefix + ".stem1");
    stem2.collect(out, prefix + ".stem2");
    down1.collect(out, prefix + ".down1");
    down2.collect(out, prefix + ".down2");
    down3.collect(out, prefix + ".down3");
    for (int i = 0; i < 4; ++i) proj[size_t(i)].collect(out, prefix + ".proj" + std::to_string(i));
    extra_conv.collect(out, prefix + ".extra");
  }
};

}  // namespace mtvl::model
