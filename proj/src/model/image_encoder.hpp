// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "model/rpn.hpp"

namespace mtvl::model {

enum class ReprMode { kGlobal, kRegional, kBoth };

inline ReprMode repr_mode_from_string(const std::string& s) {
  if (s == "global") return ReprMode::kGlobal;
  if (s == "regional") return ReprMode::kRegional;
  if (s == "both") return ReprMode::kBoth;
  throw nc::ContractError("unknown representation mode '" + s + "'");
}

// learned-query attention pooling over the last-scale feature map
template <class T>
struct AttnPool {
  Tensor<T> queries;  // [M', d]
  MultiHeadAttention<T> mha;

  static AttnPool create(int64_t m_prime, int64_t dim, int64_t heads, Rng& rng) {
    AttnPool p;
    p.queries = Tensor<T>::randn({std::max<int64_t>(m_prime, 1), dim}, rng, 0.02, true);
    p.mha = MultiHeadAttention<T>::create(dim, heads, rng);
    return p;
  }

  // flat [B,hw,d], pos [1,hw,d] (keys only) -> [B,M',d]
  Tensor<T> forward(Tensor<T> flat, Tensor<T> pos, int64_t m_prime) const {
    const int64_t B = flat.dim(0), d = flat.dim(2);
    auto q = nc::expand_leading(nc::reshape(nc::slice(queries, 0, 0, m_prime), {1, m_prime, d}), B);
    return mha.forward(q, nc::add(flat, pos), flat);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".queries", queries);
    mha.collect(out, prefix + ".mha");
  }
};

enum class MaskDemand { kNone, kTopOnly, kAll };

template <class T>
struct ImageEncoding {
  Tensor<T> tokens;  // [B, L_img, d]
  int64_t num_global = 0;
  int64_t num_regional = 0;
  // top-O proposal attachments (regional modes)
  Tensor<T> boxes;      // [B, O, 4] box values, detached
  Tensor<T> masks_top;  // [B*O, H, W] mask logits for the selected proposals
  std::vector<int64_t> top_ids;  // flat b*N+q indices of the selected proposals
  // full proposal set for localization losses
  RpnOut<T> rpn;
  Tensor<T> masks_all;  // [B*N, H, W] when requested
  bool has_rpn = false;
};

struct ImageEncoderConfig {
  BackboneConfig backbone;
  RpnConfig rpn;
  int64_t m_prime = 4;  // learned pooling instances; the full system uses 10
  int64_t top_o = 8;
  int64_t mask_pool = 28;  // adaptive pooling target for mask fusion
};

// f_image: backbone -> proposals -> fused regional tokens + pooled/flattened
// global tokens, concatenated per the configured representation mode
template <class T>
struct ImageEncoder {
  ImageEncoderConfig cfg;
  Backbone<T> backbone;
  Rpn<T> rpn;
  AttnPool<T> pool;
  Linear<T> box_proj;   // box sincos -> d
  Linear<T> mask_proj;  // pooled mask -> d

  static ImageEncoder create(const ImageEncoderConfig& cfg, Rng& rng) {
    ImageEncoder e;
    e.cfg = cfg;
    e.backbone = Backbone<T>::create(cfg.backbone, rng);
    e.rpn = Rpn<T>::create(cfg.rpn, cfg.backbone.channels[0], rng);
    e.pool = AttnPool<T>::create(cfg.m_prime, cfg.backbone.dim, cfg.rpn.heads, rng);
    e.box_proj = Linear<T>::create(8 * cfg.rpn.box_bands, cfg.backbone.dim, rng);
    e.mask_proj = Linear<T>::create(cfg.mask_pool * cfg.mask_pool, cfg.backbone.dim, rng);
    return e;
  }

  // q_proposal = q_sem + Linear(sincos(box)) + Linear(pooled mask); the box
  // and mask inputs are detached so no gradient reaches their heads through
  // the fusion path
  Tensor<T> fuse_proposals(Tensor<T> q_sem, Tensor<T> boxes_values, Tensor<T> mask_logits) const {
    const int64_t B = q_sem.dim(0), O = q_sem.dim(1);
    auto bpos = box_proj.forward(box_sincos(boxes_values.detach(), cfg.rpn.box_bands));
    auto pooled = nc::adaptive_avg_pool2d(mask_logits.detach(), cfg.mask_pool, cfg.mask_pool);
    auto mfeat = mask_proj.forward(nc::reshape(pooled, {B, O, cfg.mask_pool * cfg.mask_pool}));
    return nc::add(nc::add(q_sem, bpos), mfeat);
  }

  // global tokens: M' attention-pooled vectors ++ flattened last-scale map
  // (with 2-D sinusoidal positions)
  Tensor<T> global_tokens(const Pyramid<T>& pyr, int64_t m_prime) const {
    auto fl = pyr.levels[3];
    const int64_t B = fl.dim(0), h = fl.dim(1), w = fl.dim(2), d = fl.dim(3);
    nc::require(h * w >= 1, "global_pool: empty feature map");
    auto flat = nc::reshape(fl, {B, h * w, d});
    auto pos = nc::reshape(sinusoid_2d<T>(h, w, d), {1, h * w, d});
    auto grid = nc::add(flat, pos);
    if (m_prime <= 0) return grid;
    auto pooled = pool.forward(flat, pos, m_prime);
    return nc::concat<T>({pooled, grid}, 1);
  }

  ImageEncoding<T> encode(Tensor<T> images, ReprMode mode, MaskDemand masks) const {
    ImageEncoding<T> out;
    const bool with_rpn = mode != ReprMode::kGlobal;
    Pyramid<T> pyr = backbone.forward(images, with_rpn);

    Tensor<T> global;
    if (mode != ReprMode::kRegional) {
      global = global_tokens(pyr, cfg.m_prime);
      out.num_global = global.dim(1);
    }

    Tensor<T> regional;
    if (with_rpn) {
      out.rpn = rpn.forward(pyr, cfg.rpn.num_queries);
      out.has_rpn = true;
      const int64_t B = images.dim(0), N = out.rpn.num_queries, d = cfg.backbone.dim;
      const int64_t O = std::min<int64_t>(cfg.top_o, N);
      nc::require(cfg.top_o <= cfg.rpn.num_queries,
                  "encode_image: top_o exceeds num_queries");

      // top-O by final objectness, non-increasing, ties -> lower query index
      const auto& objv = out.rpn.objectness.values();
      out.top_ids.reserve(size_t(B * O));
      for (int64_t b = 0; b < B; ++b) {
        std::vector<int64_t> order(size_t(N));
        for (int64_t i = 0; i < N; ++i) order[size_t(i)] = i;
        std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
          return objv[size_t(b * N + x)] > objv[size_t(b * N + y)];
        });
        for (int64_t i = 0; i < O; ++i) out.top_ids.push_back(b * N + order[size_t(i)]);
      }
      auto sel_hidden =
          nc::reshape(nc::gather_rows(nc::reshape(out.rpn.hidden, {B * N, d}), out.top_ids),
                      {B, O, d});
      out.boxes = nc::reshape(
          nc::gather_rows(nc::reshape(out.rpn.boxes.detach(), {B * N, 4}), out.top_ids),
          {B, O, 4});
      if (masks == MaskDemand::kAll) {
        out.masks_all = rpn.mask_logits(out.rpn.hidden, out.rpn.pixel_map);
        out.masks_top = nc::gather_rows(out.masks_all, out.top_ids);
      } else {
        out.masks_top = rpn.mask_logits(sel_hidden, out.rpn.pixel_map);
      }
      regional = fuse_proposals(sel_hidden, out.boxes, out.masks_top);
      out.num_regional = O;
    }

    switch (mode) {
      case ReprMode::kGlobal: out.tokens = global; break;
      case ReprMode::kRegional: out.tokens = regional; break;
      case ReprMode::kBoth: out.tokens = nc::concat<T>({global, regional}, 1); break;
    }
    return out;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    backbone.collect(out, prefix + ".backbone");
    rpn.collect(out, prefix + ".rpn");
    pool.collect(out, prefix + ".pool");
    box_proj.collect(out, prefix + ".box_proj");
    mask_proj.collect(out, prefix + ".mask_proj");
  }
};

}  // namespace mtvl::model
