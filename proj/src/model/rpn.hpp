// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>

#include "model/backbone.hpp"
#include "model/box_ops.hpp"

namespace mtvl::model {

struct RpnConfig {
  int64_t enc_layers = 2;
  int64_t dec_layers = 3;
  int64_t num_queries = 32;
  int64_t topk_queries = 8;
  int64_t heads = 4;
  int64_t ffn_dim = 128;
  int64_t dim = 64;
  int64_t mask_dim = 32;
  int64_t box_bands = 8;         // dim / 8 so the sincos encoding lands on dim
  double prior_wh_factor = 2.0;  // per-level box size prior, in grid cells

  // full-scale settings used by the reference system
  static RpnConfig paper() {
    RpnConfig c;
    c.enc_layers = 6;
    c.dec_layers = 6;
    c.num_queries = 300;  // 900 with the larger backbones
    c.topk_queries = 200;
    c.heads = 8;
    c.ffn_dim = 2048;
    c.dim = 256;
    c.box_bands = 32;
    return c;
  }
};

template <class T>
struct RpnOut {
  Tensor<T> enc_tokens;     // [B,P,d] encoded multi-scale pixels
  Tensor<T> enc_sel_obj;    // [B,N] objectness logits of the selected pixels
  Tensor<T> enc_sel_boxes;  // [B,N,4] boxes predicted at the selected pixels
  std::vector<Tensor<T>> layer_obj;    // per decoder layer, [B,N]
  std::vector<Tensor<T>> layer_boxes;  // per decoder layer, [B,N,4]
  Tensor<T> hidden;         // final per-proposal state (q_sem) [B,N,d]
  Tensor<T> boxes;          // final boxes [B,N,4]
  Tensor<T> objectness;     // final objectness logits [B,N]
  Tensor<T> pixel_map;      // [B,H/4,W/4,mask_dim] map for mask prediction
  int64_t num_queries = 0;
  bool clamped = false;
};

namespace detail {

template <class T>
Tensor<T> inv_sigmoid_const(const Tensor<T>& probs) {
  Tensor<T> out = Tensor<T>::zeros(probs.shape());
  const auto& pv = probs.values();
  auto& ov = out.values();
  for (size_t i = 0; i < pv.size(); ++i) {
    double p = std::clamp(double(pv[i]), 1e-5, 1.0 - 1e-5);
    ov[i] = T(std::log(p / (1.0 - p)));
  }
  return out;
}

}  // namespace detail

// Transformer region proposal network over the stride-8..64 token pyramid.
// Per-pixel objectness/box heads seed the decoder queries with the top-N
// pixels; the decoder refines boxes layer by layer with detached references.
// Classification is binary (objectness) throughout.
template <class T>
struct Rpn {
  struct DecLayer {
    MultiHeadAttention<T> self_attn, cross_attn;
    Ffn<T> ffn;
    LayerNormParams<T> ln1, ln2, ln3;
  };

  RpnConfig cfg;
  Tensor<T> level_embed;  // [4, d]
  std::vector<TransformerLayer<T>> enc_layers;
  Linear<T> enc_obj;
  Mlp<T> enc_box;
  Tensor<T> query_embed;  // [num_queries, d]
  Linear<T> query_pos;    // 8*bands -> d
  std::vector<DecLayer> dec_layers;
  LayerNormParams<T> head_ln;
  Linear<T> dec_obj;
  Mlp<T> dec_box;
  // mask branch: map = R(G(raw0) + upsample(H(enc level-1)))
  ConvGn<T> mask_g, mask_h, mask_r1;
  Linear<T> mask_r2;
  Mlp<T> mask_mlp;

  static Rpn create(const RpnConfig& cfg, int64_t raw0_channels, Rng& rng) {
    Rpn r;
    r.cfg = cfg;
    const int64_t d = cfg.dim;
    r.level_embed = Tensor<T>::randn({4, d}, rng, 0.02, true);
    for (int64_t l = 0; l < cfg.enc_layers; ++l)
      r.enc_layers.push_back(TransformerLayer<T>::create(d, cfg.heads, cfg.ffn_dim, rng));
    r.enc_obj = Linear<T>::create(d, 1, rng);
    r.enc_obj.b.values()[0] = T(-2.0);  // start near the background prior
    r.enc_box = Mlp<T>::create({d, d, 4}, rng, /*zero_last=*/true);
    r.query_embed = Tensor<T>::randn({cfg.num_queries, d}, rng, 0.02, true);
    r.query_pos = Linear<T>::create(8 * cfg.box_bands, d, rng);
    for (int64_t l = 0; l < cfg.dec_layers; ++l) {
      DecLayer dl;
      dl.self_attn = MultiHeadAttention<T>::create(d, cfg.heads, rng);
      dl.cross_attn = MultiHeadAttention<T>::create(d, cfg.heads, rng);
      dl.ffn = Ffn<T>::create(d, cfg.ffn_dim, rng);
      dl.ln1 = LayerNormParams<T>::create(d);
      dl.ln2 = LayerNormParams<T>::create(d);
      dl.ln3 = LayerNormParams<T>::create(d);
      r.dec_layers.push_back(std::move(dl));
    }
    r.head_ln = LayerNormParams<T>::create(d);
    r.dec_obj = Linear<T>::create(d, 1, rng);
    r.dec_obj.b.values()[0] = T(-2.0);
    r.dec_box = Mlp<T>::create({d, d, 4}, rng, /*zero_last=*/true);
    const int64_t md = cfg.mask_dim;
    r.mask_g = ConvGn<T>::create(raw0_channels, md, 1, 1, 0, rng, true, false);
    r.mask_h = ConvGn<T>::create(d, md, 1, 1, 0, rng, true, false);
    r.mask_r1 = ConvGn<T>::create(md, md, 3, 1, 1, rng, true, false);
    r.mask_r2 = Linear<T>::create(md, md, rng);
    r.mask_mlp = Mlp<T>::create({d, d, md}, rng);
    return r;
  }

  // per-token normalized box priors for the encoder levels, [P,4]
  static std::vector<std::array<double, 4>> level_priors(
      const std::vector<std::pair<int64_t, int64_t>>& hw, double factor) {
    std::vector<std::array<double, 4>> priors;
    for (auto [h, w] : hw)
      for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c)
          priors.push_back({(double(c) + 0.5) / double(w), (double(r) + 0.5) / double(h),
                            std::min(1.0, factor / double(w)), std::min(1.0, factor / double(h))});
    return priors;
  }

  RpnOut<T> forward(const Pyramid<T>& pyr, int64_t num_queries) const {
    nc::require(num_queries >= 1, "rpn: num_queries must be >= 1");
    nc::require(pyr.extra.defined(), "rpn: pyramid lacks the extra stride-64 level");
    const int64_t d = cfg.dim;
    const int64_t B = pyr.levels[0].dim(0);

    // encoder tokens: levels 1..3 plus the extra map, with positions and
    // level embeddings baked in
    std::vector<Tensor<T>> toks;
    std::vector<std::pair<int64_t, int64_t>> hws;
    std::vector<Tensor<T>> maps = {pyr.levels[1], pyr.levels[2], pyr.levels[3], pyr.extra};
    for (size_t l = 0; l < maps.size(); ++l) {
      const int64_t h = maps[l].dim(1), w = maps[l].dim(2);
      hws.push_back({h, w});
      auto t = nc::reshape(maps[l], {B, h * w, d});
      t = nc::add(t, nc::reshape(sinusoid_2d<T>(h, w, d), {1, h * w, d}));
      t = nc::add(t, nc::reshape(nc::embedding(level_embed, {int64_t(l)}), {1, 1, d}));
      toks.push_back(t);
    }
    RpnOut<T> out;
    out.enc_tokens = nc::concat(toks, 1);
    const int64_t P = out.enc_tokens.dim(1);
    for (const auto& layer : enc_layers) out.enc_tokens = layer.forward(out.enc_tokens);

    // per-pixel predictions on the encoded maps
    auto priors = level_priors(hws, cfg.prior_wh_factor);
    Tensor<T> prior_t = Tensor<T>::zeros({1, P, 4});
    for (int64_t i = 0; i < P; ++i)
      for (int64_t c = 0; c < 4; ++c) prior_t.values()[size_t(i * 4 + c)] = T(priors[size_t(i)][size_t(c)]);
    auto prior_logit = detail::inv_sigmoid_const(prior_t);
    auto obj_all = nc::reshape(enc_obj.forward(out.enc_tokens), {B, P});
    auto box_all = nc::sigmoid(nc::add(enc_box.forward(out.enc_tokens), prior_logit));

    int64_t N = num_queries;
    out.clamped = false;
    if (N > P) {
      std::cerr << "[mtvl] rpn: num_queries " << N << " exceeds " << P
                << " encoded pixels; clamping\n";
      N = P;
      out.clamped = true;
    }
    out.num_queries = N;

    // top-N pixels by objectness, ties broken by lower index
    std::vector<int64_t> flat_ids;
    flat_ids.reserve(size_t(B * N));
    const auto& objv = obj_all.values();
    for (int64_t b = 0; b < B; ++b) {
      std::vector<int64_t> order(size_t(P));
      for (int64_t i = 0; i < P; ++i) order[size_t(i)] = i;
      std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
        return objv[size_t(b * P + x)] > objv[size_t(b * P + y)];
      });
      for (int64_t i = 0; i < N; ++i) flat_ids.push_back(b * P + order[size_t(i)]);
    }
    auto sel_feat =
        nc::reshape(nc::gather_rows(nc::reshape(out.enc_tokens, {B * P, d}), flat_ids), {B, N, d});
    out.enc_sel_obj = nc::reshape(nc::gather_rows(nc::reshape(obj_all, {B * P, 1}), flat_ids), {B, N});
    out.enc_sel_boxes =
        nc::reshape(nc::gather_rows(nc::reshape(box_all, {B * P, 4}), flat_ids), {B, N, 4});

    // decoder: selected features added to the learned queries; selected
    // locations are the initial box references (detached)
    auto queries = nc::slice(query_embed, 0, 0, N);
    auto h = nc::add(sel_feat, nc::expand_leading(nc::reshape(queries, {1, N, d}), B));
    Tensor<T> refs = out.enc_sel_boxes.detach();
    for (const auto& dl : dec_layers) {
      auto qpos = query_pos.forward(box_sincos(refs, cfg.box_bands));
      auto h1 = dl.ln1.forward(h);
      h = nc::add(h, dl.self_attn.forward(nc::add(h1, qpos), nc::add(h1, qpos), h1));
      auto h2 = dl.ln2.forward(h);
      h = nc::add(h, dl.cross_attn.forward(nc::add(h2, qpos), out.enc_tokens, out.enc_tokens));
      h = nc::add(h, dl.ffn.forward(dl.ln3.forward(h)));

      auto hd = head_ln.forward(h);
      auto obj_l = nc::reshape(dec_obj.forward(hd), {B, N});
      auto box_l = nc::sigmoid(nc::add(dec_box.forward(hd), detail::inv_sigmoid_const(refs)));
      out.layer_obj.push_back(obj_l);
      out.layer_boxes.push_back(box_l);
      refs = box_l.detach();
    }
    out.hidden = head_ln.forward(h);
    out.boxes = out.layer_boxes.back();
    out.objectness = out.layer_obj.back();

    // per-pixel mask map, built once per image
    const int64_t h0 = pyr.raw0.dim(1), w0 = pyr.raw0.dim(2);
    auto g = mask_g.forward(pyr.raw0);
    auto [h1e, w1e] = hws[0];
    auto l1 = nc::reshape(nc::slice(out.enc_tokens, 1, 0, h1e * w1e), {B, h1e, w1e, d});
    auto hh = nc::upsample_bilinear(mask_h.forward(l1), h0, w0);
    out.pixel_map = mask_r2.forward(nc::relu(mask_r1.forward(nc::add(g, hh))));
    return out;
  }

  // mask logits for the given proposal states, upsampled to full resolution;
  // [B,K,d] -> [B*K, 4*h0, 4*w0]
  Tensor<T> mask_logits(Tensor<T> proposal_state, Tensor<T> pixel_map) const {
    const int64_t B = proposal_state.dim(0), K = proposal_state.dim(1);
    const int64_t h0 = pixel_map.dim(1), w0 = pixel_map.dim(2), md = pixel_map.dim(3);
    auto q = mask_mlp.forward(proposal_state);                       // [B,K,md]
    auto flat_map = nc::reshape(pixel_map, {B, h0 * w0, md});
    auto logits = nc::bmm_nt(q, flat_map);                           // [B,K,h0*w0]
    auto per = nc::reshape(logits, {B * K, h0, w0});
    return nc::upsample_bilinear(per, h0 * 4, w0 * 4);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".level_embed", level_embed);
    for (size_t l = 0; l < enc_layers.size(); ++l)
      enc_layers[l].collect(out, prefix + ".enc" + std::to_string(l));
    enc_obj.collect(out, prefix + ".enc_obj");
    enc_box.collect(out, prefix + ".enc_box");
    add_param(out, prefix + ".query_embed", query_embed);
    query_pos.collect(out, prefix + ".query_pos");
    for (size_t l = 0; l < dec_layers.size(); ++l) {
      const std::string lp = prefix + ".dec" + std::to_string(l);
      dec_layers[l].self_attn.collect(out, lp + ".self");
      dec_layers[l].cross_attn.collect(out, lp + ".cross");
      dec_layers[l].ffn.collect(out, lp + ".ffn");
      dec_layers[l].ln1.collect(out, lp + ".ln1");
      dec_layers[l].ln2.collect(out, lp + ".ln2");
      dec_layers[l].ln3.collect(out, lp + ".ln3");
    }
    head_ln.collect(out, prefix + ".head_ln");
    dec_obj.collect(out, prefix + ".dec_obj");
    dec_box.collect(out, prefix + ".dec_box");
    mask_g.collect(out, prefix + ".mask_g");
    mask_h.collect(out, prefix + ".mask_h");
    mask_r1.collect(out, prefix + ".mask_r1");
    mask_r2.collect(out, prefix + ".mask_r2");
    mask_mlp.collect(out, prefix + ".mask_mlp");
  }
};

}  // namespace mtvl::model
