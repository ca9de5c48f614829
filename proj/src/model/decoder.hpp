// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "model/moe.hpp"

namespace mtvl::model {

struct DecoderConfig {
  int64_t layers = 2;
  int64_t dim = 64;
  int64_t heads = 4;
  int64_t ffn_dim = 128;
  bool moe_enabled = true;
  int64_t num_experts = 4;
  int64_t moe_topk = 2;
  int64_t num_attributes = 16;
  int64_t attr_dim = 16;
  double stochastic_depth = 0.0;  // per-layer drop rate; off keeps tests deterministic

  // deployment-scale settings reported for the full system
  static DecoderConfig paper() {
    DecoderConfig c;
    c.layers = 6;
    c.dim = 768;
    c.heads = 12;
    c.ffn_dim = 3072;
    c.num_experts = 8;
    c.moe_enabled = true;
    return c;
  }
};

// Attention policy for one decode call. prefix_len < 0 means full
// bidirectional attention; otherwise positions >= prefix_len are causal
// (used for caption targets behind the image prefix). key_valid gives
// per-row valid lengths so padded rows cannot be attended.
struct AttnSpec {
  int64_t prefix_len = -1;
  std::vector<int64_t> key_valid;
};

// The shared modality-agnostic transformer g(.). All tasks and modalities
// pass through the same weights; the only task conditioning is the
// conditional-MoE gate on (task, modality) attributes.
template <class T>
struct UnifiedDecoder {
  DecoderConfig cfg;
  std::vector<TransformerLayer<T>> plain_layers;           // when moe disabled
  std::vector<MultiHeadAttention<T>> attn_layers;          // when moe enabled
  std::vector<MoeFfn<T>> moe_layers;
  std::vector<LayerNormParams<T>> ln1, ln2;
  Tensor<T> spe;  // learned <SPE> vector shared across modalities, [1, d]

  static UnifiedDecoder create(const DecoderConfig& cfg, Rng& rng) {
    nc::require(cfg.dim % cfg.heads == 0, "decoder: dim not divisible by heads");
    nc::require(cfg.num_experts >= 1, "decoder: num_experts must be >= 1");
    UnifiedDecoder d;
    d.cfg = cfg;
    for (int64_t l = 0; l < cfg.layers; ++l) {
      if (cfg.moe_enabled) {
        d.attn_layers.push_back(MultiHeadAttention<T>::create(cfg.dim, cfg.heads, rng));
        d.moe_layers.push_back(MoeFfn<T>::create(cfg.dim, cfg.ffn_dim, cfg.num_experts,
                                                 cfg.moe_topk, cfg.num_attributes, cfg.attr_dim,
                                                 rng));
        d.ln1.push_back(LayerNormParams<T>::create(cfg.dim));
        d.ln2.push_back(LayerNormParams<T>::create(cfg.dim));
      } else {
        d.plain_layers.push_back(TransformerLayer<T>::create(cfg.dim, cfg.heads, cfg.ffn_dim, rng));
      }
    }
    d.spe = Tensor<T>::randn({1, cfg.dim}, rng, 0.02, true);
    return d;
  }

  // [B,L,d] -> [B,L+1,d] with the shared <SPE> token at position 0
  Tensor<T> prepend_spe(Tensor<T> tokens) const {
    const int64_t B = tokens.dim(0);
    auto s = nc::expand_leading(nc::reshape(spe, {1, 1, cfg.dim}), B);
    return nc::concat<T>({s, tokens}, 1);
  }

  // attrs[l]: attribute of token column l; same length as the sequence.
  // sd_rng enables stochastic depth when cfg.stochastic_depth > 0.
  Tensor<T> forward(Tensor<T> tokens, const std::vector<int64_t>& attrs, const AttnSpec& spec,
                    Rng* sd_rng = nullptr) const {
    const int64_t B = tokens.dim(0), L = tokens.dim(1);
    nc::require(int64_t(attrs.size()) == L,
                "decode: attribute/token count mismatch (" + std::to_string(attrs.size()) +
                    " attrs vs " + std::to_string(L) + " tokens)");
    Tensor<T> mask;
    if (spec.prefix_len >= 0 || !spec.key_valid.empty())
      mask = build_attn_mask<T>(B, cfg.heads, L, L, spec.prefix_len, spec.key_valid);

    auto keep_block = [&]() {
      if (cfg.stochastic_depth <= 0.0 || sd_rng == nullptr) return 1.0;
      return sd_rng->uniform() < cfg.stochastic_depth ? 0.0 : 1.0 / (1.0 - cfg.stochastic_depth);
    };

    Tensor<T> x = tokens;
    for (int64_t l = 0; l < cfg.layers; ++l) {
      if (!cfg.moe_enabled) {
        x = plain_layers[size_t(l)].forward(x, mask);
        continue;
      }
      {
        const double k = keep_block();
        if (k != 0.0) {
          auto h = ln1[size_t(l)].forward(x);
          auto a = attn_layers[size_t(l)].forward(h, h, h, mask);
          x = nc::add(x, k == 1.0 ? a : nc::mul_scalar(a, k));
        }
      }
      {
        const double k = keep_block();
        if (k != 0.0) {
          auto f = moe_layers[size_t(l)].forward(ln2[size_t(l)].forward(x), attrs);
          x = nc::add(x, k == 1.0 ? f : nc::mul_scalar(f, k));
        }
      }
    }
    return x;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (size_t l = 0; l < size_t(cfg.layers); ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      if (cfg.moe_enabled) {
        attn_layers[l].collect(out, lp + ".attn");
        moe_layers[l].collect(out, lp + ".moe");
        ln1[l].collect(out, lp + ".ln1");
        ln2[l].collect(out, lp + ".ln2");
      } else {
        plain_layers[l].collect(out, lp);
      }
    }
    add_param(out, prefix + ".spe", spe);
  }
};

}  // namespace mtvl::model
