// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "model/layers.hpp"

namespace mtvl::model {

// Token attributes drive the conditional-MoE gate: one id per token,
// combining the task with the token's modality. Routing depends only on
// these attributes, never on token content.
enum class Modality : int64_t { kImage = 0, kText = 1 };
constexpr int64_t kNumModalities = 2;

inline int64_t attribute_id(int64_t task_id, Modality m) {
  return task_id * kNumModalities + int64_t(m);
}

// Mixture-of-experts FFN with an attribute-conditioned gate. The gate embeds
// the (task, modality) attribute, projects to expert logits, softmaxes, then
// keeps the top-k weights renormalized to sum to 1. Experts with zero weight
// are skipped entirely.
template <class T>
struct MoeFfn {
  int64_t num_experts = 0, topk = 0;
  std::vector<Ffn<T>> experts;
  Tensor<T> attr_embed;  // [num_attributes, attr_dim]
  Linear<T> gate;        // attr_dim -> num_experts

  static MoeFfn create(int64_t dim, int64_t hidden, int64_t num_experts, int64_t topk,
                       int64_t num_attributes, int64_t attr_dim, Rng& rng) {
    nc::require(num_experts >= 1, "moe: num_experts must be >= 1");
    nc::require(topk >= 1 && topk <= num_experts, "moe: bad topk");
    MoeFfn m;
    m.num_experts = num_experts;
    m.topk = topk;
    for (int64_t e = 0; e < num_experts; ++e) m.experts.push_back(Ffn<T>::create(dim, hidden, rng));
    m.attr_embed = Tensor<T>::randn({num_attributes, attr_dim}, rng, 0.02, true);
    m.gate = Linear<T>::create(attr_dim, num_experts, rng);
    return m;
  }

  // soft top-k gate weights for one attribute, shape [1, num_experts]
  Tensor<T> gate_weights(int64_t attr) const {
    nc::require(attr >= 0 && attr < attr_embed.dim(0),
                "moe: unknown attribute id " + std::to_string(attr));
    auto emb = nc::embedding(attr_embed, {attr});   // [1, attr_dim]
    auto s = nc::softmax(gate.forward(emb), 1);     // [1, E]
    if (topk >= num_experts) return s;
    // rank expert weights; ties keep the lower expert index
    std::vector<int64_t> order(size_t(num_experts));
    for (int64_t e = 0; e < num_experts; ++e) order[size_t(e)] = e;
    const auto& sv = s.values();
    std::stable_sort(order.begin(), order.end(),
                     [&](int64_t a, int64_t b) { return sv[size_t(a)] > sv[size_t(b)]; });
    Tensor<T> keep = Tensor<T>::zeros({1, num_experts});
    for (int64_t i = 0; i < topk; ++i) keep.values()[size_t(order[size_t(i)])] = T(1);
    auto masked = nc::mul(s, keep);
    auto denom = nc::reshape(nc::sum_all(masked), {1, 1});
    return nc::div(masked, denom);
  }

  // tokens [B,L,d]; attrs[l] is the attribute of token column l
  Tensor<T> forward(Tensor<T> tokens, const std::vector<int64_t>& attrs) const {
    const int64_t L = tokens.dim(1);
    nc::require(int64_t(attrs.size()) == L, "moe: one attribute per token required (" +
                                                std::to_string(attrs.size()) + " vs " +
                                                std::to_string(L) + " tokens)");
    // contiguous runs of equal attribute, processed run by run
    std::vector<Tensor<T>> pieces;
    int64_t start = 0;
    while (start < L) {
      int64_t end = start + 1;
      while (end < L && attrs[size_t(end)] == attrs[size_t(start)]) ++end;
      auto seg = nc::slice(tokens, 1, start, end - start);
      auto w = gate_weights(attrs[size_t(start)]);
      Tensor<T> mixed;
      for (int64_t e = 0; e < num_experts; ++e) {
        if (w.values()[size_t(e)] == T(0)) continue;
        auto we = nc::reshape(nc::slice(w, 1, e, 1), {1, 1, 1});
        auto y = nc::mul(experts[size_t(e)].forward(seg), we);
        mixed = mixed.defined() ? nc::add(mixed, y) : y;
      }
      pieces.push_back(mixed);
      start = end;
    }
    return pieces.size() == 1 ? pieces[0] : nc::concat(pieces, 1);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (size_t e = 0; e < experts.size(); ++e)
      experts[e].collect(out, prefix + ".expert" + std::to_string(e));
    add_param(out, prefix + ".attr_embed", attr_embed);
    gate.collect(out, prefix + ".gate");
  }
};

}  // namespace mtvl::model
