// Copyright 2026 the mtvl authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <unordered_map>

#include "model/layers.hpp"

namespace mtvl::model {

// Closed-world toy vocabulary: five specials followed by the corpus words.
// Serialized as a newline-delimited token list.
class Vocabulary {
 public:
  static constexpr int64_t kPad = 0, kBos = 1, kEos = 2, kMask = 3, kSpe = 4;
  static constexpr int64_t kNumSpecials = 5;

  static Vocabulary from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    v.tokens_ = {"<PAD>", "<BOS>", "<EOS>", "<MASK>", "<SPE>"};
    for (const auto& w : words) v.tokens_.push_back(w);
    v.rebuild_index();
    return v;
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    nc::require(in.good(), "vocabulary: cannot open " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) v.tokens_.push_back(line);
    v.rebuild_index();
    nc::require(v.size() >= kNumSpecials && v.tokens_[0] == "<PAD>" && v.tokens_[4] == "<SPE>",
                "vocabulary: " + path + " lacks the special tokens");
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    nc::require(out.good(), "vocabulary: cannot write " + path);
    for (const auto& t : tokens_) out << t << "\n";
  }

  int64_t size() const { return int64_t(tokens_.size()); }
  const std::string& token(int64_t id) const { return tokens_.at(size_t(id)); }
  bool contains(const std::string& w) const { return index_.count(w) > 0; }

  int64_t id(const std::string& w) const {
    auto it = index_.find(w);
    nc::require(it != index_.end(), "vocabulary: unknown word '" + w + "' (closed world)");
    return it->second;
  }

  static std::string normalize(const std::string& text) {
    std::string out;
    bool in_space = true;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!in_space) out.push_back(' ');
        in_space = true;
      } else {
        out.push_back(char(std::tolower(static_cast<unsigned char>(c))));
        in_space = false;
      }
    }
    if (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

  // lowercase whitespace tokenization; unknown words are rejected
  std::vector<int64_t> tokenize(const std::string& text) const {
    std::vector<int64_t> ids;
    std::string norm = normalize(text);
    size_t start = 0;
    while (start < norm.size()) {
      size_t end = norm.find(' ', start);
      if (end == std::string::npos) end = norm.size();
      ids.push_back(id(norm.substr(start, end - start)));
      start = end + 1;
    }
    return ids;
  }

  std::string detokenize(const std::vector<int64_t>& ids) const {
    std::string out;
    for (int64_t i : ids) {
      if (!out.empty()) out.push_back(' ');
      out += token(i);
    }
    return out;
  }

 private:
  void rebuild_index() {
    index_.clear();
    for (size_t i = 0; i < tokens_.size(); ++i) {
      nc::require(!index_.count(tokens_[i]), "vocabulary: duplicate token '" + tokens_[i] + "'");
      index_[tokens_[i]] = int64_t(i);
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int64_t> index_;
};

struct TextEncoderConfig {
  int64_t layers = 2;
  int64_t dim = 64;
  int64_t heads = 4;
  int64_t ffn_dim = 128;
  int64_t max_len = 32;
};

template <class T>
struct TextBatch {
  Tensor<T> tokens;            // [B, L, d], L = longest sequence in the batch
  std::vector<int64_t> lens;   // valid lengths per row
};

// word embeddings + learned positions + a small transformer encoder;
// per-token features, one per input word
template <class T>
struct TextEncoder {
  TextEncoderConfig cfg;
  Tensor<T> tok_embed;  // [V, d]
  Tensor<T> pos_embed;  // [max_len, d]
  std::vector<TransformerLayer<T>> layers;

  static TextEncoder create(const TextEncoderConfig& cfg, int64_t vocab_size, Rng& rng) {
    TextEncoder e;
    e.cfg = cfg;
    e.tok_embed = Tensor<T>::randn({vocab_size, cfg.dim}, rng, 0.02, true);
    e.pos_embed = Tensor<T>::randn({cfg.max_len, cfg.dim}, rng, 0.02, true);
    for (int64_t l = 0; l < cfg.layers; ++l)
      e.layers.push_back(TransformerLayer<T>::create(cfg.dim, cfg.heads, cfg.ffn_dim, rng));
    return e;
  }

  // right-pads with <PAD>; padded key positions are masked out so content
  // outputs do not depend on pad length
  TextBatch<T> forward(const std::vector<std::vector<int64_t>>& seqs) const {
    nc::require(!seqs.empty(), "text_encoder: empty batch");
    const int64_t B = int64_t(seqs.size());
    int64_t L = 0;
    for (const auto& s : seqs) {
      nc::require(!s.empty(), "text_encoder: empty sequence");
      nc::require(int64_t(s.size()) <= cfg.max_len,
                  "text_encoder: sequence length " + std::to_string(s.size()) +
                      " exceeds max_len " + std::to_string(cfg.max_len));
      L = std::max<int64_t>(L, int64_t(s.size()));
    }
    std::vector<int64_t> flat(size_t(B * L), Vocabulary::kPad);
    std::vector<int64_t> lens(size_t(B));
    for (int64_t b = 0; b < B; ++b) {
      lens[size_t(b)] = int64_t(seqs[size_t(b)].size());
      std::copy(seqs[size_t(b)].begin(), seqs[size_t(b)].end(), flat.begin() + b * L);
    }
    auto x = nc::reshape(nc::embedding(tok_embed, flat), {B, L, cfg.dim});
    std::vector<int64_t> pos_ids(size_t(L));
    for (int64_t i = 0; i < L; ++i) pos_ids[size_t(i)] = i;
    x = nc::add(x, nc::reshape(nc::embedding(pos_embed, pos_ids), {1, L, cfg.dim}));
    auto mask = build_attn_mask<T>(B, cfg.heads, L, L, -1, lens);
    for (const auto& layer : layers) x = layer.forward(x, mask);
    return {x, lens};
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".tok_embed", tok_embed);
    add_param(out, prefix + ".pos_embed", pos_embed);
    for (size_t l = 0; l < layers.size(); ++l)
      layers[l].collect(out, prefix + ".layer" + std::to_string(l));
  }
};

}  // namespace mtvl::model
