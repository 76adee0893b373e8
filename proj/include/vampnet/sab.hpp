#pragma once

// Path 1: token embeddings, stacked Set Attention Blocks and a masked mean
// pool giving the permutation-invariant set representation z_SAB.

#include <cmath>
#include <string>
#include <vector>

#include "vampnet/layers.hpp"
#include "vampnet/tokenizer.hpp"

namespace vampnet {

struct SabConfig {
  std::size_t d_model = 64;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 3;
  std::size_t num_heads = 4;
  double dropout = 0.1128;
  Activation activation = Activation::Relu;
  bool masked = true;

  void validate() const {
    if (d_model == 0 || num_heads == 0 || d_model % num_heads != 0)
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                        std::to_string(num_heads) + ")");
    if (hidden_dim == 0 || num_layers == 0) throw ConfigError("hidden_dim and num_layers must be positive");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
  }
};

/// Additive B x L x L mask: entry (b, i, j) is -kMaskLarge iff key j of
/// sample b is padding.
struct AttentionMask {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<double> additive;

  static AttentionMask from_valid(std::span<const std::uint8_t> valid, std::size_t B, std::size_t L) {
    AttentionMask m{B, L, std::vector<double>(B * L * L, 0.0)};
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j)
          if (!valid[b * L + j]) m.additive[(b * L + i) * L + j] = -kMaskLarge;
    return m;
  }
};

/// Head-averaged attention matrices ([B x L x L] each), one per layer.
struct AttentionCapture {
  std::vector<std::vector<double>> per_layer;
};

struct SabLayer {
  Linear query, key, value, out;
  LayerNorm norm1;
  Linear ff1, ff2;
  LayerNorm norm2;

  SabLayer() = default;
  SabLayer(ParameterSet& ps, const std::string& p, const SabConfig& c, Rng& rng)
      : query(ps, p + "/wq", c.d_model, c.d_model, rng),
        key(ps, p + "/wk", c.d_model, c.d_model, rng),
        value(ps, p + "/wv", c.d_model, c.d_model, rng),
        out(ps, p + "/wo", c.d_model, c.d_model, rng),
        norm1(ps, p + "/norm1", c.d_model),
        ff1(ps, p + "/ff1", c.d_model, c.hidden_dim, rng),
        ff2(ps, p + "/ff2", c.hidden_dim, c.d_model, rng),
        norm2(ps, p + "/norm2", c.d_model) {}
};

/// One Set Attention Block on X [B x L x d]: multi-head scaled dot-product
/// self-attention without positional information or causal mask, residual +
/// layer norm, position-wise feed-forward, residual + layer norm. With a
/// mask, padded keys get zero weight and padded query rows are zeroed.
inline Tensor sab_layer(const SabLayer& layer, const Tensor& X, const SabConfig& c, const AttentionMask* mask,
                        std::span<const std::uint8_t> valid, bool train, Rng& rng,
                        std::vector<double>* head_avg = nullptr) {
  const std::size_t B = X.dim(0), L = X.dim(1), H = c.num_heads, dk = c.d_model / H;
  Tensor Q = layer.query(X), K = layer.key(X), V = layer.value(X);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(H);
  if (head_avg) head_avg->assign(B * L * L, 0.0);
  std::span<const double> additive;
  if (mask) additive = mask->additive;
  for (std::size_t h = 0; h < H; ++h) {
    Tensor qh = slice_last(Q, h * dk, dk), kh = slice_last(K, h * dk, dk), vh = slice_last(V, h * dk, dk);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Tensor weights = softmax_rows(scores, additive);
    if (head_avg)
      for (std::size_t i = 0; i < weights.size(); ++i) (*head_avg)[i] += weights[i] / static_cast<double>(H);
    heads.push_back(matmul(weights, vh));
  }
  Tensor attn = layer.out(H == 1 ? heads[0] : concat_last(heads));
  if (mask) attn = mask_axis(attn, valid, 1);
  Tensor h1 = layer.norm1(add(X, dropout(attn, c.dropout, train, rng)));
  Tensor ff = layer.ff2(activate(layer.ff1(h1), c.activation));
  Tensor h2 = layer.norm2(add(h1, dropout(ff, c.dropout, train, rng)));
  if (mask) h2 = mask_axis(h2, valid, 1);
  (void)B;
  return h2;
}

class SetAttentionPath {
 public:
  SetAttentionPath() = default;
  SetAttentionPath(const SabConfig& c, std::size_t vocab_size, ParameterSet& ps, Rng& rng) : config_(c) {
    c.validate();
    std::vector<double> table(vocab_size * c.d_model);
    const double sd = 1.0 / std::sqrt(static_cast<double>(c.d_model));
    for (std::size_t i = c.d_model; i < table.size(); ++i) table[i] = rng.normal(0.0, sd);  // row 0 (PAD) stays 0
    embedding_ = ps.add("path1/embedding", Tensor({vocab_size, c.d_model}, std::move(table)));
    for (std::size_t l = 0; l < c.num_layers; ++l)
      layers_.emplace_back(ps, "path1/layer" + std::to_string(l), c, rng);
  }

  const SabConfig& config() const { return config_; }
  const Tensor& embedding() const { return embedding_; }

  /// [B x L x d] token embeddings; multi-piece tokens are mean-pooled.
  Tensor embed(const PaddedBatch& b) const { return embedding_bag(embedding_, b.pieces, b.batch, b.length); }

  /// Runs the SAB stack on already-embedded tokens.
  Tensor encode(const Tensor& X, const PaddedBatch& b, bool train, Rng& rng, AttentionCapture* capture = nullptr) const {
    AttentionMask mask;
    if (config_.masked) mask = AttentionMask::from_valid(b.valid_mask, b.batch, b.length);
    Tensor H = X;
    if (capture) capture->per_layer.assign(layers_.size(), {});
    for (std::size_t l = 0; l < layers_.size(); ++l)
      H = sab_layer(layers_[l], H, config_, config_.masked ? &mask : nullptr, b.valid_mask, train, rng,
                    capture ? &capture->per_layer[l] : nullptr);
    return H;
  }

  /// Mean over valid positions; a sample with none pools to zero.
  static Tensor pool(const Tensor& H, const PaddedBatch& b) { return masked_mean(H, b.valid_mask); }

  Tensor forward_from_embeddings(const Tensor& X, const PaddedBatch& b, bool train, Rng& rng,
                                 AttentionCapture* capture = nullptr) const {
    return pool(encode(X, b, train, rng, capture), b);
  }

  Tensor forward(const PaddedBatch& b, bool train, Rng& rng, AttentionCapture* capture = nullptr) const {
    return forward_from_embeddings(embed(b), b, train, rng, capture);
  }

  /// Zeroes the padding row's gradient so optimiser steps never move it.
  void freeze_pad_row() {
    if (!embedding_.has_grad()) return;
    auto g = embedding_.mutable_grad();
    std::fill(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(config_.d_model), 0.0);
  }

 private:
  SabConfig config_;
  Tensor embedding_;
  std::vector<SabLayer> layers_;
};

}  // namespace vampnet
