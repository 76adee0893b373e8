#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vampnet/cnn.hpp"
#include "vampnet/fusion.hpp"
#include "vampnet/sab.hpp"

namespace vampnet {

/// Anything the training loop can fit: raw (unnormalised) records in, [B x 2]
/// logits out.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Tensor logits(const std::vector<const SampleRecord*>& records, bool train, Rng& rng) const = 0;
  virtual ParameterSet& parameters() = 0;
  virtual const ParameterSet& parameters() const = 0;
  virtual std::string kind() const = 0;
  /// Hook run after backward and before the optimiser step.
  virtual void before_step() {}

  std::vector<double> scores(const std::vector<const SampleRecord*>& records) const {
    NoGradGuard guard;
    Rng unused(0);
    return resistant_scores(logits(records, false, unused));
  }
};

struct VampNetConfig {
  SabConfig sab;
  CnnConfig cnn;
  FusionMode fusion = FusionMode::Amplification;
  bool use_path2 = true;
  std::size_t max_len = 0;  // 0: decided from the training split

  void validate() const {
    sab.validate();
    if (use_path2) cnn.validate();
  }
};

/// Both paths, fusion and head. Holds the vocabulary and the normaliser so a
/// checkpoint is self-contained.
class VampNet : public Classifier {
 public:
  VampNet(const VampNetConfig& config, Vocabulary vocab, const CohortStats& stats, std::uint64_t seed)
      : config_(config), vocab_(std::move(vocab)), stats_(stats), seed_(seed) {
    config_.validate();
    if (config_.max_len == 0) throw ConfigError("VampNet needs max_len >= 1");
    Rng rng(seed);
    path1_ = SetAttentionPath(config_.sab, vocab_.size(), params_, rng);
    const std::size_t d = config_.sab.d_model;
    std::size_t head_in = d;
    if (config_.use_path2) {
      path2_ = QualityCnnPath(config_.cnn, d, params_, rng);
      head_in = fused_dim(config_.fusion, d);
    }
    head_ = ClassifierHead(params_, head_in, d, config_.sab.activation, config_.sab.dropout, rng);
  }

  const VampNetConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const CohortStats& normalizer() const { return stats_; }
  std::uint64_t seed() const { return seed_; }
  const SetAttentionPath& path1() const { return path1_; }
  const QualityCnnPath& path2() const { return path2_; }

  std::string kind() const override { return "vampnet"; }
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }

  /// Normalises and pads raw records.
  PaddedBatch prepare(const std::vector<const SampleRecord*>& records) const {
    std::vector<SampleRecord> norm;
    norm.reserve(records.size());
    for (const auto* r : records) norm.push_back(apply_normalizer(stats_, *r));
    return collate(norm, vocab_, config_.max_len);
  }

  Tensor embed(const PaddedBatch& b) const { return path1_.embed(b); }

  Tensor forward_from_embeddings(const Tensor& X, const PaddedBatch& b, bool train, Rng& rng,
                                 AttentionCapture* capture = nullptr) const {
    Tensor z = path1_.forward_from_embeddings(X, b, train, rng, capture);
    if (config_.use_path2) z = fuse(z, path2_.forward(b, train, rng), config_.fusion);
    return head_(z, train, rng);
  }

  Tensor forward(const PaddedBatch& b, bool train, Rng& rng, AttentionCapture* capture = nullptr) const {
    return forward_from_embeddings(embed(b), b, train, rng, capture);
  }

  Tensor logits(const std::vector<const SampleRecord*>& records, bool train, Rng& rng) const override {
    return forward(prepare(records), train, rng);
  }

  void before_step() override { path1_.freeze_pad_row(); }

 private:
  VampNetConfig config_;
  Vocabulary vocab_;
  CohortStats stats_;
  std::uint64_t seed_;
  ParameterSet params_;
  SetAttentionPath path1_;
  QualityCnnPath path2_;
  ClassifierHead head_;
};

inline std::vector<const SampleRecord*> pointers(const std::vector<SampleRecord>& rs) {
  std::vector<const SampleRecord*> p;
  p.reserve(rs.size());
  for (const auto& r : rs) p.push_back(&r);
  return p;
}

}  // namespace vampnet
