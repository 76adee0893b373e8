#pragma once

#include <string>

#include "vampnet/layers.hpp"

namespace vampnet {

enum class FusionMode { Concat, Suppression, Amplification, Adaptive };

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Concat: return "concat";
    case FusionMode::Suppression: return "suppression";
    case FusionMode::Amplification: return "amplification";
    case FusionMode::Adaptive: return "adaptive";
  }
  return "?";
}

inline FusionMode fusion_from_string(const std::string& s) {
  if (s == "concat") return FusionMode::Concat;
  if (s == "suppression") return FusionMode::Suppression;
  if (s == "amplification") return FusionMode::Amplification;
  if (s == "adaptive") return FusionMode::Adaptive;
  throw ConfigError("unknown fusion mode '" + s + "' (expected concat, suppression, amplification or adaptive)");
}

/// Combines z_sab and z_cnn ([B x d] each). Gated modes use g = sigmoid(z_cnn)
/// elementwise against z_sab; CONCAT joins the two along the feature axis.
inline Tensor fuse(const Tensor& z_sab, const Tensor& z_cnn, FusionMode mode) {
  if (mode == FusionMode::Concat) return concat_last({z_sab, z_cnn});
  if (z_sab.shape() != z_cnn.shape())
    throw ContractError("gated fusion needs equal shapes, got " + shape_str(z_sab.shape()) + " and " +
                        shape_str(z_cnn.shape()));
  Tensor g = sigmoid(z_cnn);
  switch (mode) {
    case FusionMode::Suppression: return mul(g, z_sab);
    case FusionMode::Amplification: return mul(add_scalar(g, 1.0), z_sab);
    case FusionMode::Adaptive: return mul(add_scalar(scale(g, 2.0), -1.0), z_sab);
    default: break;
  }
  throw ContractError("unreachable fusion mode");
}

inline std::size_t fused_dim(FusionMode mode, std::size_t d_model) {
  return mode == FusionMode::Concat ? 2 * d_model : d_model;
}

/// in -> d_model -> d_model/2 -> 2 logits.
struct ClassifierHead {
  Linear fc1, fc2, out;
  Activation activation = Activation::Relu;
  double dropout = 0.0;

  ClassifierHead() = default;
  ClassifierHead(ParameterSet& ps, std::size_t in, std::size_t d_model, Activation act, double p, Rng& rng)
      : fc1(ps, "head/fc1", in, d_model, rng),
        fc2(ps, "head/fc2", d_model, std::max<std::size_t>(1, d_model / 2), rng),
        out(ps, "head/out", std::max<std::size_t>(1, d_model / 2), 2, rng),
        activation(act),
        dropout(p) {}

  Tensor operator()(const Tensor& z, bool train, Rng& rng) const {
    Tensor h = vampnet::dropout(activate(fc1(z), activation), dropout, train, rng);
    h = vampnet::dropout(activate(fc2(h), activation), dropout, train, rng);
    return out(h);
  }
};

/// Softmax probability of the resistant class for every row of [B x 2] logits.
inline std::vector<double> resistant_scores(const Tensor& logits) {
  const std::size_t B = logits.dim(0);
  std::vector<double> s(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double d = logits[b * 2 + 1] - logits[b * 2];
    s[b] = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  }
  return s;
}

}  // namespace vampnet
