#pragma once

// Path 2: quality-aware 1-D CNN. The eight quality channels are the input
// channels of convolutions running along the variant axis; a masked mean
// over valid positions and a projection to d_model give z_CNN.

#include <string>
#include <vector>

#include "vampnet/layers.hpp"
#include "vampnet/tokenizer.hpp"

namespace vampnet {

struct CnnConfig {
  std::size_t conv_layers = 3;
  std::size_t kernel = 3;
  std::size_t channels = 32;
  Activation activation = Activation::Relu;
  double dropout = 0.1128;

  void validate() const {
    if (conv_layers == 0 || channels == 0) throw ConfigError("conv_layers and channels must be positive");
    if (kernel % 2 == 0) throw ConfigError("conv kernel size must be odd for same-padding, got " + std::to_string(kernel));
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
  }
};

class QualityCnnPath {
 public:
  QualityCnnPath() = default;
  QualityCnnPath(const CnnConfig& c, std::size_t d_model, ParameterSet& ps, Rng& rng) : config_(c) {
    c.validate();
    std::size_t in = kNumChannels;
    for (std::size_t l = 0; l < c.conv_layers; ++l) {
      const std::string p = "path2/conv" + std::to_string(l);
      kernels_.push_back(ps.add(p + "/kernel", glorot({c.channels, in, c.kernel}, in * c.kernel, c.channels, rng)));
      biases_.push_back(ps.add(p + "/bias", Tensor::zeros({c.channels})));
      in = c.channels;
    }
    projection_ = Linear(ps, "path2/projection", c.channels, d_model, rng);
  }

  const CnnConfig& config() const { return config_; }
  const std::vector<Tensor>& kernels() const { return kernels_; }

  /// features [B x L x 8] (zero under padding) -> z_CNN [B x d_model].
  Tensor forward(const Tensor& features, std::span<const std::uint8_t> valid, bool train, Rng& rng) const {
    const std::size_t pad = config_.kernel / 2;
    Tensor x = transpose(features);  // [B x 8 x L]
    for (std::size_t l = 0; l < kernels_.size(); ++l) {
      x = conv1d(x, kernels_[l], biases_[l], 1, pad, pad);
      x = dropout(activate(x, config_.activation), config_.dropout, train, rng);
      x = mask_axis(x, valid, 2);
    }
    return projection_(masked_mean(transpose(x), valid));
  }

  Tensor forward(const PaddedBatch& b, bool train, Rng& rng) const {
    return forward(b.features, b.valid_mask, train, rng);
  }

 private:
  CnnConfig config_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
  Linear projection_;
};

}  // namespace vampnet
