#pragma once

// Presence/absence baselines: chi-squared variant selection, an MLP and a
// pooled 1-D CNN over the selected-variant matrix.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "vampnet/cohort_io.hpp"
#include "vampnet/model.hpp"

namespace vampnet {

/// Regularised upper incomplete gamma Q(a, x): series for x < a + 1,
/// Lentz continued fraction otherwise.
inline double gamma_q(double a, double x) {
  if (a <= 0) throw ContractError("gamma_q needs a > 0");
  if (x <= 0) return 1.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1) {
    double sum = 1.0 / a, term = sum, ap = a;
    for (int n = 0; n < 1000; ++n) {
      ap += 1;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(log_prefix);
  }
  const double tiny = 1e-300;
  double b = x + 1 - a, c = 1 / tiny, d = 1 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1) < 1e-16) break;
  }
  return std::exp(log_prefix) * h;
}

/// Upper tail of the chi-squared distribution with one degree of freedom.
inline double chi2_survival_1dof(double x) { return gamma_q(0.5, x / 2.0); }

/// Pearson statistic (no continuity correction) of the 2x2 table
/// [[a, b], [c, d]] = [[present&R, present&S], [absent&R, absent&S]].
/// A zero margin gives 0.
inline double pearson_chi2(double a, double b, double c, double d) {
  const double n = a + b + c + d;
  const double r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) return 0.0;
  const double det = a * d - b * c;
  return n * det * det / (r1 * r2 * c1 * c2);
}

struct VariantTest {
  std::string token;
  double chi2 = 0;
  double p_value = 1;
  bool degenerate = false;
};

/// One test per distinct token (each counted at most once per sample),
/// sorted by p ascending and then token.
inline std::vector<VariantTest> chi2_scan(const std::vector<SampleRecord>& cohort) {
  std::array<std::size_t, 2> n_class{};
  std::map<std::string, std::array<std::size_t, 2>> present;
  for (const auto& r : cohort) {
    if (r.label != 0 && r.label != 1) throw ContractError("label must be 0 or 1");
    ++n_class[static_cast<std::size_t>(r.label)];
    std::set<std::string> seen;
    for (const auto& t : r.tokens) seen.insert(t.canonical());
    for (const auto& s : seen) ++present[s][static_cast<std::size_t>(r.label)];
  }
  if (n_class[0] == 0 || n_class[1] == 0) throw ConfigError("chi-squared selection needs both classes present");
  std::vector<VariantTest> out;
  for (const auto& [tok, cnt] : present) {
    const double a = static_cast<double>(cnt[1]), b = static_cast<double>(cnt[0]);
    const double c = static_cast<double>(n_class[1]) - a, d = static_cast<double>(n_class[0]) - b;
    VariantTest v{tok, pearson_chi2(a, b, c, d), 1.0, (a + b) == 0 || (c + d) == 0};
    if (!v.degenerate) v.p_value = chi2_survival_1dof(v.chi2);
    out.push_back(v);
  }
  std::sort(out.begin(), out.end(), [](const VariantTest& x, const VariantTest& y) {
    return x.p_value != y.p_value ? x.p_value < y.p_value : x.token < y.token;
  });
  return out;
}

/// Tests with p < alpha, degenerate variants excluded.
inline std::vector<VariantTest> chi2_select(const std::vector<SampleRecord>& cohort, double alpha) {
  if (!(alpha > 0 && alpha <= 1)) throw ConfigError("chi-squared alpha must lie in (0,1]");
  std::vector<VariantTest> keep;
  for (auto& v : chi2_scan(cohort))
    if (!v.degenerate && v.p_value < alpha) keep.push_back(v);
  return keep;
}

inline void write_selected_variants(std::ostream& out, const std::vector<VariantTest>& tests) {
  for (const auto& t : tests) out << t.token << '\t' << format_double(t.chi2) << '\t' << format_double(t.p_value) << '\n';
}

/// Column map of a samples x variants binary matrix.
class PresenceColumns {
 public:
  PresenceColumns() = default;
  explicit PresenceColumns(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (!index_.emplace(tokens_[i], i).second) throw ContractError("duplicate presence column " + tokens_[i]);
  }
  static PresenceColumns from_tests(const std::vector<VariantTest>& tests) {
    std::vector<std::string> t;
    for (const auto& v : tests) t.push_back(v.token);
    return PresenceColumns(std::move(t));
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// [B x C] with 1 where the sample carries the column's variant.
  Tensor matrix(const std::vector<const SampleRecord*>& records) const {
    if (tokens_.empty()) throw ConfigError("presence matrix has no columns (no variant passed selection)");
    std::vector<double> m(records.size() * tokens_.size(), 0.0);
    for (std::size_t b = 0; b < records.size(); ++b)
      for (const auto& t : records[b]->tokens)
        if (auto it = index_.find(t.canonical()); it != index_.end()) m[b * tokens_.size() + it->second] = 1.0;
    return Tensor({records.size(), tokens_.size()}, std::move(m));
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

struct MlpConfig {
  std::vector<std::size_t> hidden{1024, 128, 128};
  double dropout = 0.1315;
  Activation activation = Activation::Gelu;
};

class MlpBaseline : public Classifier {
 public:
  MlpBaseline(const MlpConfig& c, PresenceColumns cols, std::uint64_t seed)
      : config_(c), cols_(std::move(cols)), seed_(seed) {
    if (c.hidden.empty()) throw ConfigError("MLP needs at least one hidden layer");
    if (!(c.dropout >= 0 && c.dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
    Rng rng(seed);
    std::size_t in = cols_.size();
    for (std::size_t i = 0; i < c.hidden.size(); ++i) {
      layers_.emplace_back(params_, "mlp/fc" + std::to_string(i), in, c.hidden[i], rng);
      in = c.hidden[i];
    }
    out_ = Linear(params_, "mlp/out", in, 2, rng);
  }

  std::string kind() const override { return "mlp"; }
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }
  const MlpConfig& config() const { return config_; }
  const PresenceColumns& columns() const { return cols_; }
  std::uint64_t seed() const { return seed_; }

  Tensor forward(const Tensor& x, bool train, Rng& rng) const {
    Tensor h = x;
    for (const auto& l : layers_) h = dropout(activate(l(h), config_.activation), config_.dropout, train, rng);
    return out_(h);
  }

  Tensor logits(const std::vector<const SampleRecord*>& records, bool train, Rng& rng) const override {
    return forward(cols_.matrix(records), train, rng);
  }

 private:
  MlpConfig config_;
  PresenceColumns cols_;
  std::uint64_t seed_;
  ParameterSet params_;
  std::vector<Linear> layers_;
  Linear out_;
};

struct CnnBaselineConfig {
  std::vector<std::size_t> filters{96, 128, 256};
  std::vector<std::size_t> kernels{5, 9, 2};
  std::vector<std::size_t> pools{3, 3, 3};
  double dropout = 0.1487;
  Activation activation = Activation::Relu;

  void validate() const {
    if (filters.empty() || filters.size() != kernels.size() || filters.size() != pools.size())
      throw ConfigError("CNN baseline needs equally many filters, kernels and pool sizes");
    for (std::size_t i = 0; i < filters.size(); ++i)
      if (filters[i] == 0 || kernels[i] == 0 || pools[i] == 0) throw ConfigError("CNN baseline sizes must be positive");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
  }

  /// Variant-axis length after every conv (same padding) and pool stage.
  std::size_t output_length(std::size_t width) const {
    for (auto p : pools) {
      if (width < p)
        throw DimensionError("presence matrix width " + std::to_string(width) + " too narrow for the pooling chain");
      width /= p;
    }
    return width;
  }
};

class CnnBaseline : public Classifier {
 public:
  CnnBaseline(const CnnBaselineConfig& c, PresenceColumns cols, std::uint64_t seed)
      : config_(c), cols_(std::move(cols)), seed_(seed) {
    c.validate();
    out_len_ = c.output_length(cols_.size());
    Rng rng(seed);
    std::size_t in = 1;
    for (std::size_t i = 0; i < c.filters.size(); ++i) {
      const std::string p = "cnn/conv" + std::to_string(i);
      kernels_.push_back(params_.add(
          p + "/kernel", glorot({c.filters[i], in, c.kernels[i]}, in * c.kernels[i], c.filters[i], rng)));
      biases_.push_back(params_.add(p + "/bias", Tensor::zeros({c.filters[i]})));
      in = c.filters[i];
    }
    out_ = Linear(params_, "cnn/out", in * out_len_, 2, rng);
  }

  std::string kind() const override { return "cnn"; }
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }
  const CnnBaselineConfig& config() const { return config_; }
  const PresenceColumns& columns() const { return cols_; }
  std::uint64_t seed() const { return seed_; }

  /// x [B x C] presence rows. Even kernels pad one more on the right.
  Tensor forward(const Tensor& x, bool train, Rng& rng) const {
    const std::size_t B = x.dim(0);
    Tensor h = reshape(x, {B, 1, x.dim(1)});
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
      const std::size_t k = config_.kernels[i];
      h = conv1d(h, kernels_[i], biases_[i], 1, (k - 1) / 2, k / 2);
      h = dropout(activate(h, config_.activation), config_.dropout, train, rng);
      h = max_pool1d(h, config_.pools[i]);
    }
    return out_(reshape(h, {B, h.dim(1) * h.dim(2)}));
  }

  Tensor logits(const std::vector<const SampleRecord*>& records, bool train, Rng& rng) const override {
    return forward(cols_.matrix(records), train, rng);
  }

 private:
  CnnBaselineConfig config_;
  PresenceColumns cols_;
  std::uint64_t seed_;
  std::size_t out_len_ = 0;
  ParameterSet params_;
  std::vector<Tensor> kernels_, biases_;
  Linear out_;
};

}  // namespace vampnet
