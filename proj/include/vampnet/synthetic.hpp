#pragma once

// Seeded desk-scale cohorts with planted marginal variants, planted
// variant pairs and a quality gate on FRS.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "vampnet/metrics.hpp"
#include "vampnet/rng.hpp"
#include "vampnet/vcf.hpp"

namespace vampnet {

struct SyntheticSpec {
  std::size_t n_samples = 2000;
  std::size_t vocab_size = 500;
  double background_mean = 12.0;
  std::size_t n_marginal = 2;
  std::size_t n_pairs = 2;
  double marginal_rate = 0.23;     // per-sample probability of carrying each marginal variant
  double pair_rate = 0.23;         // probability of carrying both members of a pair
  double pair_member_rate = 0.10;  // probability of carrying one member alone
  double low_quality_rate = 0.30;  // share of samples sequenced at low quality
  double tau = 0.5;
  double noise = 0.05;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_samples == 0) throw ConfigError("synthetic cohort needs at least one sample");
    if (!(tau > 0 && tau < 1)) throw ConfigError("tau must lie in (0,1)");
    if (!(noise >= 0 && noise < 0.5)) throw ConfigError("label noise must lie in [0,0.5)");
    if (n_marginal + 2 * n_pairs >= vocab_size)
      throw ConfigError("vocab_size " + std::to_string(vocab_size) + " too small for " + std::to_string(n_marginal) +
                        " marginal variants and " + std::to_string(n_pairs) + " pairs");
    for (double p : {marginal_rate, pair_rate, pair_member_rate, low_quality_rate})
      if (!(p >= 0 && p <= 1)) throw ConfigError("synthetic rates must lie in [0,1]");
    if (!(background_mean >= 0)) throw ConfigError("background mean must be non-negative");
  }
};

struct SyntheticLedger {
  std::vector<std::string> marginal;                           // canonical tokens
  std::vector<std::pair<std::string, std::string>> pairs;      // both members required
  double tau = 0.5;

  std::vector<std::string> causal_tokens() const {
    std::vector<std::string> t = marginal;
    for (const auto& [a, b] : pairs) {
      t.push_back(a);
      t.push_back(b);
    }
    return t;
  }
};

struct SyntheticCohort {
  std::vector<SampleRecord> records;
  std::vector<int> clean_labels;  // labelling rule before noise
  SyntheticLedger ledger;
};

/// Resistant iff a marginal variant is present with FRS >= tau, or both
/// members of a pair are present with FRS >= tau. Lower-quality calls are
/// treated as spurious.
inline int rule_label(const SampleRecord& r, const SyntheticLedger& ledger) {
  std::set<std::string> credible;
  const auto frs = static_cast<std::size_t>(Channel::FRS);
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    if (r.features[i][frs] >= ledger.tau) credible.insert(r.tokens[i].canonical());
  for (const auto& m : ledger.marginal)
    if (credible.count(m)) return 1;
  for (const auto& [a, b] : ledger.pairs)
    if (credible.count(a) && credible.count(b)) return 1;
  return 0;
}

namespace detail {

inline std::vector<VariantToken> synthetic_universe(std::size_t n, Rng& rng) {
  static constexpr char kBases[] = {'A', 'C', 'G', 'T'};
  std::vector<VariantToken> u;
  std::set<long long> used;
  while (u.size() < n) {
    const long long pos = 1000 + static_cast<long long>(rng.index(4'400'000));
    if (!used.insert(pos).second) continue;
    const std::size_t r = rng.index(4), a = (r + 1 + rng.index(3)) % 4;
    u.push_back(make_token(pos, std::string(1, kBases[r]), std::string(1, kBases[a])));
  }
  return u;
}

/// Raw quality row for one call in a sample of base quality q.
inline FeatureRow synthetic_features(double q, Rng& rng) {
  FeatureRow f{};
  const double frs = std::clamp(q + rng.normal(0.0, 0.03), 0.0, 1.0);
  const double dp = std::round(rng.uniform(15.0, 150.0));
  f[static_cast<std::size_t>(Channel::GT)] = rng.bernoulli(0.1) ? 0.5 : 1.0;
  f[static_cast<std::size_t>(Channel::DP)] = dp;
  f[static_cast<std::size_t>(Channel::DPF)] = rng.uniform(0.5, 1.5);
  f[static_cast<std::size_t>(Channel::COV_REF)] = std::round(rng.uniform(0.0, 40.0));
  f[static_cast<std::size_t>(Channel::COV_ALT)] = std::round(rng.uniform(10.0, 120.0));
  f[static_cast<std::size_t>(Channel::FRS)] = frs;
  f[static_cast<std::size_t>(Channel::GT_CONF)] = rng.uniform(50.0, 500.0);
  f[static_cast<std::size_t>(Channel::GT_CONF_PERCENTILE)] = 100.0 * (0.4 * frs + 0.6 * rng.uniform());
  return f;
}

}  // namespace detail

inline SyntheticCohort generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto universe = detail::synthetic_universe(spec.vocab_size, rng);
  SyntheticCohort c;
  c.ledger.tau = spec.tau;
  std::size_t next = 0;
  std::vector<std::size_t> marginal_ids, pair_ids;
  for (std::size_t i = 0; i < spec.n_marginal; ++i) {
    marginal_ids.push_back(next);
    c.ledger.marginal.push_back(universe[next++].canonical());
  }
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    pair_ids.push_back(next);
    c.ledger.pairs.emplace_back(universe[next].canonical(), universe[next + 1].canonical());
    next += 2;
  }
  const std::size_t first_background = next;
  const std::size_t n_background = spec.vocab_size - first_background;

  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    const bool low = rng.bernoulli(spec.low_quality_rate);
    const double q = low ? rng.uniform(0.05, 0.45) : rng.uniform(0.55, 0.98);
    std::set<std::size_t> ids;
    for (auto m : marginal_ids)
      if (rng.bernoulli(spec.marginal_rate)) ids.insert(m);
    for (auto p : pair_ids) {
      if (rng.bernoulli(spec.pair_rate)) {
        ids.insert(p);
        ids.insert(p + 1);
      } else if (rng.bernoulli(2 * spec.pair_member_rate)) {
        ids.insert(rng.bernoulli(0.5) ? p : p + 1);
      }
    }
    const auto k = std::min(static_cast<std::size_t>(rng.poisson(spec.background_mean)), n_background);
    std::set<std::size_t> bg;
    while (bg.size() < k) bg.insert(first_background + rng.index(n_background));
    ids.insert(bg.begin(), bg.end());

    std::vector<std::size_t> ordered(ids.begin(), ids.end());
    std::sort(ordered.begin(), ordered.end(),
              [&](std::size_t a, std::size_t b) { return universe[a].position < universe[b].position; });
    std::vector<VariantToken> toks;
    std::vector<FeatureRow> feats;
    for (auto id : ordered) {
      toks.push_back(universe[id]);
      feats.push_back(detail::synthetic_features(q, rng));
    }
    auto rec = assemble_sample("syn" + std::to_string(s), toks, feats, 0, "SYN");
    const int clean = rule_label(rec, c.ledger);
    rec.label = rng.bernoulli(spec.noise) ? 1 - clean : clean;
    c.clean_labels.push_back(clean);
    c.records.push_back(std::move(rec));
  }
  return c;
}

/// AUC of the noiseless rule against the observed labels: the best any
/// scorer can do on this cohort.
inline double bayes_optimal_auc(const SyntheticCohort& c) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& r : c.records) {
    s.push_back(static_cast<double>(rule_label(r, c.ledger)));
    y.push_back(r.label);
  }
  return roc_auc(s, y);
}

inline void write_ledger(std::ostream& out, const SyntheticLedger& l) {
  out << "element,kind,members,effect\n";
  for (std::size_t i = 0; i < l.marginal.size(); ++i) out << "m" << i << ",marginal," << l.marginal[i] << ",1\n";
  for (std::size_t i = 0; i < l.pairs.size(); ++i)
    out << "p" << i << ",pair," << l.pairs[i].first << ';' << l.pairs[i].second << ",1\n";
}

}  // namespace vampnet
