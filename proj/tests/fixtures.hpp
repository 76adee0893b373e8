#pragma once

#include <string>
#include <vector>

#include "vampnet/rng.hpp"
#include "vampnet/vcf.hpp"

namespace vampnet::testing {

/// Sample with `n` distinct tokens drawn from positions 1..universe and
/// uniform [0,1) feature rows.
inline SampleRecord random_record(Rng& rng, std::size_t n, std::size_t universe, int label, const std::string& id) {
  std::vector<VariantToken> toks;
  std::vector<FeatureRow> feats;
  std::vector<std::size_t> pos = rng.permutation(universe);
  for (std::size_t i = 0; i < n && i < universe; ++i) {
    toks.push_back(make_token(static_cast<long long>(pos[i] + 1), "A", "G"));
    FeatureRow f;
    for (auto& x : f) x = rng.uniform();
    feats.push_back(f);
  }
  return assemble_sample(id, toks, feats, label, "RIF");
}

inline std::vector<SampleRecord> random_cohort(Rng& rng, std::size_t count, std::size_t min_len, std::size_t max_len,
                                               std::size_t universe) {
  std::vector<SampleRecord> rs;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = min_len + rng.index(max_len - min_len + 1);
    rs.push_back(random_record(rng, n, universe, static_cast<int>(i % 2), "s" + std::to_string(i)));
  }
  return rs;
}

}  // namespace vampnet::testing
