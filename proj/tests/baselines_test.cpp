#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vampnet/baselines.hpp"
#include "vampnet/training.hpp"

using namespace vampnet;
using vampnet::testing::oracle_chi2;

namespace {

SampleRecord with_tokens(const std::string& id, const std::vector<std::string>& toks, int label) {
  std::vector<VariantToken> t;
  for (const auto& s : toks) t.push_back(parse_token(s));
  return assemble_sample(id, t, std::vector<FeatureRow>(t.size(), FeatureRow{}), label, "RIF");
}

}  // namespace

TEST(GammaQ, MatchesErfcForHalfShape) {
  for (double x : {1e-6, 0.01, 0.5, 1.0, 2.0, 3.84, 10.0, 10.83, 25.0, 60.0, 100.0}) {
    const double ref = std::erfc(std::sqrt(x / 2));
    EXPECT_NEAR(chi2_survival_1dof(x) / ref, 1.0, 1e-12) << x;
  }
  EXPECT_EQ(chi2_survival_1dof(0.0), 1.0);
  EXPECT_NEAR(gamma_q(1.0, 2.0), std::exp(-2.0), 1e-14);
}

TEST(Chi2, PerfectAssociationGivesSampleSize) {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 50; ++i) rs.push_back(with_tokens("r" + std::to_string(i), {"5_A>G", "9_C>T"}, 1));
  for (int i = 0; i < 50; ++i) rs.push_back(with_tokens("s" + std::to_string(i), {"9_C>T"}, 0));
  auto scan = chi2_scan(rs);
  ASSERT_EQ(scan.size(), 2u);
  EXPECT_EQ(scan[0].token, "5_A>G");
  EXPECT_EQ(scan[0].chi2, 100.0);
  EXPECT_LT(scan[0].p_value, 1e-20);
  EXPECT_TRUE(scan[1].degenerate);
  EXPECT_EQ(scan[1].chi2, 0.0);
  auto sel = chi2_select(rs, 0.001);
  ASSERT_EQ(sel.size(), 1u);
  std::ostringstream out;
  write_selected_variants(out, sel);
  EXPECT_EQ(out.str().substr(0, out.str().find('\t')), "5_A>G");
  EXPECT_THROW(chi2_select({rs[0]}, 0.01), ConfigError);
}

TEST(Chi2, MatchesBruteForceContingencyOracle) {
  Rng rng(1);
  std::vector<SampleRecord> rs;
  const std::size_t n = 180, variants = 1000;
  std::vector<double> rate(variants);
  for (auto& r : rate) r = rng.uniform(0.0, 0.6);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.bernoulli(0.45) ? 1 : 0;
    std::vector<VariantToken> toks;
    for (std::size_t v = 0; v < variants; ++v)
      if (rng.bernoulli(std::min(1.0, rate[v] * (label == 1 && v % 7 == 0 ? 1.6 : 1.0))))
        toks.push_back(make_token(static_cast<long long>(v + 1), "A", "T"));
    rs.push_back(assemble_sample("s" + std::to_string(i), toks, std::vector<FeatureRow>(toks.size()), label, "RIF"));
  }
  auto scan = chi2_scan(rs);
  EXPECT_GE(scan.size(), 990u);
  std::size_t checked = 0;
  for (const auto& t : scan) {
    long long a = 0, b = 0, c = 0, d = 0;
    for (const auto& r : rs) {
      bool has = false;
      for (const auto& tok : r.tokens) has = has || tok.canonical() == t.token;
      (has ? (r.label ? a : b) : (r.label ? c : d)) += 1;
    }
    EXPECT_EQ(t.chi2, oracle_chi2(a, b, c, d)) << t.token;
    EXPECT_NEAR(t.p_value, std::erfc(std::sqrt(t.chi2 / 2)), 1e-12 * std::max(1e-300, t.p_value) + 1e-300);
    ++checked;
  }
  EXPECT_EQ(checked, scan.size());
}

TEST(Chi2, SelectionIsMonotoneInAlpha) {
  Rng rng(2);
  auto rs = vampnet::testing::random_cohort(rng, 120, 5, 30, 60);
  for (std::size_t i = 0; i < rs.size(); ++i) rs[i].label = rs[i].size() > 17 ? 1 : 0;
  std::vector<std::string> prev;
  for (double alpha : {1e-4, 1e-3, 1e-2, 0.05, 0.5, 1.0}) {
    std::vector<std::string> cur;
    for (const auto& t : chi2_select(rs, alpha)) cur.push_back(t.token);
    std::sort(cur.begin(), cur.end());
    EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end())) << alpha;
    prev = cur;
  }
}

TEST(Presence, MatrixIsBinaryStableAndIdempotent) {
  PresenceColumns cols({"3_A>G", "1_C>T"});
  auto a = with_tokens("a", {"1_C>T", "7_G>A"}, 0), b = with_tokens("b", {"3_A>G", "1_C>T"}, 1);
  std::vector<const SampleRecord*> ptrs{&a, &b};
  auto m = cols.matrix(ptrs);
  EXPECT_EQ(m.values(), (std::vector<double>{0, 1, 1, 1}));
  EXPECT_EQ(cols.matrix(ptrs).values(), m.values());
  EXPECT_THROW(PresenceColumns({"1_C>T", "1_C>T"}), ContractError);
  EXPECT_THROW(PresenceColumns().matrix(ptrs), ConfigError);
}

TEST(MlpBaseline, FitsSeparableMatrixAndIsSeeded) {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 60; ++i)
    rs.push_back(with_tokens("s" + std::to_string(i), i % 2 ? std::vector<std::string>{"1_A>G", "4_C>T"} : std::vector<std::string>{"2_A>G", "4_C>T"}, i % 2));
  PresenceColumns cols({"1_A>G", "2_A>G", "4_C>T"});
  MlpConfig mc;
  mc.hidden = {16, 8};
  mc.dropout = 0.0;
  TrainConfig tc;
  tc.max_epochs = 50;
  tc.patience = 50;
  tc.learning_rate = 0.05;
  MlpBaseline m(mc, cols, 4);
  auto res = train(m, rs, rs, tc);
  double best_train_acc = 0;
  for (const auto& r : res.curves)
    if (r.split == "train") best_train_acc = std::max(best_train_acc, r.accuracy);
  EXPECT_GE(best_train_acc, 0.99);
  EXPECT_EQ(evaluate(m, rs).auc, 1.0);
  MlpBaseline x(mc, cols, 4), y(mc, cols, 4);
  EXPECT_EQ(x.scores(pointers(rs)), y.scores(pointers(rs)));
}

TEST(MlpBaseline, AllZeroMatrixPredictsPriorClass) {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 100; ++i) rs.push_back(with_tokens("s" + std::to_string(i), {"9_A>G"}, i < 30 ? 1 : 0));
  MlpConfig mc;
  mc.hidden = {8};
  mc.dropout = 0.0;
  MlpBaseline m(mc, PresenceColumns({"1_A>G"}), 2);
  // Plain loop: every score is tied here, so validation-AUC early stopping would keep epoch 1.
  Adam opt(0.05);
  std::vector<int> y;
  for (const auto& r : rs) y.push_back(r.label);
  Rng rng(0);
  for (int step = 0; step < 300; ++step) {
    m.parameters().zero_grad();
    backward(weighted_cross_entropy(m.logits(pointers(rs), true, rng), y, std::vector<double>{1, 1}));
    opt.step(m.parameters());
  }
  auto s = m.scores(pointers(rs));
  for (double v : s) {
    EXPECT_EQ(v, s[0]);
    EXPECT_NEAR(v, 0.3, 0.03);
  }
}

TEST(CnnBaseline, PoolingChainArithmetic) {
  CnnBaselineConfig c;
  EXPECT_EQ(c.output_length(27), 1u);
  EXPECT_EQ(c.output_length(100), 3u);
  EXPECT_THROW(c.output_length(26), DimensionError);
  std::vector<std::string> toks;
  for (int i = 1; i <= 20; ++i) toks.push_back(std::to_string(i) + "_A>G");
  EXPECT_THROW(CnnBaseline(c, PresenceColumns(toks), 1), DimensionError);
}

TEST(CnnBaseline, ColumnOrderMatters) {
  Rng rng(3);
  std::vector<std::string> toks;
  for (int i = 1; i <= 30; ++i) toks.push_back(std::to_string(i) + "_A>G");
  auto reversed = toks;
  std::reverse(reversed.begin(), reversed.end());
  CnnBaselineConfig c;
  c.filters = {4, 4, 4};
  CnnBaseline fwd(c, PresenceColumns(toks), 9), rev(c, PresenceColumns(reversed), 9);
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> mine;
    for (const auto& t : toks)
      if (rng.bernoulli(0.3)) mine.push_back(t);
    rs.push_back(with_tokens("s" + std::to_string(i), mine, i % 2));
  }
  auto a = fwd.scores(pointers(rs)), b = rev.scores(pointers(rs));
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-6);
}

TEST(CnnBaseline, IdentityKernelReducesToLinearModel) {
  CnnBaselineConfig c;
  c.filters = {1};
  c.kernels = {1};
  c.pools = {1};
  c.dropout = 0.0;
  PresenceColumns cols({"1_A>G", "2_A>G", "3_A>G", "4_A>G"});
  CnnBaseline m(c, cols, 5);
  auto& ps = m.parameters();
  ps.find("cnn/conv0/kernel")->mutable_data()[0] = 1.0;
  ps.find("cnn/conv0/bias")->mutable_data()[0] = 0.0;
  const Tensor& w = *ps.find("cnn/out/weight");
  const Tensor& bias = *ps.find("cnn/out/bias");
  auto r = with_tokens("s", {"2_A>G", "4_A>G"}, 1);
  Rng rng(0);
  auto logits = m.logits({&r}, false, rng);
  for (std::size_t k = 0; k < 2; ++k) {
    const double expect = w[1 * 2 + k] + w[3 * 2 + k] + bias[k];
    EXPECT_NEAR(logits[k], expect, 1e-14);
  }
}
