#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vampnet/explain.hpp"

using namespace vampnet;
using vampnet::testing::exhaustive_max_q;
using vampnet::testing::oracle_q;
using vampnet::testing::random_graph;
using vampnet::testing::random_cohort;

namespace {

VampNetConfig small_config(bool masked, std::size_t max_len) {
  VampNetConfig c;
  c.sab.d_model = 8;
  c.sab.hidden_dim = 8;
  c.sab.num_layers = 2;
  c.sab.num_heads = 2;
  c.sab.dropout = 0.0;
  c.sab.activation = Activation::Gelu;
  c.sab.masked = masked;
  c.cnn.conv_layers = 2;
  c.cnn.channels = 4;
  c.cnn.dropout = 0.0;
  c.cnn.activation = Activation::Gelu;
  c.max_len = max_len;
  return c;
}

// Fresh models have zero biases, which makes the all-zero embedding a
// degenerate point for post-residual LayerNorm (the output jumps as soon as
// the input leaves zero). Trained models do not sit there.
void randomise_biases(VampNet& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : m.parameters().items())
    if (name.ends_with("bias") || name.ends_with("beta"))
      for (auto& v : t.mutable_data()) v = rng.normal(0, 0.3);
}

InteractionMatrix matrix_from(const std::vector<std::string>& names, const std::vector<double>& w) {
  InteractionMatrix m;
  m.variants = names;
  m.weight = w;
  m.counts.assign(w.size(), 10);
  return m;
}

}  // namespace

TEST(IntegratedGradients, LinearSurrogateIsExact) {
  Rng rng(1);
  const std::size_t n = 12;
  std::vector<double> w(n), x(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = rng.normal(0, 2);
    x[i] = rng.normal(0, 1);
    b[i] = rng.normal(0, 1);
  }
  Tensor W({n, 1}, w);
  auto f = [&](const Tensor& batch) { return matmul(batch, W); };
  for (std::size_t steps : {1u, 3u, 20u}) {
    auto attr = integrated_gradients(f, Tensor({n}, x), Tensor({n}, b), steps);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(attr[i], w[i] * (x[i] - b[i]), 1e-10);
  }
  EXPECT_THROW(integrated_gradients(f, Tensor({n}, x), Tensor({n}, b), 0), ConfigError);
  EXPECT_THROW(integrated_gradients(f, Tensor({n}, x), Tensor::zeros({n + 1}), 5), DimensionError);
}

TEST(IntegratedGradients, CompletenessOnSmoothFunction) {
  const std::size_t n = 5;
  std::vector<double> x{0.5, -1.0, 2.0, 0.3, -0.7};
  // F(x) = sum_i sigmoid(c_i x_i)
  Tensor C({n, 1}, {1.0, 2.0, -1.5, 0.5, 3.0});
  auto g = [&](const Tensor& batch) {
    Tensor s = sigmoid(mul(batch, reshape(C, {n})));
    return matmul(s, Tensor({n, 1}, std::vector<double>(n, 1.0)));
  };
  auto F = [&](const std::vector<double>& v) {
    double t = 0;
    for (std::size_t i = 0; i < n; ++i) t += 1 / (1 + std::exp(-C[i] * v[i]));
    return t;
  };
  auto attr = integrated_gradients(g, Tensor({n}, x), Tensor::zeros({n}), 256);
  double total = 0;
  for (double a : attr) total += a;
  const double delta = F(x) - F(std::vector<double>(n, 0.0));
  EXPECT_NEAR(total, delta, 0.01 * std::abs(delta));
}

TEST(VariantAttributions, TrimmedBatchMatchesPaddedForward) {
  Rng rng(2);
  auto rs = random_cohort(rng, 6, 1, 7, 20);
  VampNet m(small_config(true, 9), build_static_vocab(rs), fit_normalizer(rs), 3);
  Rng unused(0);
  for (const auto& r : rs) {
    auto full = m.forward(m.prepare({&r}), false, unused);
    auto trimmed = m.forward(single_batch(m, r), false, unused);
    EXPECT_NEAR(full[1], trimmed[1], 1e-10);
    EXPECT_NEAR(full[0], trimmed[0], 1e-10);
  }
}

TEST(VariantAttributions, CompletenessConvergesWithSteps) {
  Rng rng(4);
  auto rs = random_cohort(rng, 12, 2, 8, 25);
  for (bool masked : {true, false}) {
    VampNet m(small_config(masked, 8), build_static_vocab(rs), fit_normalizer(rs), 11);
    randomise_biases(m, 12);
    for (const auto& r : rs) {
      auto gap = [&](std::size_t steps) {
        auto a = variant_attributions(m, r, steps);
        EXPECT_EQ(a.tokens.size(), std::min<std::size_t>(r.size(), 8));
        double total = 0;
        for (double s : a.scores) total += s;
        return std::pair{std::abs(total - (a.f_input - a.f_baseline)), std::abs(a.f_input - a.f_baseline)};
      };
      const auto [coarse, delta] = gap(64);
      const auto [fine, same_delta] = gap(1024);
      EXPECT_EQ(delta, same_delta);
      EXPECT_LE(fine, 0.25 * coarse + 1e-12) << r.sample_id;
      EXPECT_LE(fine, 0.01 * delta) << r.sample_id;
    }
  }
}

TEST(VariantAttributions, ChunkedPathMatchesWholePath) {
  Rng rng(7);
  auto rs = random_cohort(rng, 4, 2, 7, 20);
  VampNet m(small_config(true, 8), build_static_vocab(rs), fit_normalizer(rs), 5);
  randomise_biases(m, 6);
  const std::size_t steps = 2 * kIgChunk + 5;
  for (const auto& r : rs) {
    PaddedBatch one = single_batch(m, r);
    const std::size_t L = one.length, d = m.config().sab.d_model;
    Tensor e = m.embed(one).detach();
    auto f = [&](const Tensor& batch) {
      Rng unused(0);
      const std::size_t k = batch.dim(0);
      return slice_last(m.forward_from_embeddings(reshape(batch, {k, L, d}), repeat_batch(one, k), false, unused), 1, 1);
    };
    const auto dims = integrated_gradients(f, reshape(e, {L * d}), Tensor::zeros({L * d}), steps);
    const auto a = variant_attributions(m, r, steps);
    ASSERT_EQ(a.scores.size(), L);
    for (std::size_t l = 0; l < L; ++l) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += dims[l * d + j];
      EXPECT_NEAR(a.scores[l], s, 1e-12 * std::max(1.0, std::abs(s)));
    }
  }
}

TEST(VariantAttributions, FInputIsResistantLogit) {
  Rng rng(5);
  auto rs = random_cohort(rng, 3, 3, 5, 15);
  VampNet m(small_config(true, 6), build_static_vocab(rs), fit_normalizer(rs), 2);
  Rng unused(0);
  for (const auto& r : rs) {
    auto a = variant_attributions(m, r);
    EXPECT_NEAR(a.f_input, m.forward(m.prepare({&r}), false, unused)[1], 1e-10);
    EXPECT_THROW(variant_attributions(m, r, 0), ConfigError);
  }
}

TEST(Attributions, AggregateRanksByAbsoluteMean) {
  std::vector<SampleAttribution> per{
      {"a", {"1_A>G", "2_A>G"}, {0.5, -2.0}, 0, 0},
      {"b", {"1_A>G", "3_A>G"}, {1.5, 0.1}, 0, 0},
  };
  auto rep = aggregate_attributions(per);
  ASSERT_EQ(rep.size(), 3u);
  EXPECT_EQ(rep[0].variant, "2_A>G");
  EXPECT_EQ(rep[0].mean_score, -2.0);
  EXPECT_EQ(rep[1].variant, "1_A>G");
  EXPECT_EQ(rep[1].mean_score, 1.0);
  EXPECT_EQ(rep[1].n_samples, 2u);
  std::ostringstream out;
  write_attributions(out, rep);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "variant,mean_score,abs_rank,n_samples");
  EXPECT_NE(out.str().find("1_A>G,1,2,2"), std::string::npos);
}

TEST(Ablation, ChannelsAreInertWithoutPath2) {
  Rng rng(6);
  auto rs = random_cohort(rng, 20, 2, 6, 15);
  auto cfg = small_config(true, 6);
  cfg.use_path2 = false;
  VampNet m(cfg, build_static_vocab(rs), fit_normalizer(rs), 9);
  auto rows = ablate_channels(m, rs);
  ASSERT_EQ(rows.size(), kNumChannels);
  EXPECT_EQ(rows.front().channel, "GT");
  rows.push_back(ablate_all_channels(m, rs));
  for (const auto& r : rows) {
    EXPECT_EQ(r.auc_drop, 0.0) << r.channel;
    EXPECT_EQ(r.f1_drop, 0.0) << r.channel;
  }
  for (double s : channel_saliency(m, rs)) EXPECT_EQ(s, 0.0);
  EXPECT_THROW(ablate_channel(m, rs, "XYZ"), ConfigError);
}

TEST(Ablation, ZeroingChangesScoresWithPath2) {
  Rng rng(7);
  auto rs = random_cohort(rng, 20, 2, 6, 15);
  VampNet m(small_config(true, 6), build_static_vocab(rs), fit_normalizer(rs), 9);
  auto base = scores_with_channels_zeroed(m, rs, {});
  auto cut = scores_with_channels_zeroed(m, rs, {Channel::FRS});
  double diff = 0;
  for (std::size_t i = 0; i < base.size(); ++i) diff = std::max(diff, std::abs(base[i] - cut[i]));
  EXPECT_GT(diff, 1e-8);
  EXPECT_EQ(base, m.scores(pointers(rs)));
  auto sal = channel_saliency(m, rs);
  for (double s : sal) EXPECT_GT(s, 0.0);
}

TEST(Interactions, MatrixIsSymmetricAndMatchesCapturedAttention) {
  std::vector<SampleRecord> rs;
  Rng rng(8);
  // Tokens 1..4 in every sample, plus noise tokens seen once.
  for (int s = 0; s < 12; ++s) {
    std::vector<VariantToken> toks;
    for (long long p = 1; p <= 4; ++p) toks.push_back(make_token(p, "A", "G"));
    toks.push_back(make_token(100 + s, "A", "G"));
    std::vector<FeatureRow> f(toks.size());
    for (auto& row : f)
      for (auto& x : row) x = rng.uniform();
    rs.push_back(assemble_sample("s" + std::to_string(s), toks, f, s % 2, "RIF"));
  }
  VampNet m(small_config(true, 5), build_static_vocab(rs), fit_normalizer(rs), 4);
  auto im = extract_interactions(m, rs, 10);
  ASSERT_EQ(im.size(), 4u);
  EXPECT_EQ(im.variants[0], "1_A>G");
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(im.at(i, i), 0.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(im.at(i, j), im.at(j, i));
  }
  // Independent recomputation of one entry, one sample at a time.
  double expect = 0;
  Rng unused(0);
  for (const auto& r : rs) {
    AttentionCapture cap;
    auto b = m.prepare({&r});
    m.path1().forward(b, false, unused, &cap);
    const auto& A = cap.per_layer[0];
    double rowsum = 0;
    for (std::size_t k = 0; k < b.length; ++k) rowsum += A[0 * b.length + k];
    EXPECT_NEAR(rowsum, 1.0, 1e-10);
    expect += (A[0 * b.length + 2] + A[2 * b.length + 0]) / 2;
  }
  EXPECT_NEAR(im.at(0, 2), expect / 12, 1e-12);
  EXPECT_EQ(extract_interactions(m, rs, 13).size(), 0u);
  EXPECT_THROW(extract_interactions(m, rs, 10, 2), ConfigError);
  std::ostringstream out;
  write_interactions(out, im);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "variant\t1_A>G\t2_A>G\t3_A>G\t4_A>G");
}

TEST(Hubs, RankByWeightedDegreeWithLexicographicTies) {
  auto m = matrix_from({"a", "b", "c", "d"}, {0, 1, 1, 0,  //
                                              1, 0, 0, 0,  //
                                              1, 0, 0, 1,  //
                                              0, 0, 1, 0});
  auto hubs = detect_hubs(m, 3);
  ASSERT_EQ(hubs.size(), 3u);
  EXPECT_EQ(hubs[0].variant, "a");
  EXPECT_EQ(hubs[1].variant, "c");
  EXPECT_EQ(hubs[2].variant, "b");
  EXPECT_EQ(hubs[2].degree, 1.0);
}

TEST(Communities, PercentileOfNonzeroWeights) {
  auto m = matrix_from({"a", "b", "c"}, {0, 1, 2,  //
                                         1, 0, 0,  //
                                         2, 0, 0});
  EXPECT_DOUBLE_EQ(nonzero_weight_percentile(m, 0.75), 1.75);
  auto g = threshold_graph(m, 1.75);
  EXPECT_EQ(g.at(0, 1), 0.0);
  EXPECT_EQ(g.at(0, 2), 2.0);
  EXPECT_EQ(nonzero_weight_percentile(matrix_from({"a"}, {0})), 0.0);
}

TEST(Communities, ModularityMatchesCommunityOracle) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    auto g = random_graph(rng, 2 + rng.index(7));
    std::vector<std::size_t> comm(g.n);
    for (auto& c : comm) c = rng.index(3);
    EXPECT_NEAR(modularity(g, comm), oracle_q(g, comm), 1e-12);
    const double q = modularity(g, comm);
    EXPECT_GE(q, -0.5);
    EXPECT_LE(q, 1.0);
  }
}

TEST(Communities, GreedyMatchesExhaustiveOnSmallGraphs) {
  Rng rng(10);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    auto g = random_graph(rng, 2 + rng.index(7));
    auto p = greedy_modularity(g);
    EXPECT_NEAR(p.q, oracle_q(g, p.community), 1e-12);
    const double best = exhaustive_max_q(g);
    if (std::abs(p.q - best) > 1e-9) {
      ++mismatches;
      ADD_FAILURE() << "graph " << t << ": greedy Q " << p.q << ", exhaustive Q " << best;
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Communities, TwoCliquesSplitAndEmptyGraph) {
  WeightedGraph g{6, std::vector<double>(36, 0.0)};
  auto link = [&](std::size_t i, std::size_t j) { g.w[i * 6 + j] = g.w[j * 6 + i] = 1.0; };
  link(0, 1), link(1, 2), link(0, 2), link(3, 4), link(4, 5), link(3, 5), link(2, 3);
  auto p = greedy_modularity(g);
  EXPECT_EQ(p.community, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_NEAR(p.q, 5.0 / 14.0, 1e-12);
  auto empty = greedy_modularity(WeightedGraph{3, std::vector<double>(9, 0.0)});
  EXPECT_EQ(empty.q, 0.0);
  EXPECT_EQ(empty.community, (std::vector<std::size_t>{0, 1, 2}));
  std::ostringstream out;
  write_communities(out, {"a", "b", "c", "d", "e", "f"}, p);
  EXPECT_EQ(out.str(), "variant,community_id\na,0\nb,0\nc,0\nd,1\ne,1\nf,1\nQ=" + format_double(p.q) + "\n");
}
