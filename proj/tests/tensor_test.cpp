#include <gtest/gtest.h>

#include <cmath>

#include "grad_check.hpp"
#include "vampnet/ops.hpp"

using namespace vampnet;
using vampnet::testing::grad_check;
using vampnet::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
  ASSERT_EQ(t.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t[i], expected[i], tol) << "index " << i;
}

constexpr double kGradTol = 1e-4;

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  expect_values(matmul(eye, m), {1, 2, 3, 4});
}

TEST(Matmul, RowTimesColumn) { expect_values(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})), {11}); }

TEST(Matmul, GradientOfSumMatchesFiniteDifference) {
  Tensor a({1, 2}, {1, 1}, true);
  Tensor b({2, 1}, {2, 5});
  backward(sum(matmul(a, b)));
  expect_values(Tensor({2}, {a.grad()[0], a.grad()[1]}), {2, 5}, 1e-12);
  auto r = grad_check([&] { return sum(matmul(a, b)); }, {a}, 1e-6);
  EXPECT_LE(r.max_rel_error, kGradTol);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected a dimension error";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, BatchedAndSharedOperandsGradCheck) {
  Rng rng(1);
  auto a = random_tensor({3, 2, 4}, rng);
  auto b = random_tensor({3, 4, 5}, rng);
  auto w = random_tensor({4, 5}, rng);
  EXPECT_LE(grad_check([&] { return sum(mul(matmul(a, b), matmul(a, w))); }, {a, b, w}).max_rel_error, kGradTol);
}

TEST(Softmax, Examples) {
  expect_values(softmax_rows(Tensor({2}, {0, 0})), {0.5, 0.5});
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  expect_values(softmax_rows(Tensor({2}, {1, 2})), {e1 / (e1 + e2), e2 / (e1 + e2)});
  EXPECT_NEAR(softmax_rows(Tensor({2}, {1, 2}))[0], 0.26894, 1e-5);
  expect_values(softmax_rows(Tensor({2}, {1000, 1000})), {0.5, 0.5});
}

TEST(Softmax, RejectsNonFiniteInput) {
  EXPECT_THROW(softmax_rows(Tensor({2}, {NAN, 0})), NumericError);
  EXPECT_THROW(softmax_rows(Tensor({2}, {INFINITY, 0})), NumericError);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng.index(5), n = 1 + rng.index(9);
    auto x = random_tensor({rows, n}, rng, 10.0, false);
    auto y = softmax_rows(x);
    std::vector<double> shifted(x.values());
    for (std::size_t r = 0; r < rows; ++r) {
      const double c = rng.uniform(-50, 50);
      for (std::size_t j = 0; j < n; ++j) shifted[r * n + j] += c;
    }
    auto ys = softmax_rows(Tensor({rows, n}, shifted));
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        s += y[r * n + j];
        EXPECT_GE(y[r * n + j], 0.0);
        EXPECT_NEAR(y[r * n + j], ys[r * n + j], 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, MaskZeroesPaddedKeysAndFullyMaskedRows) {
  Tensor x({2, 3}, {0.3, -1.2, 2.0, 0.1, 0.2, 0.3}, true);
  std::vector<double> mask{0, 0, -kMaskLarge, -kMaskLarge, -kMaskLarge, -kMaskLarge};
  auto y = softmax_rows(x, mask);
  EXPECT_EQ(y[2], 0.0);
  EXPECT_NEAR(y[0] + y[1], 1.0, 1e-12);
  for (int j = 3; j < 6; ++j) EXPECT_EQ(y[j], 0.0);
  auto r = grad_check([&] { return sum(mul(softmax_rows(x, mask), Tensor({2, 3}, {1, 2, 3, 4, 5, 6}))); }, {x});
  EXPECT_LE(r.max_rel_error, kGradTol);
}

TEST(Conv1d, Examples) {
  expect_values(conv1d(Tensor({1, 3}, {1, 2, 3}), Tensor({1, 1, 1}, {1}), 1, 0), {1, 2, 3});
  expect_values(conv1d(Tensor({1, 4}, {1, 2, 3, 4}), Tensor({1, 1, 2}, {1, 1}), 1, 0), {3, 5, 7});
  expect_values(conv1d(Tensor({1, 3}, {1, 2, 3}), Tensor({1, 1, 3}, {0, 1, 0}), 1, 1), {1, 2, 3});
}

TEST(Conv1d, OutputLengthFormulaAndErrors) {
  auto y = conv1d(Tensor::zeros({2, 7}), Tensor::zeros({3, 2, 3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 4}));  // floor((7+2-3)/2)+1
  EXPECT_THROW(conv1d(Tensor::zeros({1, 2}), Tensor::zeros({1, 1, 5}), 1, 1), DimensionError);
  EXPECT_THROW(conv1d(Tensor::zeros({2, 5}), Tensor::zeros({1, 3, 3}), 1, 1), DimensionError);
}

TEST(Conv1d, GradCheckWithStridePaddingAndBias) {
  Rng rng(3);
  auto x = random_tensor({2, 3, 7}, rng);
  auto w = random_tensor({4, 3, 3}, rng);
  auto b = random_tensor({4}, rng);
  auto f = [&] { return sum(mul(conv1d(x, w, b, 2, 1, 2), conv1d(x, w, b, 2, 1, 2))); };
  EXPECT_LE(grad_check(f, {x, w, b}).max_rel_error, kGradTol);
}

TEST(Elementwise, DegenerateCases) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5);
  EXPECT_EQ(gelu(Tensor::scalar(0)).item(), 0.0);
  Rng rng(0);
  Tensor x({3}, {1, -2, 3});
  EXPECT_EQ(dropout(x, 0.0, true, rng).values(), x.values());
  EXPECT_EQ(dropout(x, 0.7, false, rng).values(), x.values());
  EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ConfigError);
}

TEST(Elementwise, SigmoidStaysInOpenUnitInterval) {
  for (double v : {-30.0, -5.0, -0.1, 0.1, 5.0, 30.0}) {
    double s = sigmoid(Tensor::scalar(v)).item();
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Elementwise, DropoutRescalesSurvivors) {
  Rng rng(11);
  auto x = Tensor::full({20000}, 1.0);
  auto y = dropout(x, 0.25, true, rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0)
      ++zeros;
    else
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 20000.0, 0.25, 0.02);
}

TEST(Elementwise, GradChecks) {
  Rng rng(5);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4}, rng);
  // keep relu inputs away from the kink
  std::vector<double> rv{0.5, -0.7, 1.3, -2.0, 0.9, 0.25};
  Tensor r({6}, rv, true);
  EXPECT_LE(grad_check([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b}).max_rel_error, kGradTol);
  EXPECT_LE(grad_check([&] { return sum(mul(sigmoid(a), gelu(a))); }, {a}).max_rel_error, kGradTol);
  EXPECT_LE(grad_check([&] { return sum(mul(relu(r), r)); }, {r}).max_rel_error, kGradTol);
  EXPECT_LE(grad_check([&] { return sum(mul(mean_over_axis(a, 0), mean_over_axis(a, 0))); }, {a}).max_rel_error,
            kGradTol);
  EXPECT_LE(grad_check([&] { return sum(mul(scale(add_scalar(a, 2.0), -3.0), a)); }, {a}).max_rel_error, kGradTol);
}

TEST(Elementwise, DropoutGradientUsesSameMask) {
  Rng rng(9);
  auto x = random_tensor({50}, rng);
  Rng r1(42);
  auto y = dropout(x, 0.3, true, r1);
  backward(sum(y));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], y[i] == 0.0 ? 0.0 : 1.0 / 0.7);
}

TEST(ShapeOps, GradChecks) {
  Rng rng(8);
  auto a = random_tensor({2, 3, 4}, rng);
  auto c = random_tensor({2, 3, 2}, rng);
  auto w = random_tensor({2, 3, 6}, rng, 1.0, false);
  auto f = [&] {
    auto cat = concat_last({slice_last(a, 1, 3), c, slice_last(a, 0, 1)});
    return sum(mul(mul(cat, w), transpose(transpose(cat))));
  };
  EXPECT_LE(grad_check(f, {a, c}).max_rel_error, kGradTol);
  auto g = [&] { return sum(mul(reshape(a, {6, 4}), reshape(a, {6, 4}))); };
  EXPECT_LE(grad_check(g, {a}).max_rel_error, kGradTol);
}

TEST(Masking, MaskedMeanAndMaskAxis) {
  Tensor x({2, 3, 2}, {1, 2, 3, 4, 100, 100, 5, 6, 7, 8, 9, 10}, true);
  std::vector<std::uint8_t> valid{1, 1, 0, 0, 0, 0};
  auto m = masked_mean(x, valid);
  expect_values(m, {2, 3, 0, 0});
  auto r = grad_check([&] { return sum(mul(masked_mean(x, valid), masked_mean(x, valid))); }, {x});
  EXPECT_LE(r.max_rel_error, kGradTol);
  auto z = mask_axis(x, valid, 1);
  expect_values(z, {1, 2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 0});
  std::vector<std::uint8_t> cols{1, 0, 0, 1};
  expect_values(mask_axis(x, cols, 2), {1, 0, 3, 0, 100, 0, 0, 6, 0, 8, 0, 10});
}

TEST(LayerNorm, NormalisesAndGradChecks) {
  Rng rng(4);
  auto x = random_tensor({3, 5}, rng, 3.0);
  auto g = random_tensor({5}, rng);
  auto b = random_tensor({5}, rng);
  auto ones = Tensor::full({5}, 1.0), zeros = Tensor::zeros({5});
  auto y = layer_norm(x, ones, zeros);
  for (int r = 0; r < 3; ++r) {
    double mu = 0, var = 0;
    for (int k = 0; k < 5; ++k) mu += y[r * 5 + k];
    mu /= 5;
    for (int k = 0; k < 5; ++k) var += (y[r * 5 + k] - mu) * (y[r * 5 + k] - mu);
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var / 5, 1.0, 1e-4);
  }
  auto w = random_tensor({3, 5}, rng, 1.0, false);
  EXPECT_LE(grad_check([&] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b}).max_rel_error, kGradTol);
}

TEST(Pooling, MaxPoolAndGrad) {
  Tensor x({1, 6}, {1, 5, 2, 0, -1, 3}, true);
  expect_values(max_pool1d(x, 3), {5, 3});
  EXPECT_THROW(max_pool1d(Tensor::zeros({1, 2}), 3), DimensionError);
  auto w = Tensor({1, 2}, {2, -1});
  EXPECT_LE(grad_check([&] { return sum(mul(max_pool1d(x, 3), w)); }, {x}).max_rel_error, kGradTol);
}

TEST(Embedding, BagLookupPadRowAndGradient) {
  Tensor table({4, 2}, {0, 0, 1, 2, 3, 4, 5, 6}, true);
  std::vector<std::vector<int>> bags{{1}, {1}, {2, 3}, {}};
  auto e = embedding_bag(table, bags, 2, 2);
  expect_values(e, {1, 2, 1, 2, 4, 5, 0, 0});
  auto w = Tensor({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  backward(sum(mul(e, w)));
  // pad row untouched; row 1 used twice; rows 2,3 half each
  expect_values(Tensor({8}, std::vector<double>(table.grad().begin(), table.grad().end())),
                {0, 0, 4, 6, 2.5, 3, 2.5, 3});
  EXPECT_THROW(embedding_bag(table, {{7}}, 1, 1), ContractError);
}

TEST(Loss, WeightedCrossEntropy) {
  Tensor logits({1, 2}, {0, 0});
  std::vector<int> y{0};
  std::vector<double> eq{1, 1}, w{2, 1};
  EXPECT_NEAR(weighted_cross_entropy(logits, y, eq).item(), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(weighted_cross_entropy(logits, y, w).item(), 2 * weighted_cross_entropy(logits, y, eq).item());
  std::vector<double> bad{0, 1};
  EXPECT_THROW(weighted_cross_entropy(logits, y, bad), ConfigError);
  Rng rng(2);
  auto l = random_tensor({4, 2}, rng);
  std::vector<int> ys{0, 1, 1, 0};
  std::vector<double> cw{0.7, 1.9};
  EXPECT_LE(grad_check([&] { return weighted_cross_entropy(l, ys, cw); }, {l}).max_rel_error, kGradTol);
}

TEST(Backward, Examples) {
  Tensor x({3}, {1, 2, 3}, true);
  backward(sum(x));
  expect_values(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end())), {1, 1, 1});
  Tensor y({2}, {1, 2}, true);
  backward(sum(mul(y, y)));
  EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(y.grad()[1], 4.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x({3}, {1, 2, 3}, true);
  EXPECT_THROW(backward(mul(x, x)), ContractError);
}

TEST(Backward, UnusedLeafStillGetsZeroGradAndGraphIsReleased) {
  Tensor x({2}, {1, 2}, true), y({2}, {3, 4}, true);
  auto loss = sum(add(x, mul(y, Tensor::zeros({2}))));
  backward(loss);
  ASSERT_TRUE(y.has_grad());
  EXPECT_EQ(y.grad()[0], 0.0);
  EXPECT_FALSE(loss.requires_grad());
}

TEST(Backward, TraceIsTopological) {
  Tensor x({2}, {1, 2}, true);
  auto a = mul(x, x);
  auto b = add(a, x);
  auto loss = sum(mul(b, a));
  ComputationTrace trace(loss);
  const auto& order = trace.order();
  std::vector<const detail::Node*> seen;
  for (auto* n : order) {
    for (auto& in : n->inputs)
      if (in->requires_grad) EXPECT_NE(std::find(seen.begin(), seen.end(), in.get()), seen.end());
    EXPECT_EQ(std::find(seen.begin(), seen.end(), n), seen.end()) << "node visited twice";
    seen.push_back(n);
  }
  EXPECT_EQ(order.back(), loss.id());
}

TEST(Backward, CompositeAgainstFiniteDifferences) {
  Rng rng(12);
  auto x = random_tensor({2, 3, 4}, rng);
  auto w = random_tensor({4, 4}, rng);
  auto g = random_tensor({4}, rng);
  auto b = random_tensor({4}, rng);
  auto f = [&] {
    auto h = layer_norm(gelu(matmul(x, w)), g, b);
    auto att = softmax_rows(matmul(h, transpose(h)));
    return mean(sigmoid(matmul(att, h)));
  };
  EXPECT_LE(grad_check(f, {x, w, g, b}).max_rel_error, kGradTol);
}

TEST(Determinism, SameSeedSameBits) {
  auto run = [] {
    Rng rng(99);
    auto x = random_tensor({4, 8}, rng);
    return dropout(gelu(x), 0.3, true, rng).values();
  };
  EXPECT_EQ(run(), run());
}
