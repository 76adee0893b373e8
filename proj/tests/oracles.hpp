#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vampnet/explain.hpp"

namespace vampnet::testing {

using i128 = __int128;

inline i128 gcd128(i128 a, i128 b) {
  if (a < 0) a = -a;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

/// Pearson chi-squared of a 2x2 table as the sum over the four cells of
/// (O - E)^2 / E in exact rational arithmetic, rounded once at the end.
inline double oracle_chi2(long long a, long long b, long long c, long long d) {
  const long long n = a + b + c + d;
  const long long rows[2] = {a + b, c + d}, cols[2] = {a + c, b + d};
  const long long obs[2][2] = {{a, b}, {c, d}};
  if (rows[0] == 0 || rows[1] == 0 || cols[0] == 0 || cols[1] == 0) return 0.0;
  // (O - R C / n)^2 / (R C / n) = (n O - R C)^2 / (n R C)
  i128 num = 0, den = 1;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const i128 dev = static_cast<i128>(n) * obs[i][j] - static_cast<i128>(rows[i]) * cols[j];
      const i128 tn = dev * dev, td = static_cast<i128>(n) * rows[i] * cols[j];
      num = num * td + tn * den;
      den *= td;
      const i128 g = gcd128(num, den);
      if (g > 1) {
        num /= g;
        den /= g;
      }
    }
  const i128 limit = static_cast<i128>(1) << 53;
  if (num >= limit || den >= limit) throw std::overflow_error("oracle_chi2: table too large for exact rounding");
  return static_cast<double>(static_cast<long long>(num)) / static_cast<double>(static_cast<long long>(den));
}

/// AUC as the fraction of (positive, negative) pairs ordered correctly,
/// ties counting one half.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

/// Q from the community-level definition: sum over communities of
/// internal weight share minus squared degree share.
inline double oracle_q(const WeightedGraph& g, const std::vector<std::size_t>& comm) {
  double m = 0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = i + 1; j < g.n; ++j) m += g.at(i, j);
  if (m == 0) return 0;
  std::size_t k = 0;
  for (auto c : comm) k = std::max(k, c + 1);
  double q = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double internal = 0, degree = 0;
    for (std::size_t i = 0; i < g.n; ++i) {
      if (comm[i] != c) continue;
      for (std::size_t j = 0; j < g.n; ++j) {
        degree += g.at(i, j);
        if (j > i && comm[j] == c) internal += g.at(i, j);
      }
    }
    q += internal / m - (degree / (2 * m)) * (degree / (2 * m));
  }
  return q;
}

/// Max Q over every set partition (restricted growth strings).
inline double exhaustive_max_q(const WeightedGraph& g) {
  std::vector<std::size_t> a(g.n, 0);
  double best = -1;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == g.n) {
      best = std::max(best, oracle_q(g, a));
      return;
    }
    for (std::size_t c = 0; c <= used && c < g.n; ++c) {
      a[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  return best;
}

inline WeightedGraph random_graph(Rng& rng, std::size_t n) {
  WeightedGraph g{n, std::vector<double>(n * n, 0.0)};
  const double density = rng.uniform(0.2, 0.7);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(density)) g.w[i * n + j] = g.w[j * n + i] = rng.uniform(0.1, 1.0);
  return g;
}

}  // namespace vampnet::testing
