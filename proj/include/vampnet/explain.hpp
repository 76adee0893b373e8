#pragma once

// Interpretability: Integrated Gradients over Path-1 embeddings, quality
// channel ablation and saliency over Path-2 inputs, attention interaction
// networks, hub ranking and greedy modularity communities.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "vampnet/cohort_io.hpp"
#include "vampnet/log.hpp"
#include "vampnet/metrics.hpp"
#include "vampnet/model.hpp"
#include "vampnet/rng.hpp"

namespace vampnet {

inline constexpr std::size_t kDefaultIgSteps = 20;

// ------------------------------------------------------------ integrated gradients

/// Riemann-right IG for a scalar function of a tensor. `f` receives a batch
/// [steps x numel(x)] of interpolation points and must return one value per
/// row. attr_i = (x_i - b_i) * mean_k dF/dx_i at b + (k/steps)(x - b).
inline std::vector<double> integrated_gradients(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                                const Tensor& baseline, std::size_t steps) {
  if (steps < 1) throw ConfigError("integrated gradients need steps >= 1");
  if (x.shape() != baseline.shape()) throw DimensionError("IG baseline shape differs from the input");
  const std::size_t n = x.size();
  std::vector<double> path(steps * n);
  for (std::size_t k = 0; k < steps; ++k) {
    const double a = static_cast<double>(k + 1) / static_cast<double>(steps);
    for (std::size_t i = 0; i < n; ++i) path[k * n + i] = baseline[i] + a * (x[i] - baseline[i]);
  }
  Tensor batch({steps, n}, std::move(path), true);
  Tensor out = f(batch);
  if (out.size() != steps) throw DimensionError("IG target must return one value per path point");
  backward(sum(out));
  auto g = batch.grad();
  std::vector<double> attr(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (std::size_t k = 0; k < steps; ++k) acc += g[k * n + i];
    attr[i] = (x[i] - baseline[i]) * acc / static_cast<double>(steps);
  }
  return attr;
}

/// `n` stacked copies of a single-sample batch.
inline PaddedBatch repeat_batch(const PaddedBatch& b, std::size_t n) {
  if (b.batch != 1) throw ContractError("repeat_batch expects a single-sample batch");
  PaddedBatch r;
  r.batch = n;
  r.length = b.length;
  std::vector<double> feats;
  feats.reserve(n * b.features.size());
  for (std::size_t i = 0; i < n; ++i) {
    r.token_ids.insert(r.token_ids.end(), b.token_ids.begin(), b.token_ids.end());
    r.pieces.insert(r.pieces.end(), b.pieces.begin(), b.pieces.end());
    r.valid_mask.insert(r.valid_mask.end(), b.valid_mask.begin(), b.valid_mask.end());
    feats.insert(feats.end(), b.features.values().begin(), b.features.values().end());
    r.labels.push_back(b.labels[0]);
    r.lengths.push_back(b.lengths[0]);
  }
  r.features = Tensor({n, b.length, kNumChannels}, std::move(feats));
  return r;
}

/// Single-sample batch. A masked model is padding-independent, so its batch
/// is trimmed to the sample's own length.
inline PaddedBatch single_batch(const VampNet& model, const SampleRecord& r) {
  PaddedBatch b = model.prepare({&r});
  const std::size_t len = std::max<std::size_t>(1, b.lengths[0]);
  if (!model.config().sab.masked || len == b.length) return b;
  b.length = len;
  b.token_ids.resize(len);
  b.pieces.resize(len);
  b.valid_mask.resize(len);
  std::vector<double> f(b.features.values().begin(), b.features.values().begin() + len * kNumChannels);
  b.features = Tensor({1, len, kNumChannels}, std::move(f));
  return b;
}

struct SampleAttribution {
  std::string sample_id;
  std::vector<std::string> tokens;  // tokens that reached the model (truncation applied)
  std::vector<double> scores;
  double f_input = 0;     // resistant logit at the input
  double f_baseline = 0;  // resistant logit at the zero-embedding baseline
};

/// Path points evaluated per forward pass in variant_attributions.
inline constexpr std::size_t kIgChunk = 64;

/// Per-variant IG on token embeddings with a zero baseline and the resistant
/// logit as target; each token's score sums its embedding dimensions.
inline SampleAttribution variant_attributions(const VampNet& model, const SampleRecord& r,
                                              std::size_t steps = kDefaultIgSteps) {
  if (steps < 1) throw ConfigError("integrated gradients need steps >= 1");
  PaddedBatch one = single_batch(model, r);
  const std::size_t L = one.length, d = model.config().sab.d_model, n = one.lengths[0];
  Tensor e;
  {
    NoGradGuard ng;
    e = model.embed(one).detach();
  }
  SampleAttribution out;
  out.sample_id = r.sample_id;
  std::vector<double> acc(n, 0.0);
  Rng unused(0);
  // Point k of the path is (k/steps) e; k = 0 is the baseline itself.
  for (std::size_t first = 0; first <= steps; first += kIgChunk) {
    const std::size_t rows = std::min(kIgChunk, steps + 1 - first);
    PaddedBatch many = repeat_batch(one, rows);
    std::vector<double> path(rows * L * d);
    for (std::size_t k = 0; k < rows; ++k) {
      const double a = static_cast<double>(first + k) / static_cast<double>(steps);
      for (std::size_t i = 0; i < L * d; ++i) path[k * L * d + i] = a * e[i];
    }
    Tensor X({rows, L, d}, std::move(path), true);
    Tensor target = slice_last(model.forward_from_embeddings(X, many, false, unused), 1, 1);
    if (first == 0) out.f_baseline = target[0];
    if (first + rows == steps + 1) out.f_input = target[rows - 1];
    backward(sum(target));
    auto g = X.grad();
    for (std::size_t l = 0; l < n; ++l)
      for (std::size_t k = first == 0 ? 1 : 0; k < rows; ++k)
        for (std::size_t j = 0; j < d; ++j) acc[l] += e[l * d + j] * g[(k * L + l) * d + j];
  }
  for (std::size_t l = 0; l < n; ++l) {
    out.tokens.push_back(r.tokens[l].canonical());
    out.scores.push_back(acc[l] / static_cast<double>(steps));
  }
  return out;
}

struct AttributionEntry {
  std::string variant;
  double mean_score = 0;
  std::size_t n_samples = 0;
};

/// Mean score per variant over the samples containing it, ranked by |mean|
/// descending (ties by token).
inline std::vector<AttributionEntry> aggregate_attributions(const std::vector<SampleAttribution>& per_sample) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& s : per_sample)
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      auto& [sum_, n] = acc[s.tokens[i]];
      sum_ += s.scores[i];
      ++n;
    }
  std::vector<AttributionEntry> out;
  for (const auto& [tok, v] : acc) out.push_back({tok, v.first / static_cast<double>(v.second), v.second});
  std::stable_sort(out.begin(), out.end(), [](const AttributionEntry& a, const AttributionEntry& b) {
    return std::abs(a.mean_score) > std::abs(b.mean_score);
  });
  return out;
}

inline void write_attributions(std::ostream& out, const std::vector<AttributionEntry>& report) {
  out << "variant,mean_score,abs_rank,n_samples\n";
  for (std::size_t i = 0; i < report.size(); ++i)
    out << report[i].variant << ',' << format_double(report[i].mean_score) << ',' << i + 1 << ','
        << report[i].n_samples << '\n';
}

// ------------------------------------------------------------ channel ablation

/// Eval-mode scores with the listed channels of the normalised features set
/// to zero.
inline std::vector<double> scores_with_channels_zeroed(const VampNet& model, const std::vector<SampleRecord>& records,
                                                       const std::vector<Channel>& channels, std::size_t chunk = 128) {
  NoGradGuard ng;
  Rng unused(0);
  std::vector<double> scores;
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    std::vector<const SampleRecord*> part;
    for (std::size_t i = start; i < std::min(records.size(), start + chunk); ++i) part.push_back(&records[i]);
    PaddedBatch b = model.prepare(part);
    auto f = b.features.mutable_data();
    for (std::size_t p = 0; p < b.batch * b.length; ++p)
      for (Channel c : channels) f[p * kNumChannels + static_cast<std::size_t>(c)] = 0.0;
    for (double s : resistant_scores(model.forward(b, false, unused))) scores.push_back(s);
  }
  return scores;
}

struct AblationResult {
  std::string channel;
  double auc_drop = 0;
  double f1_drop = 0;
};

/// Importance of each channel as the AUC (and F1) lost when it alone is
/// zeroed, in channel order.
inline std::vector<AblationResult> ablate_channels(const VampNet& model, const std::vector<SampleRecord>& records) {
  std::vector<int> y;
  for (const auto& r : records) y.push_back(r.label);
  const auto base = compute_metrics(scores_with_channels_zeroed(model, records, {}), y);
  std::vector<AblationResult> out;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const auto m = compute_metrics(scores_with_channels_zeroed(model, records, {static_cast<Channel>(c)}), y);
    out.push_back({std::string(kChannelNames[c]), base.auc - m.auc, base.f1 - m.f1});
  }
  return out;
}

/// Diagnostic: every channel zeroed at once.
inline AblationResult ablate_all_channels(const VampNet& model, const std::vector<SampleRecord>& records) {
  std::vector<int> y;
  for (const auto& r : records) y.push_back(r.label);
  std::vector<Channel> all;
  for (std::size_t c = 0; c < kNumChannels; ++c) all.push_back(static_cast<Channel>(c));
  const auto base = compute_metrics(scores_with_channels_zeroed(model, records, {}), y);
  const auto m = compute_metrics(scores_with_channels_zeroed(model, records, all), y);
  return {"ALL", base.auc - m.auc, base.f1 - m.f1};
}

inline AblationResult ablate_channel(const VampNet& model, const std::vector<SampleRecord>& records,
                                     const std::string& channel) {
  const Channel ch = channel_from_name(channel);
  std::vector<int> y;
  for (const auto& r : records) y.push_back(r.label);
  const auto base = compute_metrics(scores_with_channels_zeroed(model, records, {}), y);
  const auto m = compute_metrics(scores_with_channels_zeroed(model, records, {ch}), y);
  return {channel, base.auc - m.auc, base.f1 - m.f1};
}

inline void write_ablation(std::ostream& out, const std::vector<AblationResult>& rows) {
  out << "channel,auc_drop,f1_drop\n";
  for (const auto& r : rows) out << r.channel << ',' << format_double(r.auc_drop) << ',' << format_double(r.f1_drop) << '\n';
}

/// Diagnostic: mean |d resistant-logit / d feature| per channel over valid
/// positions.
inline std::array<double, kNumChannels> channel_saliency(const VampNet& model, const std::vector<SampleRecord>& records,
                                                         std::size_t chunk = 128) {
  std::array<double, kNumChannels> acc{};
  std::size_t count = 0;
  Rng unused(0);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    std::vector<const SampleRecord*> part;
    for (std::size_t i = start; i < std::min(records.size(), start + chunk); ++i) part.push_back(&records[i]);
    PaddedBatch b = model.prepare(part);
    b.features.set_requires_grad(true);
    backward(sum(slice_last(model.forward(b, false, unused), 1, 1)));
    auto g = b.features.grad();
    if (g.empty()) continue;
    for (std::size_t p = 0; p < b.batch * b.length; ++p) {
      if (!b.valid_mask[p]) continue;
      ++count;
      for (std::size_t c = 0; c < kNumChannels; ++c) acc[c] += std::abs(g[p * kNumChannels + c]);
    }
  }
  if (count)
    for (auto& v : acc) v /= static_cast<double>(count);
  return acc;
}

// ------------------------------------------------------------ interactions

/// Symmetric aggregated attention between variants.
struct InteractionMatrix {
  std::vector<std::string> variants;
  std::vector<double> weight;       // V*V, zero diagonal
  std::vector<std::size_t> counts;  // co-occurrence counts, V*V

  std::size_t size() const { return variants.size(); }
  double at(std::size_t i, std::size_t j) const { return weight[i * variants.size() + j]; }
};

inline constexpr std::size_t kDefaultMinCooccurrence = 10;

/// Per sample, the head-averaged attention A of the chosen SAB layer gives
/// each co-occurring valid pair the strength (A[u,v] + A[v,u]) / 2; strengths
/// are averaged over the samples containing both variants and pairs seen in
/// fewer than `min_cooccurrence` samples are dropped.
inline InteractionMatrix extract_interactions(const VampNet& model, const std::vector<SampleRecord>& records,
                                              std::size_t min_cooccurrence = kDefaultMinCooccurrence,
                                              std::size_t layer = 0, std::size_t chunk = 64) {
  if (layer >= model.config().sab.num_layers) throw ConfigError("attention layer index out of range");
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> acc;
  NoGradGuard ng;
  Rng unused(0);
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    std::vector<const SampleRecord*> part;
    for (std::size_t i = start; i < std::min(records.size(), start + chunk); ++i) part.push_back(&records[i]);
    PaddedBatch b = model.prepare(part);
    AttentionCapture cap;
    model.path1().forward(b, false, unused, &cap);
    const auto& A = cap.per_layer[layer];
    const std::size_t L = b.length;
    for (std::size_t s = 0; s < b.batch; ++s) {
      const std::size_t n = b.lengths[s];
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v) {
          std::string tu = part[s]->tokens[u].canonical(), tv = part[s]->tokens[v].canonical();
          if (tu == tv) continue;
          const double w = (A[(s * L + u) * L + v] + A[(s * L + v) * L + u]) / 2.0;
          auto key = tu < tv ? std::make_pair(tu, tv) : std::make_pair(tv, tu);
          auto& [sum_, cnt] = acc[key];
          sum_ += w;
          ++cnt;
        }
    }
  }
  std::map<std::string, std::size_t> index;
  for (const auto& [key, v] : acc)
    if (v.second >= min_cooccurrence) {
      index.emplace(key.first, 0);
      index.emplace(key.second, 0);
    }
  InteractionMatrix m;
  for (auto& [tok, i] : index) {
    i = m.variants.size();
    m.variants.push_back(tok);
  }
  const std::size_t V = m.variants.size();
  m.weight.assign(V * V, 0.0);
  m.counts.assign(V * V, 0);
  for (const auto& [key, v] : acc) {
    if (v.second < min_cooccurrence) continue;
    const std::size_t i = index[key.first], j = index[key.second];
    const double w = v.first / static_cast<double>(v.second);
    m.weight[i * V + j] = m.weight[j * V + i] = w;
    m.counts[i * V + j] = m.counts[j * V + i] = v.second;
  }
  if (V == 0)
    log_warning("no variant pair co-occurs in at least " + std::to_string(min_cooccurrence) +
                " samples; interaction matrix is empty");
  return m;
}

inline void write_interactions(std::ostream& out, const InteractionMatrix& m) {
  out << "variant";
  for (const auto& v : m.variants) out << '\t' << v;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.variants[i];
    for (std::size_t j = 0; j < m.size(); ++j) out << '\t' << format_double(m.at(i, j));
    out << '\n';
  }
}

struct Hub {
  std::string variant;
  double degree = 0;
};

/// Variants ranked by weighted degree (row sum without the diagonal); equal
/// degrees are ordered by token.
inline std::vector<Hub> detect_hubs(const InteractionMatrix& m, std::size_t top_k) {
  std::vector<Hub> hubs;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < m.size(); ++j)
      if (j != i) d += m.at(i, j);
    hubs.push_back({m.variants[i], d});
  }
  std::sort(hubs.begin(), hubs.end(), [](const Hub& a, const Hub& b) {
    return a.degree != b.degree ? a.degree > b.degree : a.variant < b.variant;
  });
  if (hubs.size() > top_k) hubs.resize(top_k);
  return hubs;
}

// ------------------------------------------------------------ communities

/// Weighted undirected graph as a dense symmetric matrix with zero diagonal.
struct WeightedGraph {
  std::size_t n = 0;
  std::vector<double> w;
  double at(std::size_t i, std::size_t j) const { return w[i * n + j]; }
};

/// Edges of `m` whose weight is at least `threshold`.
inline WeightedGraph threshold_graph(const InteractionMatrix& m, double threshold) {
  WeightedGraph g{m.size(), std::vector<double>(m.size() * m.size(), 0.0)};
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j)
      if (i != j && m.at(i, j) > 0 && m.at(i, j) >= threshold) g.w[i * g.n + j] = m.at(i, j);
  return g;
}

/// Percentile (linear interpolation between order statistics) of the
/// nonzero off-diagonal weights; 0 when there are none.
inline double nonzero_weight_percentile(const InteractionMatrix& m, double q = 0.75) {
  std::vector<double> v;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j)
      if (m.at(i, j) > 0) v.push_back(m.at(i, j));
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Weighted Newman modularity of an assignment; 0 for a graph without edges.
inline double modularity(const WeightedGraph& g, const std::vector<std::size_t>& community) {
  double two_m = 0;
  std::vector<double> deg(g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) {
      deg[i] += g.at(i, j);
      two_m += g.at(i, j);
    }
  if (two_m == 0) return 0.0;
  double q = 0;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j)
      if (community[i] == community[j]) q += g.at(i, j) - deg[i] * deg[j] / two_m;
  return q / two_m;
}

struct CommunityPartition {
  std::vector<std::size_t> community;  // per node, relabelled 0.. in order of first node
  double q = 0;
};

namespace detail {

/// Merges the connected pair of communities with the largest positive gain
/// (ties: smallest labels) until none improves Q. Returns whether anything
/// merged.
inline bool merge_communities(const WeightedGraph& g, double two_m, std::vector<std::size_t>& community) {
  const std::size_t n = g.n;
  // e[i][j]: weight between communities i and j over 2m; a[i]: degree share.
  std::vector<std::vector<double>> e(n, std::vector<double>(n, 0.0));
  std::vector<double> a(n, 0.0);
  std::vector<bool> alive(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    alive[community[i]] = true;
    for (std::size_t j = 0; j < n; ++j) {
      e[community[i]][community[j]] += g.at(i, j) / two_m;
      a[community[i]] += g.at(i, j) / two_m;
    }
  }
  bool changed = false;
  for (;;) {
    double best = 0;
    std::size_t bi = n, bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j] || e[i][j] == 0) continue;
        const double gain = 2 * (e[i][j] - a[i] * a[j]);
        if (gain > best + 1e-15) {
          best = gain;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n) return changed;
    changed = true;
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi || k == bj) continue;
      e[bi][k] += e[bj][k];
      e[k][bi] = e[bi][k];
    }
    e[bi][bi] += e[bj][bj] + 2 * e[bi][bj];
    a[bi] += a[bj];
    alive[bj] = false;
    for (auto& c : community)
      if (c == bj) c = bi;
  }
}

/// Kernighan-Lin style fine tuning: each sweep moves every node once, in
/// turn taking the unmoved node whose best move (to another community or a
/// new one) scores highest even when Q drops, and keeps the best state seen.
/// Sweeps repeat while they improve Q. Returns whether anything changed.
inline bool tune_nodes(const WeightedGraph& g, double two_m, std::vector<std::size_t>& community) {
  const std::size_t n = g.n;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += g.at(i, j);
  auto q_of = [&](const std::vector<std::size_t>& c) {
    double q = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (c[i] == c[j]) q += g.at(i, j) - deg[i] * deg[j] / two_m;
    return q / two_m;
  };
  bool changed = false;
  double start_q = q_of(community);
  for (;;) {
    std::vector<std::size_t> cur = community, best_state = community;
    double best_q = start_q, q = start_q;
    std::vector<bool> moved(n, false);
    for (std::size_t step = 0; step < n; ++step) {
      std::vector<double> tot(n, 0.0);
      std::vector<bool> used(n, false);
      for (std::size_t i = 0; i < n; ++i) {
        tot[cur[i]] += deg[i];
        used[cur[i]] = true;
      }
      std::size_t empty = n;
      for (std::size_t c = 0; c < n && empty == n; ++c)
        if (!used[c]) empty = c;
      double top = -std::numeric_limits<double>::infinity();
      std::size_t node = n, target = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (moved[i]) continue;
        std::vector<double> link(n, 0.0);
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) link[cur[j]] += g.at(i, j);
        const std::size_t from = cur[i];
        const double stay = link[from] - deg[i] * (tot[from] - deg[i]) / two_m;
        for (std::size_t c = 0; c < n; ++c) {
          if (c == from || (!used[c] && c != empty)) continue;
          if (c == empty && tot[from] == deg[i]) continue;  // already alone
          const double gain = (link[c] - deg[i] * tot[c] / two_m) - stay;
          if (gain > top + 1e-15) {
            top = gain;
            node = i;
            target = c;
          }
        }
      }
      if (node == n) break;
      cur[node] = target;
      moved[node] = true;
      q += 2 * top / two_m;
      if (q > best_q + 1e-12) {
        best_q = q;
        best_state = cur;
      }
    }
    if (best_q <= start_q + 1e-12) return changed;
    community = best_state;
    start_q = q_of(community);
    changed = true;
  }
}

}  // namespace detail

inline constexpr std::size_t kModularityRestarts = 128;

/// Greedy modularity maximisation: agglomerative merging of communities
/// alternated with node-move fine tuning until neither improves Q, then a
/// fixed number of seeded restarts, alternately scattering a few nodes of the
/// best partition and drawing a random partition, that climb again and keep
/// strict improvements.
inline CommunityPartition greedy_modularity(const WeightedGraph& g, std::size_t restarts = kModularityRestarts) {
  const std::size_t n = g.n;
  CommunityPartition p;
  p.community.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.community[i] = i;
  double two_m = 0;
  for (double x : g.w) two_m += x;
  if (two_m == 0) return p;
  auto climb = [&](std::vector<std::size_t>& c) {
    detail::merge_communities(g, two_m, c);
    while (detail::tune_nodes(g, two_m, c) && detail::merge_communities(g, two_m, c)) {
    }
  };
  climb(p.community);
  double best = modularity(g, p.community);
  Rng rng(0x6d6f64);
  for (std::size_t r = 0; r < restarts && n > 2; ++r) {
    auto c = p.community;
    if (r % 2 == 0) {
      const std::size_t k = 1 + rng.index(std::max<std::size_t>(1, n / 3));
      for (std::size_t t = 0; t < k; ++t) c[rng.index(n)] = rng.index(n);
    } else {
      const std::size_t groups = 2 + rng.index(std::max<std::size_t>(1, n / 2));
      for (auto& x : c) x = rng.index(std::min(groups, n));
    }
    climb(c);
    const double q = modularity(g, c);
    if (q > best + 1e-12) {
      best = q;
      p.community = c;
    }
  }
  std::map<std::size_t, std::size_t> relabel;
  for (auto& c : p.community) c = relabel.emplace(c, relabel.size()).first->second;
  p.q = modularity(g, p.community);
  return p;
}

inline void write_communities(std::ostream& out, const std::vector<std::string>& variants,
                              const CommunityPartition& p) {
  out << "variant,community_id\n";
  for (std::size_t i = 0; i < variants.size(); ++i) out << variants[i] << ',' << p.community[i] << '\n';
  out << "Q=" << format_double(p.q) << '\n';
}

}  // namespace vampnet
