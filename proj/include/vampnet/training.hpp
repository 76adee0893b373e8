#pragma once

// Weighted cross-entropy training with early stopping on validation AUC,
// stratified splits, optimisers, evaluation and seeded random search.

#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "vampnet/cohort_io.hpp"
#include "vampnet/log.hpp"
#include "vampnet/metrics.hpp"
#include "vampnet/model.hpp"

namespace vampnet {

enum class OptimizerKind { Sgd, Adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct TrainConfig {
  double learning_rate = 0.00137;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  bool augment = false;
  std::uint64_t seed = 0;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double momentum = 0.9;
  std::array<double, 2> class_weights{0.0, 0.0};  // zeros: derive from training counts

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (train_fraction <= 0 || val_fraction < 0 || test_fraction < 0 ||
        std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
      throw ConfigError("split fractions must be non-negative and sum to 1");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0,1)");
  }
};

/// w_c = total / (2 count_c).
inline std::array<double, 2> class_weights_from_counts(std::array<std::size_t, 2> counts) {
  if (counts[0] == 0 || counts[1] == 0) throw ConfigError("class weights need both classes in the training split");
  const double total = static_cast<double>(counts[0] + counts[1]);
  return {total / (2.0 * static_cast<double>(counts[0])), total / (2.0 * static_cast<double>(counts[1]))};
}

inline std::array<std::size_t, 2> count_labels(const std::vector<SampleRecord>& rs) {
  std::array<std::size_t, 2> c{};
  for (const auto& r : rs) ++c[static_cast<std::size_t>(r.label)];
  return c;
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Per-class shuffled split; each class contributes round(fraction * n_c) to
/// train and val, the rest to test.
inline SplitIndices stratified_split(const std::vector<SampleRecord>& cohort, double train_fraction,
                                     double val_fraction, std::uint64_t seed) {
  Rng rng(seed);
  SplitIndices s;
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cohort.size(); ++i)
      if (cohort[i].label == cls) idx.push_back(i);
    rng.shuffle(idx);
    const auto n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    const auto n_val = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(val_fraction * n)));
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < n_train ? s.train : i < n_train + n_val ? s.val : s.test).push_back(idx[i]);
  }
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

inline std::vector<SampleRecord> select(const std::vector<SampleRecord>& cohort, const std::vector<std::size_t>& idx) {
  std::vector<SampleRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cohort[i]);
  return out;
}

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet& ps) = 0;
};

/// v <- mu v + g; p <- p - lr v.
class SgdMomentum : public Optimizer {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), mu_(momentum) {}
  void step(ParameterSet& ps) override {
    auto& items = ps.items();
    if (velocity_.empty()) {
      for (const auto& [_, t] : items) velocity_.emplace_back(t.size(), 0.0);
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto& t = items[i].second;
      if (!t.has_grad()) continue;
      auto g = t.grad();
      auto p = t.mutable_data();
      auto& v = velocity_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        v[k] = mu_ * v[k] + g[k];
        p[k] -= lr_ * v[k];
      }
    }
  }

 private:
  double lr_, mu_;
  std::vector<std::vector<double>> velocity_;
};

class Adam : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(ParameterSet& ps) override {
    auto& items = ps.items();
    if (m_.empty()) {
      for (const auto& [_, t] : items) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_)), c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto& t = items[i].second;
      if (!t.has_grad()) continue;
      auto g = t.grad();
      auto p = t.mutable_data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        m_[i][k] = b1_ * m_[i][k] + (1 - b1_) * g[k];
        v_[i][k] = b2_ * v_[i][k] + (1 - b2_) * g[k] * g[k];
        p[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

inline std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& c) {
  if (c.optimizer == OptimizerKind::Adam) return std::make_unique<Adam>(c.learning_rate);
  return std::make_unique<SgdMomentum>(c.learning_rate, c.momentum);
}

/// Eval-mode scores and mean weighted loss, computed in chunks.
inline MetricsReport evaluate(const Classifier& model, const std::vector<SampleRecord>& records,
                              std::array<double, 2> weights = {1.0, 1.0}, std::size_t chunk = 128) {
  NoGradGuard guard;
  Rng unused(0);
  std::vector<double> scores;
  std::vector<int> labels;
  double loss_sum = 0;
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    std::vector<const SampleRecord*> part;
    std::vector<int> y;
    for (std::size_t i = start; i < std::min(records.size(), start + chunk); ++i) {
      part.push_back(&records[i]);
      y.push_back(records[i].label);
    }
    Tensor logits = model.logits(part, false, unused);
    loss_sum += weighted_cross_entropy(logits, y, weights).item() * static_cast<double>(part.size());
    for (double s : resistant_scores(logits)) scores.push_back(s);
    labels.insert(labels.end(), y.begin(), y.end());
  }
  MetricsReport m = compute_metrics(scores, labels);
  m.loss = records.empty() ? 0.0 : loss_sum / static_cast<double>(records.size());
  return m;
}

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0, accuracy = 0, auc = 0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  std::vector<EpochRecord> curves;
  std::size_t best_epoch = 0;
  double best_val_auc = -std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;
  std::array<double, 2> class_weights{1.0, 1.0};
};

/// Minibatch training. Each epoch reshuffles the batch order (and, with
/// augment, every sample's variant order), then scores the validation split;
/// the parameters of the best validation-AUC epoch are restored at the end.
/// The train row of the curves comes from the training-mode forward passes.
inline TrainResult train(Classifier& model, const std::vector<SampleRecord>& train_set,
                         const std::vector<SampleRecord>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training split is empty");
  TrainResult result;
  result.class_weights = config.class_weights[0] > 0 && config.class_weights[1] > 0
                             ? config.class_weights
                             : class_weights_from_counts(count_labels(train_set));
  const std::vector<double> w(result.class_weights.begin(), result.class_weights.end());
  auto& params = model.parameters();
  auto optimizer = make_optimizer(config);
  Rng rng(config.seed);
  auto best = params.snapshot();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto order = rng.permutation(train_set.size());
    std::vector<double> scores;
    std::vector<int> labels;
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<SampleRecord> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(config.augment ? shuffle_augment(train_set[order[i]], rng) : train_set[order[i]]);
      std::vector<int> y;
      for (const auto& r : batch) y.push_back(r.label);
      params.zero_grad();
      Tensor logits = model.logits(pointers(batch), true, rng);
      Tensor loss = weighted_cross_entropy(logits, y, w);
      if (!std::isfinite(loss.item()))
        throw NumericError("loss diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start));
      for (double s : resistant_scores(logits)) scores.push_back(s);
      labels.insert(labels.end(), y.begin(), y.end());
      loss_sum += loss.item() * static_cast<double>(batch.size());
      backward(loss);
      model.before_step();
      optimizer->step(params);
    }
    params.zero_grad();
    const MetricsReport tr = compute_metrics(scores, labels);
    result.curves.push_back({epoch, "train", loss_sum / static_cast<double>(train_set.size()), tr.accuracy, tr.auc});
    const MetricsReport va = evaluate(model, val_set, result.class_weights);
    result.curves.push_back({epoch, "val", va.loss, va.accuracy, va.auc});
    result.epochs_run = epoch;
    log_info("epoch " + std::to_string(epoch) + " train_loss=" + format_double(result.curves[result.curves.size() - 2].loss) +
             " val_auc=" + format_double(va.auc));
    const double val_auc = std::isnan(va.auc) ? -std::numeric_limits<double>::infinity() : va.auc;
    if (epoch == 1 || val_auc > result.best_val_auc) {
      result.best_val_auc = val_auc;
      result.best_epoch = epoch;
      best = params.snapshot();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  params.restore(best);
  return result;
}

inline void write_curves(std::ostream& out, const std::vector<EpochRecord>& curves) {
  out << "epoch,split,loss,accuracy,auc\n";
  for (const auto& r : curves)
    out << r.epoch << ',' << r.split << ',' << format_double(r.loss) << ',' << format_double(r.accuracy) << ','
        << format_double(r.auc) << '\n';
}

inline void write_metrics(std::ostream& out, const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  out << "split,count,loss,accuracy,balanced_accuracy,precision,recall,f1,auc\n";
  for (const auto& [name, m] : rows)
    out << name << ',' << m.count << ',' << format_double(m.loss) << ',' << format_double(m.accuracy) << ','
        << format_double(m.balanced_accuracy) << ',' << format_double(m.precision) << ',' << format_double(m.recall)
        << ',' << format_double(m.f1) << ',' << format_double(m.auc) << '\n';
}

/// One sampled point of the search space.
struct SearchTrial {
  std::size_t index = 0;
  std::size_t emb_dim = 64;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 3;
  double dropout = 0.1;
  std::size_t kernel = 3;
  double learning_rate = 0.00137;
  std::uint64_t seed = 0;
  double val_auc = 0;
  double val_accuracy = 0;
  double objective() const { return (val_auc + val_accuracy) / 2.0; }
};

struct SearchSpace {
  std::vector<std::size_t> emb_dims{64, 128};
  std::vector<std::size_t> hidden_dims{32};
  std::size_t min_layers = 1, max_layers = 4;
  double min_dropout = 0.02, max_dropout = 0.4;
  std::vector<std::size_t> kernels{3, 5};
  double min_lr = 1e-3, max_lr = 2e-3;

  void validate() const {
    if (emb_dims.empty() || hidden_dims.empty() || kernels.empty() || min_layers == 0 || min_layers > max_layers ||
        min_dropout > max_dropout || min_lr > max_lr)
      throw ConfigError("empty or inverted search space");
  }

  SearchTrial sample(Rng& rng) const {
    SearchTrial t;
    t.emb_dim = emb_dims[rng.index(emb_dims.size())];
    t.hidden_dim = hidden_dims[rng.index(hidden_dims.size())];
    t.num_layers = min_layers + rng.index(max_layers - min_layers + 1);
    t.dropout = rng.uniform(min_dropout, max_dropout);
    t.kernel = kernels[rng.index(kernels.size())];
    t.learning_rate = rng.uniform(min_lr, max_lr);
    return t;
  }
};

struct SearchResult {
  std::vector<SearchTrial> trials;
  std::size_t best = 0;
};

/// Samples `budget` trials and scores each with `run`, which must fill
/// val_auc and val_accuracy. Trial i is seeded with seed + i; the highest
/// mean(val AUC, val accuracy) wins, ties keeping the earlier trial.
inline SearchResult random_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                                  const std::function<void(SearchTrial&)>& run) {
  space.validate();
  if (budget == 0) throw ConfigError("search budget must be at least 1");
  Rng rng(seed);
  SearchResult r;
  for (std::size_t i = 0; i < budget; ++i) {
    SearchTrial t = space.sample(rng);
    t.index = i;
    t.seed = seed + i;
    run(t);
    r.trials.push_back(t);
    if (i > 0 && t.objective() > r.trials[r.best].objective()) r.best = i;
  }
  return r;
}

}  // namespace vampnet
