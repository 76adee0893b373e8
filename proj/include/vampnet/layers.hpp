#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vampnet/ops.hpp"
#include "vampnet/rng.hpp"

namespace vampnet {

/// Ordered, named trainable tensors. Names follow `<segment>/<layer>/<name>`.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor t) {
    for (const auto& [n, _] : params_)
      if (n == name) throw ContractError("duplicate parameter name " + name);
    t.set_requires_grad(true);
    params_.emplace_back(std::move(name), std::move(t));
    return params_.back().second;
  }

  std::vector<std::pair<std::string, Tensor>>& items() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : params_)
      if (n == name) return &t;
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> s;
    for (const auto& [_, t] : params_) s.push_back(t.values());
    return s;
  }

  void restore(const std::vector<std::vector<double>>& s) {
    if (s.size() != params_.size()) throw ContractError("parameter snapshot size mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto d = params_[i].second.mutable_data();
      if (d.size() != s[i].size()) throw ContractError("parameter snapshot shape mismatch for " + params_[i].first);
      std::copy(s[i].begin(), s[i].end(), d.begin());
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

inline Tensor glorot(Shape s, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(numel(s));
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor(std::move(s), std::move(v), true);
}

/// y = x W + b with W stored as [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight(ps.add(name + "/weight", glorot({in, out}, in, out, rng))),
        bias(ps.add(name + "/bias", Tensor::zeros({out}))) {}

  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, std::size_t d)
      : gamma(ps.add(name + "/gamma", Tensor::full({d}, 1.0))), beta(ps.add(name + "/beta", Tensor::zeros({d}))) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

inline std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "gelu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + s + "' (expected relu or gelu)");
}

}  // namespace vampnet
