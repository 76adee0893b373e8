#pragma once

// Run configuration: every module config with its defaults, read from flat
// `key = value` files with [section] headers. Unknown keys are rejected.

#include <algorithm>
#include <cctype>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vampnet/baselines.hpp"
#include "vampnet/cohort_io.hpp"
#include "vampnet/explain.hpp"
#include "vampnet/model.hpp"
#include "vampnet/synthetic.hpp"
#include "vampnet/training.hpp"

namespace vampnet {

struct RunConfig {
  std::string model = "vampnet";  // vampnet | mlp | cnn
  VampNetConfig vampnet;
  VocabMode vocab_mode = VocabMode::Static;
  std::size_t subword_vocab_size = 1000;
  MlpConfig mlp;
  CnnBaselineConfig cnn_baseline;
  double chi2_alpha = 0.001;
  TrainConfig train;
  std::size_t search_budget = 0;
  SyntheticSpec synth;
  std::size_t ig_steps = kDefaultIgSteps;
  std::size_t min_cooccurrence = kDefaultMinCooccurrence;
  std::size_t attention_layer = 0;
};

namespace detail {

inline std::string trim_space(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  auto n = parse_int(v);
  if (!n || *n < 0) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(*n);
}

inline double to_real(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(to_size(key, trim_space(item)));
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

inline std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string bool_str(bool b) { return b ? "true" : "false"; }

/// Wraps an enum parser so its errors name the key.
template <typename F>
auto keyed(const std::string& key, const std::string& v, F parse) {
  try {
    return parse(v);
  } catch (const ConfigError&) {
    throw ConfigError(key + ": unrecognised value '" + v + "'");
  }
}

inline VocabMode vocab_mode_from_string(const std::string& s) {
  if (s == "static") return VocabMode::Static;
  if (s == "subword") return VocabMode::Subword;
  throw ConfigError("unknown tokenizer mode " + s);
}

}  // namespace detail

struct ConfigField {
  std::string key;  // section.name
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using namespace detail;
  // Integer, real and boolean members share one shape each.
#define VAMPNET_SIZE(k, m) {k, [](const RunConfig& c) { return std::to_string(c.m); }, [](RunConfig& c, const std::string& v) { c.m = to_size(k, v); }}
#define VAMPNET_REAL(k, m) {k, [](const RunConfig& c) { return format_double(c.m); }, [](RunConfig& c, const std::string& v) { c.m = to_real(k, v); }}
#define VAMPNET_BOOL(k, m) {k, [](const RunConfig& c) { return bool_str(c.m); }, [](RunConfig& c, const std::string& v) { c.m = to_bool(k, v); }}
#define VAMPNET_ACT(k, m) {k, [](const RunConfig& c) { return to_string(c.m); }, [](RunConfig& c, const std::string& v) { c.m = keyed(k, v, activation_from_string); }}
#define VAMPNET_LIST(k, m) {k, [](const RunConfig& c) { return join(c.m); }, [](RunConfig& c, const std::string& v) { c.m = to_sizes(k, v); }}
  static const std::vector<ConfigField> fields = {
      {"run.model", [](const RunConfig& c) { return c.model; },
       [](RunConfig& c, const std::string& v) {
         if (v != "vampnet" && v != "mlp" && v != "cnn") throw ConfigError("run.model: unrecognised value '" + v + "'");
         c.model = v;
       }},
      VAMPNET_SIZE("sab.d_model", vampnet.sab.d_model),
      VAMPNET_SIZE("sab.hidden_dim", vampnet.sab.hidden_dim),
      VAMPNET_SIZE("sab.num_layers", vampnet.sab.num_layers),
      VAMPNET_SIZE("sab.num_heads", vampnet.sab.num_heads),
      VAMPNET_REAL("sab.dropout", vampnet.sab.dropout),
      VAMPNET_ACT("sab.activation", vampnet.sab.activation),
      VAMPNET_BOOL("sab.masked", vampnet.sab.masked),
      VAMPNET_SIZE("cnn.conv_layers", vampnet.cnn.conv_layers),
      VAMPNET_SIZE("cnn.kernel", vampnet.cnn.kernel),
      VAMPNET_SIZE("cnn.channels", vampnet.cnn.channels),
      VAMPNET_ACT("cnn.activation", vampnet.cnn.activation),
      VAMPNET_REAL("cnn.dropout", vampnet.cnn.dropout),
      {"fusion.mode", [](const RunConfig& c) { return to_string(c.vampnet.fusion); },
       [](RunConfig& c, const std::string& v) { c.vampnet.fusion = keyed("fusion.mode", v, fusion_from_string); }},
      VAMPNET_BOOL("fusion.use_path2", vampnet.use_path2),
      {"tokenizer.mode",
       [](const RunConfig& c) { return std::string(c.vocab_mode == VocabMode::Static ? "static" : "subword"); },
       [](RunConfig& c, const std::string& v) { c.vocab_mode = keyed("tokenizer.mode", v, vocab_mode_from_string); }},
      VAMPNET_SIZE("tokenizer.subword_vocab_size", subword_vocab_size),
      VAMPNET_SIZE("tokenizer.max_len", vampnet.max_len),
      VAMPNET_LIST("mlp.hidden", mlp.hidden),
      VAMPNET_REAL("mlp.dropout", mlp.dropout),
      VAMPNET_ACT("mlp.activation", mlp.activation),
      VAMPNET_LIST("cnn_baseline.filters", cnn_baseline.filters),
      VAMPNET_LIST("cnn_baseline.kernels", cnn_baseline.kernels),
      VAMPNET_LIST("cnn_baseline.pools", cnn_baseline.pools),
      VAMPNET_REAL("cnn_baseline.dropout", cnn_baseline.dropout),
      VAMPNET_ACT("cnn_baseline.activation", cnn_baseline.activation),
      VAMPNET_REAL("baseline.chi2_alpha", chi2_alpha),
      VAMPNET_REAL("train.learning_rate", train.learning_rate),
      VAMPNET_SIZE("train.batch_size", train.batch_size),
      VAMPNET_SIZE("train.max_epochs", train.max_epochs),
      VAMPNET_SIZE("train.patience", train.patience),
      VAMPNET_BOOL("train.augment", train.augment),
      VAMPNET_SIZE("train.seed", train.seed),
      VAMPNET_REAL("train.train_fraction", train.train_fraction),
      VAMPNET_REAL("train.val_fraction", train.val_fraction),
      VAMPNET_REAL("train.test_fraction", train.test_fraction),
      {"train.optimizer", [](const RunConfig& c) { return to_string(c.train.optimizer); },
       [](RunConfig& c, const std::string& v) { c.train.optimizer = keyed("train.optimizer", v, optimizer_from_string); }},
      VAMPNET_REAL("train.momentum", train.momentum),
      VAMPNET_REAL("train.class_weight_0", train.class_weights[0]),
      VAMPNET_REAL("train.class_weight_1", train.class_weights[1]),
      VAMPNET_SIZE("train.search_budget", search_budget),
      VAMPNET_SIZE("synth.n_samples", synth.n_samples),
      VAMPNET_SIZE("synth.vocab_size", synth.vocab_size),
      VAMPNET_REAL("synth.background_mean", synth.background_mean),
      VAMPNET_SIZE("synth.n_marginal", synth.n_marginal),
      VAMPNET_SIZE("synth.n_pairs", synth.n_pairs),
      VAMPNET_REAL("synth.marginal_rate", synth.marginal_rate),
      VAMPNET_REAL("synth.pair_rate", synth.pair_rate),
      VAMPNET_REAL("synth.pair_member_rate", synth.pair_member_rate),
      VAMPNET_REAL("synth.low_quality_rate", synth.low_quality_rate),
      VAMPNET_REAL("synth.tau", synth.tau),
      VAMPNET_REAL("synth.noise", synth.noise),
      VAMPNET_SIZE("synth.seed", synth.seed),
      VAMPNET_SIZE("explain.ig_steps", ig_steps),
      VAMPNET_SIZE("explain.min_cooccurrence", min_cooccurrence),
      VAMPNET_SIZE("explain.attention_layer", attention_layer),
  };
#undef VAMPNET_SIZE
#undef VAMPNET_REAL
#undef VAMPNET_BOOL
#undef VAMPNET_ACT
#undef VAMPNET_LIST
  return fields;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields())
    if (f.key == key) return f.set(c, value);
  throw ConfigError("unknown key " + key);
}

inline std::string get_config_value(const RunConfig& c, const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return f.get(c);
  throw ConfigError("unknown key " + key);
}

/// Applies `key = value` lines onto `c`. Keys are qualified by the most
/// recent [section]; '#' starts a comment.
inline void read_config(std::istream& in, RunConfig& c, const std::string& source = "<config>") {
  std::string section, line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim_space(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source + ":" + std::to_string(no) + ": malformed section header");
      section = detail::trim_space(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(no) + ": expected key = value");
    std::string key = detail::trim_space(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    set_config_value(c, key, detail::trim_space(line.substr(eq + 1)));
  }
}

/// Writes the keys whose section is listed (all keys when `sections` is
/// empty) in the format read_config accepts.
inline void write_config(std::ostream& out, const RunConfig& c, const std::vector<std::string>& sections = {}) {
  std::string current;
  for (const auto& f : config_fields()) {
    const std::string sec = f.key.substr(0, f.key.find('.'));
    if (!sections.empty() && std::find(sections.begin(), sections.end(), sec) == sections.end()) continue;
    if (sec != current) {
      out << '[' << sec << "]\n";
      current = sec;
    }
    out << f.key.substr(sec.size() + 1) << " = " << f.get(c) << '\n';
  }
}

}  // namespace vampnet
