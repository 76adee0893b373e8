#pragma once

// Text checkpoints: a header (format version, model kind, seed, config echo,
// normaliser, vocabulary or presence columns) followed by one record per
// named parameter with its shape and shortest round-trip decimals.

#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vampnet/config.hpp"

namespace vampnet {

inline constexpr std::string_view kCheckpointFormat = "vampnet-ckpt/1";

struct LoadedModel {
  std::unique_ptr<Classifier> model;
  RunConfig config;
};

namespace detail {

inline std::vector<std::string> model_sections(const std::string& kind) {
  if (kind == "vampnet") return {"sab", "cnn", "fusion", "tokenizer"};
  if (kind == "mlp") return {"mlp"};
  return {"cnn_baseline"};
}

inline void write_row(std::ostream& out, const char* name, const FeatureRow& row) {
  out << name;
  for (double v : row) out << ' ' << format_double(v);
  out << '\n';
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const std::string& what) {
    std::string line;
    if (!std::getline(in_, line)) throw ParseError("checkpoint ended early, expected " + what);
    ++no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  /// Next line split on spaces, checking the leading word.
  std::vector<std::string> fields(const std::string& keyword) {
    std::istringstream ss(next(keyword));
    std::vector<std::string> f;
    for (std::string w; ss >> w;) f.push_back(w);
    if (f.empty() || f[0] != keyword) fail("expected '" + keyword + "'");
    return f;
  }

  std::size_t size_at(const std::vector<std::string>& f, std::size_t i) {
    if (i >= f.size()) fail("missing field");
    auto v = parse_int(f[i]);
    if (!v || *v < 0) fail("bad count '" + f[i] + "'");
    return static_cast<std::size_t>(*v);
  }

  double real(const std::string& s) {
    auto v = parse_double(s);
    if (!v) fail("bad number '" + s + "'");
    return *v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("checkpoint line " + std::to_string(no_) + ": " + msg);
  }

 private:
  std::istream& in_;
  std::size_t no_ = 0;
};

}  // namespace detail

/// Echo of the model's own configuration, for writing into a checkpoint.
inline RunConfig config_of(const Classifier& m) {
  RunConfig c;
  c.model = m.kind();
  if (const auto* v = dynamic_cast<const VampNet*>(&m)) {
    c.vampnet = v->config();
    c.vocab_mode = v->vocabulary().mode();
  } else if (const auto* p = dynamic_cast<const MlpBaseline*>(&m)) {
    c.mlp = p->config();
  } else if (const auto* q = dynamic_cast<const CnnBaseline*>(&m)) {
    c.cnn_baseline = q->config();
  }
  return c;
}

inline void save_checkpoint(std::ostream& out, const Classifier& m) {
  const RunConfig c = config_of(m);
  out << kCheckpointFormat << '\n';
  out << "model " << m.kind() << '\n';
  std::ostringstream cfg;
  write_config(cfg, c, detail::model_sections(m.kind()));
  const std::string text = cfg.str();
  out << "config " << std::count(text.begin(), text.end(), '\n') << '\n' << text;
  if (const auto* v = dynamic_cast<const VampNet*>(&m)) {
    out << "seed " << v->seed() << '\n';
    out << "fusion " << to_string(v->config().fusion) << '\n';
    const auto& s = v->normalizer();
    detail::write_row(out, "norm_min", s.min);
    detail::write_row(out, "norm_max", s.max);
    out << "class_counts " << s.class_counts[0] << ' ' << s.class_counts[1] << '\n';
    const auto& voc = v->vocabulary();
    out << "vocab " << (voc.mode() == VocabMode::Static ? "static" : "subword") << ' ' << voc.size() << '\n';
    for (std::size_t i = 0; i < voc.size(); ++i) out << voc.piece(static_cast<int>(i)) << '\n';
  } else {
    const PresenceColumns* cols = nullptr;
    std::uint64_t seed = 0;
    if (const auto* p = dynamic_cast<const MlpBaseline*>(&m)) {
      cols = &p->columns();
      seed = p->seed();
    } else if (const auto* q = dynamic_cast<const CnnBaseline*>(&m)) {
      cols = &q->columns();
      seed = q->seed();
    } else {
      throw ContractError("cannot checkpoint model kind " + m.kind());
    }
    out << "seed " << seed << '\n';
    out << "columns " << cols->size() << '\n';
    for (const auto& t : cols->tokens()) out << t << '\n';
  }
  const auto& items = m.parameters().items();
  out << "params " << items.size() << '\n';
  for (const auto& [name, t] : items) {
    out << "param " << name << ' ' << t.shape().size();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    const auto& vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) out << (i ? " " : "") << format_double(vals[i]);
    out << '\n';
  }
  out << "end\n";
}

inline LoadedModel load_checkpoint(std::istream& in) {
  detail::LineReader r(in);
  if (r.next("format line") != kCheckpointFormat) r.fail("not a " + std::string(kCheckpointFormat) + " checkpoint");
  const auto kind = r.fields("model");
  if (kind.size() != 2 || (kind[1] != "vampnet" && kind[1] != "mlp" && kind[1] != "cnn")) r.fail("unknown model kind");
  LoadedModel lm;
  lm.config.model = kind[1];
  const std::size_t cfg_lines = r.size_at(r.fields("config"), 1);
  std::string text;
  for (std::size_t i = 0; i < cfg_lines; ++i) text += r.next("config line") + "\n";
  std::istringstream cfg(text);
  read_config(cfg, lm.config, "checkpoint config");
  const std::uint64_t seed = r.size_at(r.fields("seed"), 1);

  if (lm.config.model == "vampnet") {
    const auto fusion = r.fields("fusion");
    if (fusion.size() != 2 || fusion_from_string(fusion[1]) != lm.config.vampnet.fusion)
      r.fail("fusion mode disagrees with the config echo");
    CohortStats s;
    for (auto* row : {&s.min, &s.max}) {
      const auto f = r.fields(row == &s.min ? "norm_min" : "norm_max");
      if (f.size() != kNumChannels + 1) r.fail("normaliser row needs " + std::to_string(kNumChannels) + " values");
      for (std::size_t c = 0; c < kNumChannels; ++c) (*row)[c] = r.real(f[c + 1]);
    }
    const auto cc = r.fields("class_counts");
    s.class_counts = {r.size_at(cc, 1), r.size_at(cc, 2)};
    const auto vf = r.fields("vocab");
    if (vf.size() != 3) r.fail("vocab line needs a mode and a size");
    Vocabulary vocab(detail::vocab_mode_from_string(vf[1]));
    const std::size_t n = r.size_at(vf, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string piece = r.next("vocabulary piece");
      if (vocab.add(piece) != static_cast<int>(i)) r.fail("vocabulary piece out of order: " + piece);
    }
    lm.model = std::make_unique<VampNet>(lm.config.vampnet, std::move(vocab), s, seed);
  } else {
    const std::size_t n = r.size_at(r.fields("columns"), 1);
    std::vector<std::string> cols;
    for (std::size_t i = 0; i < n; ++i) cols.push_back(r.next("column token"));
    if (lm.config.model == "mlp")
      lm.model = std::make_unique<MlpBaseline>(lm.config.mlp, PresenceColumns(std::move(cols)), seed);
    else
      lm.model = std::make_unique<CnnBaseline>(lm.config.cnn_baseline, PresenceColumns(std::move(cols)), seed);
  }

  auto& items = lm.model->parameters().items();
  if (r.size_at(r.fields("params"), 1) != items.size()) r.fail("parameter count differs from the architecture");
  for (auto& [name, t] : items) {
    const auto f = r.fields("param");
    if (f.size() < 3 || f[1] != name) r.fail("expected parameter " + name);
    const std::size_t rank = r.size_at(f, 2);
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(r.size_at(f, 3 + i));
    if (shape != t.shape()) r.fail("shape mismatch for " + name);
    std::istringstream vals(r.next("values of " + name));
    auto dst = t.mutable_data();
    std::size_t i = 0;
    for (std::string w; vals >> w; ++i) {
      if (i >= dst.size()) r.fail("too many values for " + name);
      dst[i] = r.real(w);
    }
    if (i != dst.size()) r.fail("too few values for " + name);
  }
  if (r.next("end") != "end") r.fail("expected 'end'");
  return lm;
}

}  // namespace vampnet
