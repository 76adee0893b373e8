#pragma once

// Variant vocabularies (static ids or trained subword pieces), shuffle
// augmentation and padded batch collation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "vampnet/log.hpp"
#include "vampnet/ops.hpp"
#include "vampnet/rng.hpp"
#include "vampnet/vcf.hpp"

namespace vampnet {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kVocabSchema = "vampnet-vocab/1";

enum class VocabMode { Static, Subword };

inline std::string to_string(VocabMode m) { return m == VocabMode::Static ? "STATIC" : "SUBWORD"; }

/// Bijection between token strings (or subword pieces) and dense ids.
/// Ids 0 and 1 are reserved for padding and unknown tokens.
class Vocabulary {
 public:
  explicit Vocabulary(VocabMode mode = VocabMode::Static) : mode_(mode) {
    add("[PAD]");
    add("[UNK]");
  }

  VocabMode mode() const { return mode_; }
  std::size_t size() const { return pieces_.size(); }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }

  int id_of(const std::string& piece) const {
    auto it = index_.find(piece);
    return it == index_.end() ? kUnkId : it->second;
  }
  bool contains(const std::string& piece) const { return index_.count(piece) > 0; }

  int add(const std::string& piece) {
    if (auto it = index_.find(piece); it != index_.end()) return it->second;
    const int id = static_cast<int>(pieces_.size());
    pieces_.push_back(piece);
    index_.emplace(piece, id);
    max_piece_len_ = std::max(max_piece_len_, piece.size());
    return id;
  }

  /// Ids representing one canonical variant. Static mode yields exactly one
  /// id (UNK when unseen); subword mode walks the string taking the longest
  /// known piece at each step, emitting UNK for characters outside the
  /// trained alphabet. Never empty for a non-empty token.
  std::vector<int> encode(const std::string& canonical) const {
    if (mode_ == VocabMode::Static) return {id_of(canonical)};
    std::vector<int> ids;
    std::size_t i = 0;
    while (i < canonical.size()) {
      std::size_t len = std::min(max_piece_len_, canonical.size() - i);
      int found = -1;
      for (; len > 0; --len)
        if (auto it = index_.find(canonical.substr(i, len)); it != index_.end() && it->second > kUnkId) {
          found = it->second;
          break;
        }
      if (found < 0) {
        ids.push_back(kUnkId);
        ++i;
      } else {
        ids.push_back(found);
        i += len;
      }
    }
    return ids;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string s;
    for (int id : ids) s += piece(id);
    return s;
  }

  void save(std::ostream& out) const {
    out << kVocabSchema << ";mode=" << to_string(mode_) << '\n';
    for (std::size_t i = 0; i < pieces_.size(); ++i) out << pieces_[i] << '\t' << i << '\n';
  }

  static Vocabulary load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty vocabulary file");
    VocabMode mode;
    if (line == std::string(kVocabSchema) + ";mode=STATIC")
      mode = VocabMode::Static;
    else if (line == std::string(kVocabSchema) + ";mode=SUBWORD")
      mode = VocabMode::Subword;
    else
      throw ParseError("bad vocabulary header '" + line + "'");
    Vocabulary v(mode);
    std::size_t expected = 0;
    while (std::getline(in, line)) {
      if (line.empty()) break;  // a blank line ends an embedded vocabulary
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw ParseError("vocabulary line without tab: '" + line + "'");
      auto id = detail::parse_int(std::string_view(line).substr(tab + 1));
      if (!id || static_cast<std::size_t>(*id) != expected)
        throw ParseError("vocabulary ids must be dense and ordered at '" + line + "'");
      std::string piece = line.substr(0, tab);
      if (expected < 2) {
        if (piece != v.pieces_[expected]) throw ParseError("reserved vocabulary entries must be [PAD] and [UNK]");
      } else if (v.add(piece) != static_cast<int>(expected)) {
        throw ParseError("duplicate vocabulary entry '" + piece + "'");
      }
      ++expected;
    }
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.mode_ == b.mode_ && a.pieces_ == b.pieces_;
  }

 private:
  VocabMode mode_;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_piece_len_ = 0;
};

/// One id per distinct canonical token, in order of first appearance.
inline Vocabulary build_static_vocab(const std::vector<SampleRecord>& train) {
  Vocabulary v(VocabMode::Static);
  for (const auto& r : train)
    for (const auto& t : r.tokens) v.add(t.canonical());
  return v;
}

/// Greedy frequency-based merging: starting from single characters, the
/// most frequent adjacent piece pair over the corpus (ties broken by the
/// lexicographically smallest pair) is merged until the vocabulary holds
/// `target_vocab_size` content pieces or nothing is left to merge.
inline Vocabulary train_subword(const std::vector<std::string>& corpus, std::size_t target_vocab_size) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& w : corpus) ++word_freq[w];
  std::vector<std::string> alphabet;
  for (const auto& [w, f] : word_freq)
    for (char c : w) alphabet.emplace_back(1, c);
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  if (target_vocab_size <= alphabet.size())
    throw ConfigError("subword target size " + std::to_string(target_vocab_size) + " must exceed the alphabet size " +
                      std::to_string(alphabet.size()));
  Vocabulary v(VocabMode::Subword);
  for (const auto& a : alphabet) v.add(a);

  struct Word {
    std::vector<std::string> parts;
    std::size_t freq;
  };
  std::vector<Word> words;
  for (const auto& [w, f] : word_freq) {
    Word word{{}, f};
    for (char c : w) word.parts.emplace_back(1, c);
    words.push_back(std::move(word));
  }
  while (v.size() - 2 < target_vocab_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.parts.size(); ++i) pairs[{w.parts[i], w.parts[i + 1]}] += w.freq;
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [left, right] = best->first;
    const std::string merged = left + right;
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < w.parts.size(); ++i) {
        if (i + 1 < w.parts.size() && w.parts[i] == left && w.parts[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.parts[i]);
        }
      }
      w.parts = std::move(next);
    }
    v.add(merged);
  }
  return v;
}

/// Applies one random permutation jointly to tokens and feature rows.
inline SampleRecord shuffle_augment(SampleRecord r, Rng& rng) {
  auto perm = rng.permutation(r.tokens.size());
  SampleRecord out = r;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.tokens[i] = r.tokens[perm[i]];
    out.features[i] = r.features[perm[i]];
  }
  return out;
}

/// Fixed-length batch: flattened B x L matrices plus a B x L x 8 feature
/// tensor. Positions at or beyond a sample's length are padding.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> token_ids;                // B*L; first piece id, PAD under padding
  std::vector<std::vector<int>> pieces;      // B*L; empty under padding
  std::vector<std::uint8_t> valid_mask;      // B*L
  Tensor features;                           // [B x L x 8], zero under padding
  std::vector<int> labels;                   // B
  std::vector<std::size_t> lengths;          // B
};

/// 99th-percentile sample length (at least 1).
inline std::size_t length_percentile(const std::vector<SampleRecord>& train, double q = 0.99) {
  std::vector<std::size_t> lens;
  for (const auto& r : train) lens.push_back(r.size());
  if (lens.empty()) return 1;
  std::sort(lens.begin(), lens.end());
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(lens.size())));
  idx = std::clamp<std::size_t>(idx, 1, lens.size()) - 1;
  return std::max<std::size_t>(1, lens[idx]);
}

/// Pads (or truncates, keeping the leading tokens) every record to max_len.
/// Features must already be normalised.
inline PaddedBatch collate(const std::vector<const SampleRecord*>& records, const Vocabulary& vocab,
                           std::size_t max_len) {
  if (max_len == 0) throw ConfigError("collate needs max_len >= 1");
  PaddedBatch b;
  b.batch = records.size();
  b.length = max_len;
  const std::size_t n = b.batch * max_len;
  b.token_ids.assign(n, kPadId);
  b.pieces.assign(n, {});
  b.valid_mask.assign(n, 0);
  std::vector<double> feats(std::max<std::size_t>(n, 1) * kNumChannels, 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = *records[i];
    std::size_t len = r.size();
    if (len > max_len) {
      log_warning_once("truncate:" + r.sample_id, "sample " + r.sample_id + " truncated from " + std::to_string(len) + " to " +
                  std::to_string(max_len) + " variants");
      len = max_len;
    }
    b.lengths.push_back(len);
    b.labels.push_back(r.label);
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t p = i * max_len + j;
      b.pieces[p] = vocab.encode(r.tokens[j].canonical());
      b.token_ids[p] = b.pieces[p].front();
      b.valid_mask[p] = 1;
      for (std::size_t c = 0; c < kNumChannels; ++c) feats[p * kNumChannels + c] = r.features[j][c];
    }
  }
  if (n > 0) b.features = Tensor({b.batch, max_len, kNumChannels}, std::move(feats));
  return b;
}

inline PaddedBatch collate(const std::vector<SampleRecord>& records, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<const SampleRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  return collate(ptrs, vocab, max_len);
}

}  // namespace vampnet
