#pragma once

// Per-sample VCF ingestion: parsing, PASS/genotype filtering, multi-allelic
// expansion, canonical tokens and the eight-channel quality vectors.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vampnet/error.hpp"

namespace vampnet {

inline constexpr std::size_t kNumChannels = 8;

/// Quality channels in their fixed column order.
enum class Channel : std::size_t { GT = 0, DP, DPF, COV_REF, COV_ALT, FRS, GT_CONF, GT_CONF_PERCENTILE };

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames{
    "GT", "DP", "DPF", "COV_REF", "COV_ALT", "FRS", "GT_CONF", "GT_CONF_PERCENTILE"};

inline Channel channel_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumChannels; ++i)
    if (kChannelNames[i] == name) return static_cast<Channel>(i);
  throw ConfigError("unknown channel '" + std::string(name) + "'");
}

using FeatureRow = std::array<double, kNumChannels>;

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool is_acgt(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return c == 'A' || c == 'C' || c == 'G' || c == 'T'; });
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace detail

// ------------------------------------------------------------------ tokens

/// One genetic alteration, written canonically as "pos_REF>ALT".
struct VariantToken {
  long long position = 0;
  std::string ref_allele;
  std::string alt_allele;

  std::string canonical() const { return std::to_string(position) + "_" + ref_allele + ">" + alt_allele; }

  friend bool operator==(const VariantToken&, const VariantToken&) = default;
};

inline VariantToken make_token(long long position, std::string ref, std::string alt) {
  if (ref.empty() || alt.empty()) throw ParseError("variant at " + std::to_string(position) + " has an empty allele");
  if (!detail::is_acgt(ref) || !detail::is_acgt(alt))
    throw ParseError("variant at " + std::to_string(position) + " has non-ACGT alleles " + ref + ">" + alt);
  if (ref == alt) throw ParseError("variant at " + std::to_string(position) + " has REF == ALT (" + ref + ")");
  if (position < 1) throw ParseError("variant position must be >= 1");
  return VariantToken{position, std::move(ref), std::move(alt)};
}

/// Inverse of VariantToken::canonical().
inline VariantToken parse_token(std::string_view canonical) {
  auto us = canonical.find('_');
  auto gt = canonical.find('>');
  if (us == std::string_view::npos || gt == std::string_view::npos || gt < us)
    throw ParseError("malformed variant token '" + std::string(canonical) + "'");
  auto pos = detail::parse_int(canonical.substr(0, us));
  if (!pos) throw ParseError("malformed position in token '" + std::string(canonical) + "'");
  return make_token(*pos, std::string(canonical.substr(us + 1, gt - us - 1)), std::string(canonical.substr(gt + 1)));
}

// ------------------------------------------------------------------ parsing

/// One data row with its string fields preserved.
struct VcfRecord {
  std::size_t line = 0;
  std::string chrom;
  long long pos = 0;
  std::string id;
  std::string ref;
  std::string alt;
  std::string qual;
  std::string filter;
  std::vector<std::string> format_keys;
  std::vector<std::string> sample_values;
  bool pass_flag = false;

  /// FORMAT value for `key`, if that key is present.
  std::optional<std::string> get(std::string_view key) const {
    for (std::size_t i = 0; i < format_keys.size(); ++i)
      if (format_keys[i] == key) return sample_values[i];
    return std::nullopt;
  }
  void set(std::string_view key, std::string value) {
    for (std::size_t i = 0; i < format_keys.size(); ++i)
      if (format_keys[i] == key) {
        sample_values[i] = std::move(value);
        return;
      }
  }

  friend bool operator==(const VcfRecord&, const VcfRecord&) = default;
};

struct VcfFile {
  std::vector<std::string> meta;
  std::string sample_name;
  std::vector<VcfRecord> records;
};

inline VcfFile parse_vcf(std::istream& in, const std::string& source = "<vcf>") {
  VcfFile file;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("##", 0) == 0) {
      file.meta.push_back(line);
      continue;
    }
    if (line[0] == '#') {
      auto cols = detail::split(line, '\t');
      if (cols.size() < 8 || cols[0] != "#CHROM")
        throw ParseError(source + ":" + std::to_string(lineno) + ": malformed #CHROM header");
      if (cols.size() >= 10) file.sample_name = cols[9];
      header_seen = true;
      continue;
    }
    if (!header_seen) throw ParseError(source + ":" + std::to_string(lineno) + ": data row before #CHROM header");
    auto cols = detail::split(line, '\t');
    if (cols.size() < 10)
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected at least 10 columns, found " +
                       std::to_string(cols.size()));
    VcfRecord r;
    r.line = lineno;
    r.chrom = cols[0];
    auto pos = detail::parse_int(cols[1]);
    if (!pos || *pos < 1) throw ParseError(source + ":" + std::to_string(lineno) + ": bad POS '" + cols[1] + "'");
    r.pos = *pos;
    r.id = cols[2];
    r.ref = cols[3];
    r.alt = cols[4];
    r.qual = cols[5];
    r.filter = cols[6];
    r.pass_flag = r.filter == "PASS";
    r.format_keys = detail::split(cols[8], ':');
    r.sample_values = detail::split(cols[9], ':');
    if (r.format_keys.size() != r.sample_values.size())
      throw ParseError(source + ":" + std::to_string(lineno) + ": FORMAT has " + std::to_string(r.format_keys.size()) +
                       " keys but the sample column has " + std::to_string(r.sample_values.size()) + " values");
    file.records.push_back(std::move(r));
  }
  if (!header_seen) throw ParseError(source + ":" + std::to_string(lineno) + ": missing #CHROM header");
  return file;
}

// ------------------------------------------------------------------ filtering

namespace detail {

/// Allele indices of a GT string ("1/2", "0|1", "1"); -1 marks '.'.
inline std::vector<int> genotype_alleles(std::string_view gt, std::size_t line) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&] {
    if (cur == ".")
      out.push_back(-1);
    else {
      auto v = parse_int(cur);
      if (!v || *v < 0) throw ParseError("line " + std::to_string(line) + ": bad GT allele '" + cur + "'");
      out.push_back(static_cast<int>(*v));
    }
    cur.clear();
  };
  for (char c : gt) {
    if (c == '/' || c == '|')
      flush();
    else
      cur += c;
  }
  flush();
  return out;
}

}  // namespace detail

/// Keeps PASS rows carrying at least one called alternate allele. Rows whose
/// genotype is homozygous reference or uncalled (0/0, 0|0, ./., .|.) are
/// dropped. A multi-allelic row yields one bi-allelic record per alternate
/// allele named in GT, in allele order; its GT is rewritten so that allele
/// reads as 1 and every other allele as 0, and COV keeps the reference count
/// plus that allele's count. Applying the filter to its own output is a no-op.
inline std::vector<VcfRecord> filter_variants(const std::vector<VcfRecord>& records) {
  std::vector<VcfRecord> kept;
  for (const auto& r : records) {
    if (!r.pass_flag) continue;
    auto gt = r.get("GT");
    if (!gt) continue;
    auto alleles = detail::genotype_alleles(*gt, r.line);
    std::vector<int> called;
    for (int a : alleles)
      if (a > 0 && std::find(called.begin(), called.end(), a) == called.end()) called.push_back(a);
    if (called.empty()) continue;
    std::sort(called.begin(), called.end());
    auto alts = detail::split(r.alt, ',');
    if (alts.size() == 1) {
      if (called.size() != 1 || called[0] != 1)
        throw ParseError("line " + std::to_string(r.line) + ": GT references allele beyond ALT");
      kept.push_back(r);
      continue;
    }
    std::optional<std::vector<std::string>> cov;
    if (auto c = r.get("COV")) cov = detail::split(*c, ',');
    for (int a : called) {
      if (static_cast<std::size_t>(a) > alts.size())
        throw ParseError("line " + std::to_string(r.line) + ": GT allele " + std::to_string(a) + " beyond ALT list");
      VcfRecord e = r;
      e.alt = alts[a - 1];
      std::string g;
      std::size_t ai = 0;
      for (char c : *gt) {
        if (c == '/' || c == '|') {
          g += c;
          ++ai;
          continue;
        }
        if (g.empty() || g.back() == '/' || g.back() == '|') {
          int v = alleles[ai];
          g += v < 0 ? "." : (v == a ? "1" : "0");
        }
      }
      e.set("GT", g);
      if (cov && cov->size() > static_cast<std::size_t>(a)) e.set("COV", (*cov)[0] + "," + (*cov)[a]);
      kept.push_back(std::move(e));
    }
  }
  return kept;
}

inline VariantToken make_token(const VcfRecord& r) { return make_token(r.pos, r.ref, r.alt); }

// ------------------------------------------------------------------ features

/// Raw eight-channel vector [GT, DP, DPF, COV_REF, COV_ALT, FRS, GT_CONF,
/// GT_CONF_PERCENTILE]. GT encodes 1.0 for homozygous-alternate and 0.5 for
/// heterozygous calls. Absent or "." values read as 0.
inline FeatureRow extract_features(const VcfRecord& r) {
  FeatureRow f{};
  auto numeric = [&](std::string_view key, const std::string& value) {
    if (value.empty() || value == ".") return 0.0;
    auto v = detail::parse_double(value);
    if (!v)
      throw ParseError("line " + std::to_string(r.line) + ": non-numeric " + std::string(key) + " value '" + value + "'");
    return *v;
  };
  if (auto gt = r.get("GT")) {
    auto alleles = detail::genotype_alleles(*gt, r.line);
    std::size_t alt = 0;
    for (int a : alleles) alt += a > 0;
    f[0] = alt == 0 ? 0.0 : (alt == alleles.size() ? 1.0 : 0.5);
  }
  if (auto v = r.get("DP")) f[1] = numeric("DP", *v);
  if (auto v = r.get("DPF")) f[2] = numeric("DPF", *v);
  if (auto v = r.get("COV")) {
    auto parts = detail::split(*v, ',');
    f[3] = numeric("COV", parts[0]);
    if (parts.size() > 1) f[4] = numeric("COV", parts[1]);
  }
  if (auto v = r.get("FRS")) f[5] = numeric("FRS", *v);
  if (auto v = r.get("GT_CONF")) f[6] = numeric("GT_CONF", *v);
  if (auto v = r.get("GT_CONF_PERCENTILE")) f[7] = numeric("GT_CONF_PERCENTILE", *v);
  return f;
}

// ------------------------------------------------------------------ samples

/// One isolate: aligned tokens and feature rows plus its phenotype.
struct SampleRecord {
  std::string sample_id;
  std::vector<VariantToken> tokens;
  std::vector<FeatureRow> features;
  int label = 0;  // 1 = resistant
  std::string drug;

  std::size_t size() const { return tokens.size(); }

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

inline SampleRecord assemble_sample(std::string sample_id, std::vector<VariantToken> tokens,
                                    std::vector<FeatureRow> features, int label, std::string drug) {
  if (tokens.size() != features.size())
    throw ContractError("sample " + sample_id + ": " + std::to_string(tokens.size()) + " tokens but " +
                        std::to_string(features.size()) + " feature rows");
  if (label != 0 && label != 1) throw ContractError("sample " + sample_id + ": label must be 0 or 1");
  return SampleRecord{std::move(sample_id), std::move(tokens), std::move(features), label, std::move(drug)};
}

// ------------------------------------------------------------------ normalisation

/// Per-channel min/max over a training split and its class counts.
struct CohortStats {
  FeatureRow min{};
  FeatureRow max{};
  std::array<std::size_t, 2> class_counts{};

  friend bool operator==(const CohortStats&, const CohortStats&) = default;
};

inline CohortStats fit_normalizer(const std::vector<SampleRecord>& train) {
  if (train.empty()) throw ConfigError("cannot fit a normaliser on an empty training set");
  CohortStats s;
  s.min.fill(std::numeric_limits<double>::infinity());
  s.max.fill(-std::numeric_limits<double>::infinity());
  bool any = false;
  for (const auto& r : train) {
    ++s.class_counts[r.label];
    for (const auto& row : r.features) {
      any = true;
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        s.min[c] = std::min(s.min[c], row[c]);
        s.max[c] = std::max(s.max[c], row[c]);
      }
    }
  }
  if (!any) {
    s.min.fill(0.0);
    s.max.fill(0.0);
  }
  return s;
}

/// Min-max scaling into [0,1]; a constant channel maps to 0 and values
/// outside the fitted range are clamped.
inline FeatureRow apply_normalizer(const CohortStats& s, const FeatureRow& raw) {
  FeatureRow out{};
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const double range = s.max[c] - s.min[c];
    out[c] = range > 0 ? std::clamp((raw[c] - s.min[c]) / range, 0.0, 1.0) : 0.0;
  }
  return out;
}

inline SampleRecord apply_normalizer(const CohortStats& s, SampleRecord r) {
  for (auto& row : r.features) row = apply_normalizer(s, row);
  return r;
}

inline std::vector<SampleRecord> apply_normalizer(const CohortStats& s, std::vector<SampleRecord> rs) {
  for (auto& r : rs) r = apply_normalizer(s, std::move(r));
  return rs;
}

// ------------------------------------------------------------------ phenotypes & directories

struct PhenotypeRow {
  std::string sample_id;
  std::string drug;
  int label = 0;
  std::string quality;
};

/// Reads a `sample_id,drug,label,quality` table. Labels accept 0/1 or S/R.
inline std::vector<PhenotypeRow> parse_phenotypes(std::istream& in, const std::string& source = "<phenotypes>") {
  std::string line;
  std::size_t lineno = 0;
  std::vector<PhenotypeRow> rows;
  if (!std::getline(in, line)) throw ParseError(source + ": empty phenotype table");
  ++lineno;
  auto header = detail::split(detail::trim(line), ',');
  if (header != std::vector<std::string>{"sample_id", "drug", "label", "quality"})
    throw ParseError(source + ":1: header must be sample_id,drug,label,quality");
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    auto cols = detail::split(line, ',');
    if (cols.size() != 4) throw ParseError(source + ":" + std::to_string(lineno) + ": expected 4 columns");
    PhenotypeRow r{cols[0], cols[1], 0, cols[3]};
    if (cols[2] == "1" || cols[2] == "R")
      r.label = 1;
    else if (cols[2] == "0" || cols[2] == "S")
      r.label = 0;
    else
      throw ParseError(source + ":" + std::to_string(lineno) + ": label must be 0/1 or S/R");
    if (r.quality != "HIGH" && r.quality != "MEDIUM" && r.quality != "LOW")
      throw ParseError(source + ":" + std::to_string(lineno) + ": quality must be HIGH, MEDIUM or LOW");
    rows.push_back(std::move(r));
  }
  return rows;
}

struct IngestSummary {
  std::size_t vcf_files = 0;
  std::size_t samples_kept = 0;
  std::size_t dropped_low_quality = 0;
  std::size_t dropped_missing_phenotype = 0;
  std::size_t empty_samples = 0;
  std::size_t unique_variants = 0;
  std::vector<std::string> warnings;
};

/// Tokens and raw features of one parsed file, in source row order.
inline std::pair<std::vector<VariantToken>, std::vector<FeatureRow>> tokens_and_features(const VcfFile& f) {
  std::vector<VariantToken> tokens;
  std::vector<FeatureRow> feats;
  for (const auto& r : filter_variants(f.records)) {
    tokens.push_back(make_token(r));
    feats.push_back(extract_features(r));
  }
  return {std::move(tokens), std::move(feats)};
}

/// Ingests every *.vcf in `dir` (sorted by file name) against the phenotype
/// table for `drug`. Samples are matched by the VCF sample column, falling
/// back to the file stem. Features are raw; normalisation happens per
/// training split.
inline std::vector<SampleRecord> ingest_directory(const std::filesystem::path& dir,
                                                  const std::vector<PhenotypeRow>& phenotypes,
                                                  const std::string& drug, IngestSummary& summary) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("not a readable directory: " + dir.string());
  std::map<std::string, const PhenotypeRow*> pheno;
  for (const auto& p : phenotypes)
    if (p.drug == drug) pheno[p.sample_id] = &p;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".vcf") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<SampleRecord> out;
  std::map<std::string, int> unique;
  for (const auto& path : files) {
    ++summary.vcf_files;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    VcfFile f = parse_vcf(in, path.string());
    const PhenotypeRow* p = nullptr;
    std::string id = f.sample_name;
    if (auto it = pheno.find(id); it != pheno.end()) p = it->second;
    if (!p) {
      id = path.stem().string();
      if (auto it = pheno.find(id); it != pheno.end()) p = it->second;
    }
    if (!p) {
      ++summary.dropped_missing_phenotype;
      summary.warnings.push_back("no " + drug + " phenotype for " + path.filename().string() + "; skipped");
      continue;
    }
    if (p->quality == "LOW") {
      ++summary.dropped_low_quality;
      continue;
    }
    auto [tokens, feats] = tokens_and_features(f);
    if (tokens.empty()) {
      ++summary.empty_samples;
      summary.warnings.push_back("sample " + id + " has no PASS variants; kept with an empty token list");
    }
    for (const auto& t : tokens) unique[t.canonical()] = 1;
    out.push_back(assemble_sample(id, std::move(tokens), std::move(feats), p->label, drug));
  }
  summary.samples_kept = out.size();
  summary.unique_variants = unique.size();
  return out;
}

}  // namespace vampnet
