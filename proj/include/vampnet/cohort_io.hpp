#pragma once

// The `vampnet-cohort/1` interchange format: one header line, then one
// tab-separated line per sample holding id, label, token count N, the N
// canonical tokens and the N*8 feature values. Doubles are written in
// shortest round-trip form, so reading a written cohort is bit-exact.

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "vampnet/vcf.hpp"

namespace vampnet {

inline constexpr std::string_view kCohortSchema = "vampnet-cohort/1";

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline double parse_double_exact(std::string_view s, const std::string& where) {
  auto v = detail::parse_double(s);
  if (!v) throw ParseError(where + ": bad number '" + std::string(s) + "'");
  return *v;
}

inline void write_cohort(std::ostream& out, const std::vector<SampleRecord>& cohort) {
  out << kCohortSchema;
  if (!cohort.empty() && !cohort.front().drug.empty()) out << "\tdrug=" << cohort.front().drug;
  out << '\n';
  for (const auto& r : cohort) {
    out << r.sample_id << '\t' << r.label << '\t' << r.tokens.size();
    for (const auto& t : r.tokens) out << '\t' << t.canonical();
    for (const auto& row : r.features)
      for (double v : row) out << '\t' << format_double(v);
    out << '\n';
  }
}

inline std::vector<SampleRecord> read_cohort(std::istream& in, const std::string& source = "<cohort>") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty cohort file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto head = detail::split(line, '\t');
  if (head[0] != kCohortSchema) throw ParseError(source + ":1: expected schema header " + std::string(kCohortSchema));
  std::string drug;
  for (std::size_t i = 1; i < head.size(); ++i)
    if (head[i].rfind("drug=", 0) == 0) drug = head[i].substr(5);
  std::vector<SampleRecord> cohort;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto cols = detail::split(line, '\t');
    if (cols.size() < 3) throw ParseError(where + ": truncated sample line");
    auto label = detail::parse_int(cols[1]);
    auto n = detail::parse_int(cols[2]);
    if (!label || !n || *n < 0) throw ParseError(where + ": bad label or token count");
    const std::size_t N = static_cast<std::size_t>(*n);
    if (cols.size() != 3 + N + N * kNumChannels)
      throw ParseError(where + ": expected " + std::to_string(3 + N + N * kNumChannels) + " fields, found " +
                       std::to_string(cols.size()));
    std::vector<VariantToken> tokens;
    tokens.reserve(N);
    for (std::size_t i = 0; i < N; ++i) tokens.push_back(parse_token(cols[3 + i]));
    std::vector<FeatureRow> feats(N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < kNumChannels; ++c)
        feats[i][c] = parse_double_exact(cols[3 + N + i * kNumChannels + c], where);
    if (*label != 0 && *label != 1) throw ParseError(where + ": label must be 0 or 1");
    cohort.push_back(assemble_sample(cols[0], std::move(tokens), std::move(feats), static_cast<int>(*label), drug));
  }
  return cohort;
}

}  // namespace vampnet
