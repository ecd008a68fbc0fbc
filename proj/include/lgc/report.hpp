// SPDX-License-Identifier: Apache-2.0
/**
 * @file   report.hpp
 * @brief  Plain-text and CSV rendering for the command-line tool, and the
 *         published parameter totals the budget model is compared against.
 */
#pragma once

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lgc/gradcheck.hpp"
#include "lgc/model.hpp"
#include "lgc/scheme.hpp"

namespace lgc {

enum class OutputFormat { Text, Csv };

inline OutputFormat parse_format(const std::string &s) {
  if (s == "text")
    return OutputFormat::Text;
  if (s == "csv")
    return OutputFormat::Csv;
  throw Error("unknown output format '" + s + "' (expected text or csv)");
}

/// Totals as printed for the 6-class (face expression) and 10-class
/// (CIFAR-10) experiments.
struct PublishedTotal {
  std::string scheme;
  bool shortcut;
  std::int64_t classes6;
  std::int64_t classes10;
};

inline const std::vector<PublishedTotal> &published_totals() {
  static const std::vector<PublishedTotal> rows = {
      {"Uniform-4", false, 268480, 269504},
      {"Uniform-8", false, 157888, 158912},
      {"Uniform-16", false, 102592, 103616},
      {"Uniform-4", true, 268480, 269504},
      {"Uniform-8", true, 157888, 158912},
      {"Uniform-16", true, 102592, 103616},
      {"Logarithmic-4", true, 277696, 278720},
      {"Logarithmic-8", true, 215236, 216260},
      {"Logarithmic-16", true, 190036, 191060},
      {"Baseline", false, 543616, 544640},
  };
  return rows;
}

/// Published baseline totals exceed the bias-free count by one extra
/// 5x5x3x64 block; every grouped row matches exactly.
inline constexpr std::int64_t kBaselineDelta = 4800;

enum class MatchFlag { Match, Mismatch, DocumentedDelta };

inline const char *to_string(MatchFlag f) {
  switch (f) {
  case MatchFlag::Match:
    return "MATCH";
  case MatchFlag::Mismatch:
    return "MISMATCH";
  case MatchFlag::DocumentedDelta:
    return "DOCUMENTED-DELTA";
  }
  return "?";
}

struct TableRow {
  std::string label;
  std::int64_t computed = 0;
  std::int64_t published = 0;
  MatchFlag flag = MatchFlag::Mismatch;
};

inline std::vector<TableRow> reproduce_tables(int classes) {
  if (classes != 6 && classes != 10)
    throw Error("published tables exist for 6 or 10 classes only");
  std::vector<TableRow> out;
  for (const auto &p : published_totals()) {
    NetworkSpec spec = cifar_spec(p.scheme, p.shortcut);
    spec.num_classes = classes;
    TableRow r{p.scheme == "Baseline" ? "Baseline" : spec.label(),
               count_parameters(spec).total,
               classes == 6 ? p.classes6 : p.classes10, MatchFlag::Mismatch};
    if (r.computed == r.published)
      r.flag = MatchFlag::Match;
    else if (p.scheme == "Baseline" && r.published - r.computed == kBaselineDelta)
      r.flag = MatchFlag::DocumentedDelta;
    out.push_back(r);
  }
  return out;
}

namespace detail {

inline std::string thousands(std::int64_t v) {
  std::string s = std::to_string(v < 0 ? -v : v);
  for (int i = int(s.size()) - 3; i > 0; i -= 3)
    s.insert(std::size_t(i), ",");
  return v < 0 ? "-" + s : s;
}

} // namespace detail

inline std::string render_tables(const std::vector<TableRow> &rows,
                                 OutputFormat fmt) {
  std::ostringstream os;
  if (fmt == OutputFormat::Csv) {
    os << "scheme,computed,published,flag\n";
    for (const auto &r : rows)
      os << r.label << ',' << r.computed << ',' << r.published << ','
         << to_string(r.flag) << '\n';
    return os.str();
  }
  os << std::left << std::setw(28) << "Scheme" << std::right << std::setw(12)
     << "Computed" << std::setw(12) << "Published" << "  Flag\n";
  for (const auto &r : rows) {
    os << std::left << std::setw(28) << r.label << std::right << std::setw(12)
       << detail::thousands(r.computed) << std::setw(12)
       << detail::thousands(r.published) << "  " << to_string(r.flag);
    if (r.flag == MatchFlag::DocumentedDelta)
      os << " (+" << detail::thousands(r.published - r.computed) << ")";
    os << '\n';
  }
  return os.str();
}

inline std::string render_plan(const SchemeTable &t) {
  std::string out = serialize(t);
  if (has_corrected_array(t.name))
    out += "# note: the printed layer-2 array has 15 entries summing to 124; "
           "this 16-entry array reproduces the published totals 190,036 and "
           "191,060\n";
  return out;
}

inline std::string render_plan_csv(const SchemeTable &t) {
  std::ostringstream os;
  os << "scheme,layer,family,channels,group_count,sizes\n";
  for (const auto &[idx, s] : t.per_layer)
    os << t.name << ',' << idx << ',' << to_string(s.family) << ','
       << s.channels << ',' << s.group_count << ",\"" << join_sizes(s.sizes)
       << "\"\n";
  return os.str();
}

inline std::string render_budget(const NetworkSpec &spec,
                                 const ParameterBudget &b, OutputFormat fmt) {
  std::ostringstream os;
  if (fmt == OutputFormat::Csv) {
    os << "layer,weights\n";
    for (const auto &[name, n] : b.per_layer)
      os << name << ',' << n << '\n';
    os << "total," << b.total << '\n';
    return os.str();
  }
  os << "network: " << spec.label() << ", " << spec.num_classes
     << " classes\n";
  for (const auto &[name, n] : b.per_layer)
    os << std::left << std::setw(20) << name << std::right << std::setw(10)
       << detail::thousands(n) << '\n';
  os << std::left << std::setw(20) << "total" << std::right << std::setw(10)
     << detail::thousands(b.total) << '\n';
  return os.str();
}

inline std::string render_report(const std::vector<ReportRow> &rows,
                                 OutputFormat fmt) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  if (fmt == OutputFormat::Csv) {
    os << "scheme,total_parameters,accuracy,accuracy_drop\n";
    for (const auto &r : rows) {
      os << r.name << ',' << r.total << ',';
      if (r.accuracy)
        os << *r.accuracy;
      os << ',';
      if (r.drop)
        os << *r.drop;
      os << '\n';
    }
    return os.str();
  }
  os << std::left << std::setw(28) << "Scheme" << std::right << std::setw(12)
     << "Parameters" << std::setw(10) << "Acc (%)" << std::setw(10)
     << "Drop (%)" << '\n';
  for (const auto &r : rows) {
    os << std::left << std::setw(28) << r.name << std::right << std::setw(12)
       << detail::thousands(r.total) << std::setw(10);
    if (r.accuracy)
      os << *r.accuracy;
    else
      os << "-";
    os << std::setw(10);
    if (r.drop)
      os << *r.drop;
    else
      os << "-";
    os << '\n';
  }
  return os.str();
}

inline std::string render_gradcheck(const std::vector<GradCheckResult> &rs,
                                    double tolerance, OutputFormat fmt) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  if (fmt == OutputFormat::Csv) {
    os << "op,worst_rel_error,worst_at,checked,skipped,passed\n";
    for (const auto &r : rs)
      os << r.name << ',' << r.worst_rel_error << ',' << r.worst_at << ','
         << r.checked << ',' << r.skipped << ',' << (r.passed ? 1 : 0) << '\n';
    return os.str();
  }
  for (const auto &r : rs)
    os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(26)
       << r.name << " worst rel err " << r.worst_rel_error << " at "
       << r.worst_at << " (" << r.checked << " checked, " << r.skipped
       << " skipped)\n";
  os << "tolerance " << tolerance << '\n';
  return os.str();
}

} // namespace lgc
