// SPDX-License-Identifier: Apache-2.0
/**
 * @file   scheme.hpp
 * @brief  Filter-group size arrays for uniform and logarithmic grouping.
 *
 * A group size array g partitions the c channels of a grouped layer into n
 * contiguous blocks. Logarithmic grouping halves the block width from one
 * group to the next, [c/2, c/4, ..., c/2^(n-1), c/2^(n-1)]. When n is too
 * large for that form (c/2^(n-1) < 1) groups are split in two until n groups
 * exist. The shallow-network tables (Logarithmic-4/8/16) are hardcoded
 * because the selection of which group to split is not recoverable from the
 * published arrays alone.
 *
 * Note: the published Logarithmic-16 layer-2 array has 15 entries summing to
 * 124. The array used here, [32,16,16,8,8,8,8,8,4,4,4,4,4,2,1,1], is the
 * 16-entry correction whose parameter count reproduces the published network
 * totals (190,036 and 191,060).
 */
#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lgc/error.hpp"

namespace lgc {

enum class SchemeFamily { None, Uniform, Logarithmic };

inline std::string_view to_string(SchemeFamily f) {
  switch (f) {
  case SchemeFamily::None:
    return "None";
  case SchemeFamily::Uniform:
    return "Uniform";
  case SchemeFamily::Logarithmic:
    return "Logarithmic";
  }
  return "?";
}

inline SchemeFamily parse_family(std::string_view s) {
  if (s == "None")
    return SchemeFamily::None;
  if (s == "Uniform")
    return SchemeFamily::Uniform;
  if (s == "Logarithmic")
    return SchemeFamily::Logarithmic;
  throw InvalidSchemeError("unknown scheme family '" + std::string(s) + "'");
}

struct GroupScheme {
  SchemeFamily family = SchemeFamily::None;
  int channels = 0;
  int group_count = 0;
  std::vector<int> sizes;

  friend bool operator==(const GroupScheme &, const GroupScheme &) = default;
};

/// Throws InvalidSchemeError describing the first violated invariant.
inline void validate(const GroupScheme &s) {
  auto fail = [&](const std::string &what) {
    throw InvalidSchemeError("group scheme (c=" + std::to_string(s.channels) +
                             ", n=" + std::to_string(s.group_count) +
                             "): " + what);
  };
  if (s.channels <= 0 || s.group_count <= 0)
    fail("channels and group count must be positive");
  if (static_cast<int>(s.sizes.size()) != s.group_count)
    fail("array length differs from group count");
  if (std::any_of(s.sizes.begin(), s.sizes.end(), [](int g) { return g <= 0; }))
    fail("group sizes must be positive");
  if (std::accumulate(s.sizes.begin(), s.sizes.end(), 0) != s.channels)
    fail("group sizes do not sum to the channel count");
  if (!std::is_sorted(s.sizes.begin(), s.sizes.end(), std::greater<>{}))
    fail("group sizes must be non-increasing");
  switch (s.family) {
  case SchemeFamily::None:
    if (s.group_count != 1)
      fail("ungrouped layer must have a single group");
    break;
  case SchemeFamily::Uniform:
    if (s.channels % s.group_count != 0 ||
        std::any_of(s.sizes.begin(), s.sizes.end(),
                    [&](int g) { return g != s.channels / s.group_count; }))
      fail("uniform groups must all equal channels / group_count");
    break;
  case SchemeFamily::Logarithmic:
    break;
  }
}

namespace detail {

inline std::vector<int> canonical_log_sizes(int channels, int group_count) {
  // Table entries that go beyond the pure logarithmic form, or are printed
  // explicitly; (128, 16) is the corrected 16-entry array.
  struct Entry {
    int c, n;
    std::vector<int> g;
  };
  static const std::vector<Entry> table = {
      {128, 4, {64, 32, 16, 16}},
      {128, 8, {64, 32, 16, 8, 4, 2, 1, 1}},
      {128, 16, {32, 16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 4, 4, 2, 1, 1}},
      {256, 2, {128, 128}},
      {256, 4, {128, 64, 32, 32}},
      {256, 8, {128, 64, 32, 16, 8, 4, 2, 2}},
  };
  for (const auto &e : table)
    if (e.c == channels && e.n == group_count)
      return e.g;
  return {};
}

inline std::vector<int> pure_log_sizes(int channels, int group_count) {
  std::vector<int> g;
  g.reserve(group_count);
  for (int i = 1; i < group_count; ++i)
    g.push_back(channels >> i);
  if (group_count == 1)
    g.push_back(channels);
  else
    g.push_back(g.back());
  return g;
}

} // namespace detail

/// Largest n for which the pure logarithmic array has no sub-unit group.
inline int max_pure_log_groups(int channels) {
  return std::countr_zero(static_cast<unsigned>(channels)) + 1;
}

/// Logarithmic group size array for a layer with `channels` in and out.
inline std::vector<int> log_group_sizes(int channels, int group_count) {
  if (channels <= 0 || !std::has_single_bit(static_cast<unsigned>(channels)))
    throw UnsupportedChannelsError("logarithmic grouping needs a power-of-two "
                                   "channel count, got " +
                                   std::to_string(channels));
  if (group_count < 1 || group_count > channels)
    throw InvalidSchemeError("group count " + std::to_string(group_count) +
                             " outside [1, " + std::to_string(channels) + "]");

  if (group_count <= max_pure_log_groups(channels))
    return detail::pure_log_sizes(channels, group_count);

  if (auto g = detail::canonical_log_sizes(channels, group_count); !g.empty())
    return g;

  // Fallback: split the largest group (earliest on ties) in half until n
  // groups exist. Arrays stay sorted descending so the earliest largest
  // group is always the front.
  auto g = detail::pure_log_sizes(channels, max_pure_log_groups(channels));
  while (static_cast<int>(g.size()) < group_count) {
    const int half = g.front() / 2;
    g.front() = half;
    g.insert(g.begin() + 1, half);
    std::stable_sort(g.begin(), g.end(), std::greater<>{});
  }
  return g;
}

inline std::vector<int> uniform_group_sizes(int channels, int group_count) {
  if (channels <= 0 || group_count <= 0 || channels % group_count != 0)
    throw InvalidSchemeError("cannot split " + std::to_string(channels) +
                             " channels into " + std::to_string(group_count) +
                             " equal groups");
  return std::vector<int>(group_count, channels / group_count);
}

inline GroupScheme make_scheme(SchemeFamily family, int channels,
                               int group_count) {
  GroupScheme s{family, channels, group_count, {}};
  switch (family) {
  case SchemeFamily::None:
    if (group_count != 1)
      throw InvalidSchemeError("ungrouped layer must have a single group");
    s.sizes = {channels};
    break;
  case SchemeFamily::Uniform:
    s.sizes = uniform_group_sizes(channels, group_count);
    break;
  case SchemeFamily::Logarithmic:
    s.sizes = log_group_sizes(channels, group_count);
    break;
  }
  validate(s);
  return s;
}

/// Grouping of the two grouped layers (2 and 3) of the shallow network.
struct SchemeTable {
  std::string name;
  std::map<int, GroupScheme> per_layer;

  const GroupScheme &layer(int index) const { return per_layer.at(index); }
  friend bool operator==(const SchemeTable &, const SchemeTable &) = default;
};

inline void validate(const SchemeTable &t) {
  for (const auto &[idx, s] : t.per_layer)
    validate(s);
  if (t.per_layer.count(2) && t.per_layer.count(3)) {
    const auto &l2 = t.per_layer.at(2);
    const auto &l3 = t.per_layer.at(3);
    if (l2.family != SchemeFamily::None &&
        l3.group_count * 2 != l2.group_count)
      throw InvalidSchemeError(t.name +
                               ": layer 3 must use half the groups of layer 2");
  }
}

inline const std::vector<std::string> &canonical_scheme_names() {
  static const std::vector<std::string> names = {
      "Uniform-4",      "Uniform-8",      "Uniform-16", "Logarithmic-4",
      "Logarithmic-8", "Logarithmic-16", "Baseline"};
  return names;
}

/// True for the scheme whose layer-2 array is a corrected reading of the
/// published table.
inline bool has_corrected_array(const std::string &name) {
  return name == "Logarithmic-16";
}

/// Scheme tables for layer 2 (128 channels) and layer 3 (256 channels).
inline SchemeTable canonical_scheme_table(const std::string &name) {
  constexpr int c2 = 128, c3 = 256;
  SchemeTable t{name, {}};
  if (name == "Baseline") {
    t.per_layer[2] = make_scheme(SchemeFamily::None, c2, 1);
    t.per_layer[3] = make_scheme(SchemeFamily::None, c3, 1);
    return t;
  }
  const auto dash = name.find('-');
  if (dash == std::string::npos)
    throw UnknownSchemeError("unknown scheme '" + name + "'");
  const std::string prefix = name.substr(0, dash);
  const std::string suffix = name.substr(dash + 1);
  SchemeFamily family;
  if (prefix == "Uniform")
    family = SchemeFamily::Uniform;
  else if (prefix == "Logarithmic")
    family = SchemeFamily::Logarithmic;
  else
    throw UnknownSchemeError("unknown scheme '" + name + "'");
  if (suffix != "4" && suffix != "8" && suffix != "16")
    throw UnknownSchemeError("unknown scheme '" + name + "'");
  const int n = std::stoi(suffix);
  t.per_layer[2] = make_scheme(family, c2, n);
  t.per_layer[3] = make_scheme(family, c3, n / 2);
  validate(t);
  return t;
}

inline std::string join_sizes(const std::vector<int> &g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i)
      out += ',';
    out += std::to_string(g[i]);
  }
  return out;
}

/// Key/value text form emitted by `lgc plan`.
///
///     scheme: Logarithmic-8
///     layer2.family: Logarithmic
///     layer2.channels: 128
///     layer2.group_count: 8
///     layer2.sizes: 64,32,16,8,4,2,1,1
///     ...
inline std::string serialize(const SchemeTable &t) {
  std::ostringstream os;
  os << "scheme: " << t.name << '\n';
  for (const auto &[idx, s] : t.per_layer) {
    const std::string key = "layer" + std::to_string(idx);
    os << key << ".family: " << to_string(s.family) << '\n';
    os << key << ".channels: " << s.channels << '\n';
    os << key << ".group_count: " << s.group_count << '\n';
    os << key << ".sizes: " << join_sizes(s.sizes) << '\n';
  }
  return os.str();
}

inline SchemeTable parse_scheme_table(std::string_view text) {
  SchemeTable t;
  std::istringstream is{std::string(text)};
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#')
      continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw InvalidSchemeError("malformed scheme line '" + line + "'");
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 1));
    if (key == "scheme") {
      t.name = value;
      continue;
    }
    if (key.rfind("layer", 0) != 0 || key.find('.') == std::string::npos)
      continue; // unknown keys (e.g. notes) are ignored
    const auto dot = key.find('.');
    const int idx = std::stoi(key.substr(5, dot - 5));
    const std::string field = key.substr(dot + 1);
    auto &s = t.per_layer[idx];
    if (field == "family") {
      s.family = parse_family(value);
    } else if (field == "channels") {
      s.channels = std::stoi(value);
    } else if (field == "group_count") {
      s.group_count = std::stoi(value);
    } else if (field == "sizes") {
      s.sizes.clear();
      std::istringstream vs(value);
      std::string item;
      while (std::getline(vs, item, ','))
        s.sizes.push_back(std::stoi(trim(item)));
    }
  }
  validate(t);
  return t;
}

} // namespace lgc
