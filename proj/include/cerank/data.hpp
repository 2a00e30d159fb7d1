#pragma once

// Dataset model and file ingestion.
//
// Train file : "id<TAB>turn1 __eot__ turn2<TAB>response<TAB>label"
// Eval file  : "group_id<TAB>context<TAB>cand1|cand2|...|cand10<TAB>positive_index"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace cerank {

inline constexpr std::string_view kTurnSeparator = "__eot__";

struct DialogueSample {
  std::uint64_t id = 0;
  std::vector<std::string> context;  // ordered turns
  std::string response;
  int label = 0;

  bool operator==(const DialogueSample&) const = default;
};

struct EvalGroup {
  std::uint64_t id = 0;
  std::vector<std::string> context;
  std::vector<std::string> candidates;
  int positive_index = 0;

  bool operator==(const EvalGroup&) const = default;
};

inline std::string join_context(const std::vector<std::string>& turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i) {
      out += ' ';
      out += kTurnSeparator;
      out += ' ';
    }
    out += turns[i];
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_on(std::string_view text,
                                         std::string_view sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + sep.size();
  }
}

inline std::vector<std::string> split_turns(std::string_view field) {
  std::string sep = " ";
  sep += kTurnSeparator;
  sep += ' ';
  auto turns = split_on(field, sep);
  return turns;
}

[[noreturn]] inline void parse_fail(const std::string& path, int line,
                                    const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline std::uint64_t parse_id(const std::string& path, int line,
                              std::string_view field) {
  std::uint64_t id = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), id);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    parse_fail(path, line, "bad id '" + std::string(field) + "'");
  return id;
}

}  // namespace detail

inline std::vector<DialogueSample> load_train(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read train file " + path);
  std::vector<DialogueSample> samples;
  std::unordered_set<std::uint64_t> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_on(line, "\t");
    if (fields.size() != 4)
      detail::parse_fail(path, lineno,
                         "expected 4 tab-separated fields, got " +
                             std::to_string(fields.size()));
    DialogueSample s;
    s.id = detail::parse_id(path, lineno, fields[0]);
    if (!seen.insert(s.id).second)
      detail::parse_fail(path, lineno, "duplicate id " + std::to_string(s.id));
    s.context = detail::split_turns(fields[1]);
    if (s.context.empty() || (s.context.size() == 1 && s.context[0].empty()))
      detail::parse_fail(path, lineno, "empty context");
    s.response = fields[2];
    if (fields[3] == "0") s.label = 0;
    else if (fields[3] == "1") s.label = 1;
    else detail::parse_fail(path, lineno, "label must be 0 or 1, got '" + fields[3] + "'");
    samples.push_back(std::move(s));
  }
  if (samples.empty())
    std::cerr << "warning: train file " << path << " is empty\n";
  return samples;
}

inline void save_train(const std::string& path,
                       std::span<const DialogueSample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write train file " + path);
  for (const auto& s : samples) {
    out << s.id << '\t' << join_context(s.context) << '\t' << s.response
        << '\t' << s.label << '\n';
  }
}

inline std::vector<EvalGroup> load_eval(const std::string& path,
                                        bool allow_short = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read eval file " + path);
  std::vector<EvalGroup> groups;
  std::unordered_set<std::uint64_t> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = detail::split_on(line, "\t");
    if (fields.size() != 4)
      detail::parse_fail(path, lineno,
                         "expected 4 tab-separated fields, got " +
                             std::to_string(fields.size()));
    EvalGroup g;
    g.id = detail::parse_id(path, lineno, fields[0]);
    if (!seen.insert(g.id).second)
      detail::parse_fail(path, lineno, "duplicate group id " + std::to_string(g.id));
    g.context = detail::split_turns(fields[1]);
    if (g.context.empty() || (g.context.size() == 1 && g.context[0].empty()))
      detail::parse_fail(path, lineno, "empty context");
    g.candidates = detail::split_on(fields[2], "|");
    if (g.candidates.size() < 2)
      detail::parse_fail(path, lineno, "need at least 2 candidates");
    if (!allow_short && g.candidates.size() != 10)
      detail::parse_fail(path, lineno,
                         "expected 10 candidates, got " +
                             std::to_string(g.candidates.size()) +
                             " (use --allow-short to accept)");
    int pos = -1;
    try {
      pos = std::stoi(fields[3]);
    } catch (const std::exception&) {
      detail::parse_fail(path, lineno, "bad positive index '" + fields[3] + "'");
    }
    if (pos < 0 || pos >= static_cast<int>(g.candidates.size()))
      detail::parse_fail(path, lineno,
                         "positive index " + std::to_string(pos) +
                             " outside candidate list of size " +
                             std::to_string(g.candidates.size()));
    g.positive_index = pos;
    groups.push_back(std::move(g));
  }
  if (groups.empty())
    std::cerr << "warning: eval file " << path << " is empty\n";
  return groups;
}

inline void save_eval(const std::string& path, std::span<const EvalGroup> groups) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write eval file " + path);
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      if (c.find('|') != std::string::npos || c.find('\t') != std::string::npos)
        throw std::runtime_error("candidate text may not contain '|' or tab");
    }
    out << g.id << '\t' << join_context(g.context) << '\t';
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      if (i) out << '|';
      out << g.candidates[i];
    }
    out << '\t' << g.positive_index << '\n';
  }
}

}  // namespace cerank
