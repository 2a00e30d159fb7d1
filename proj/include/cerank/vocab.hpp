#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cerank {

// Token table with dense ids. Ids 0..2 are reserved and never reassigned.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;

  Vocabulary() {
    add("<pad>");
    add("<unk>");
    add("<bos>");
  }

  int add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_token_.size());
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
  }

  int id(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const { return id_to_token_.at(id); }
  int size() const { return static_cast<int>(id_to_token_.size()); }

  // Lines "token\tid", sorted by token.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("vocab: cannot write " + path);
    std::vector<std::pair<std::string, int>> rows;
    rows.reserve(token_to_id_.size());
    for (const auto& [tok, id] : token_to_id_) rows.emplace_back(tok, id);
    std::sort(rows.begin(), rows.end());
    for (const auto& [tok, id] : rows) out << tok << '\t' << id << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("vocab: cannot read " + path);
    std::vector<std::pair<int, std::string>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error("vocab: " + path + ":" +
                                 std::to_string(lineno) + ": missing tab");
      rows.emplace_back(std::stoi(line.substr(tab + 1)), line.substr(0, tab));
    }
    std::sort(rows.begin(), rows.end());
    Vocabulary v;
    for (const auto& [id, tok] : rows) {
      if (id < 3) {
        if (v.token(id) != tok)
          throw std::runtime_error("vocab: reserved id " + std::to_string(id) +
                                   " bound to '" + tok + "'");
        continue;
      }
      if (id != v.size())
        throw std::runtime_error("vocab: ids not dense at id " +
                                 std::to_string(id));
      v.add(tok);
    }
    return v;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

// Lowercased whitespace split, unknown tokens to <unk>, <bos> prepended,
// result truncated to max_seq_len.
inline std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab,
                                 int max_seq_len) {
  std::vector<int> ids;
  ids.push_back(Vocabulary::kBos);
  for (const auto& tok : split_whitespace(to_lower(text))) {
    if (static_cast<int>(ids.size()) >= max_seq_len) break;
    ids.push_back(vocab.id(tok));
  }
  if (static_cast<int>(ids.size()) > max_seq_len) ids.resize(max_seq_len);
  return ids;
}

}  // namespace cerank
