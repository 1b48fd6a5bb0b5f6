#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asrpu/error.hpp"
#include "asrpu/hypothesis.hpp"

namespace asrpu {

/// Acoustic output units. Id 0 is the blank.
class TokenTable {
 public:
  TokenTable() = default;
  explicit TokenTable(std::vector<std::string> symbols) : symbols_(std::move(symbols)) { index(); }

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(symbols_.size()); }
  const std::string& symbol(TokenId id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  TokenId id(const std::string& sym) const {
    auto it = ids_.find(sym);
    if (it == ids_.end()) throw InputError("unknown token symbol '" + sym + "'");
    return it->second;
  }
  bool contains(const std::string& sym) const { return ids_.count(sym) != 0; }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }

 private:
  void index() {
    ids_.clear();
    for (std::size_t i = 0; i < symbols_.size(); ++i)
      if (!ids_.emplace(symbols_[i], static_cast<TokenId>(i)).second)
        throw InputError("duplicate token symbol '" + symbols_[i] + "'");
  }

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// One symbol per line, either `symbol` (id = line order) or `symbol id`.
inline TokenTable parse_tokens(std::istream& in) {
  std::vector<std::string> symbols;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string sym;
    if (!(ls >> sym)) continue;
    std::int64_t id = static_cast<std::int64_t>(symbols.size());
    std::string rest;
    if (ls >> rest) {
      try {
        id = std::stoll(rest);
      } catch (const std::exception&) {
        throw InputError("token table line " + std::to_string(lineno) + ": bad id '" + rest + "'");
      }
    }
    if (id < 0 || id > 10'000'000) throw InputError("token table line " + std::to_string(lineno) + ": id out of range");
    if (static_cast<std::size_t>(id) >= symbols.size()) symbols.resize(static_cast<std::size_t>(id) + 1);
    if (!symbols[static_cast<std::size_t>(id)].empty())
      throw InputError("token table line " + std::to_string(lineno) + ": id " + std::to_string(id) + " reused");
    symbols[static_cast<std::size_t>(id)] = sym;
  }
  if (symbols.empty()) throw InputError("token table is empty");
  for (std::size_t i = 0; i < symbols.size(); ++i)
    if (symbols[i].empty()) throw InputError("token table has no symbol for id " + std::to_string(i));
  return TokenTable(std::move(symbols));
}

inline TokenTable load_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open token table '" + path + "'");
  return parse_tokens(in);
}

struct LexiconEntry {
  std::string word;
  std::vector<TokenId> spelling;
};

/// Prefix tree over token spellings. Node 0 is the root. Nodes are numbered
/// in lexicographic order of their spelling, so the tree does not depend on
/// entry order.
class LexiconTrie {
 public:
  struct Node {
    std::vector<std::pair<TokenId, NodeId>> children;  // sorted by token
    std::vector<WordId> words;                          // words spelled to here
    std::int32_t depth = 0;
  };

  LexiconTrie() : nodes_(1) {}

  static LexiconTrie build(const std::vector<LexiconEntry>& entries) {
    LexiconTrie t;
    for (const auto& e : entries) {
      if (e.spelling.empty()) throw InputError("lexicon word '" + e.word + "' has an empty spelling");
      for (auto tok : e.spelling)
        if (tok == kBlank) throw InputError("lexicon word '" + e.word + "' uses the blank token");
      if (!t.word_ids_.count(e.word)) {
        t.word_ids_.emplace(e.word, static_cast<WordId>(t.words_.size()));
        t.words_.push_back(e.word);
      }
    }
    std::vector<std::pair<std::vector<TokenId>, WordId>> sorted;
    for (const auto& e : entries) sorted.emplace_back(e.spelling, t.word_ids_.at(e.word));
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i > 0 && sorted[i] == sorted[i - 1]) {
        t.warnings_.push_back("duplicate lexicon entry for '" + t.words_[static_cast<std::size_t>(sorted[i].second)] +
                              "' ignored");
        continue;
      }
      NodeId node = 0;
      for (auto tok : sorted[i].first) node = t.child_or_insert(node, tok);
      t.nodes_[static_cast<std::size_t>(node)].words.push_back(sorted[i].second);
    }
    return t;
  }

  std::int64_t node_count() const noexcept { return static_cast<std::int64_t>(nodes_.size()); }
  const Node& node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw KernelFault("lexicon node " + std::to_string(id) + " out of range");
    return nodes_[static_cast<std::size_t>(id)];
  }
  NodeId child(NodeId id, TokenId tok) const {
    const auto& c = node(id).children;
    auto it = std::lower_bound(c.begin(), c.end(), std::pair<TokenId, NodeId>{tok, -1});
    return it != c.end() && it->first == tok ? it->second : -1;
  }

  std::int64_t word_count() const noexcept { return static_cast<std::int64_t>(words_.size()); }
  const std::string& word(WordId id) const { return words_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  WordId word_id(const std::string& w) const {
    auto it = word_ids_.find(w);
    return it == word_ids_.end() ? -1 : it->second;
  }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  NodeId child_or_insert(NodeId id, TokenId tok) {
    if (auto c = child(id, tok); c >= 0) return c;
    const auto fresh = static_cast<NodeId>(nodes_.size());
    const auto depth = nodes_[static_cast<std::size_t>(id)].depth + 1;
    nodes_.push_back(Node{{}, {}, depth});
    auto& c = nodes_[static_cast<std::size_t>(id)].children;
    c.insert(std::upper_bound(c.begin(), c.end(), std::pair<TokenId, NodeId>{tok, fresh}), {tok, fresh});
    return fresh;
  }

  std::vector<Node> nodes_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> word_ids_;
  std::vector<std::string> warnings_;
};

/// `word tok1 tok2 ...` per line; `#` starts a comment.
inline std::vector<LexiconEntry> parse_lexicon(std::istream& in, const TokenTable& tokens) {
  std::vector<LexiconEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    LexiconEntry e;
    if (!(ls >> e.word)) continue;
    std::string sym;
    while (ls >> sym) {
      if (!tokens.contains(sym))
        throw InputError("lexicon line " + std::to_string(lineno) + ": unknown token '" + sym + "'");
      e.spelling.push_back(tokens.id(sym));
    }
    if (e.spelling.empty()) throw InputError("lexicon line " + std::to_string(lineno) + ": word without spelling");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<LexiconEntry> load_lexicon(const std::string& path, const TokenTable& tokens) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open lexicon '" + path + "'");
  return parse_lexicon(in, tokens);
}

}  // namespace asrpu
