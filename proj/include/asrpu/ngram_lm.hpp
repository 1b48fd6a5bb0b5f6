#pragma once

#include <algorithm>
#include <cmath>
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

/// Back-off n-gram model read from ARPA text. Scores are log10.
class NGramLM {
 public:
  using WordIndex = std::int32_t;
  static constexpr double kFloor = -99.0;

  struct Entry {
    double logp = 0.0;
    double backoff = 0.0;
  };

  struct Lookup {
    double score = 0.0;
    LmStateId state = 0;
    int backoff_depth = 0;  // contexts shortened before the word was found
  };

  NGramLM() { intern({}); }

  int order() const noexcept { return order_; }
  std::int64_t vocab_size() const noexcept { return static_cast<std::int64_t>(vocab_.size()); }
  const std::string& word(WordIndex w) const { return vocab_.at(static_cast<std::size_t>(w)); }
  WordIndex index(const std::string& w) const {
    auto it = vocab_ids_.find(w);
    return it == vocab_ids_.end() ? -1 : it->second;
  }
  WordIndex unk() const noexcept { return index("<unk>"); }
  std::int64_t entry_count() const noexcept { return static_cast<std::int64_t>(entries_.size()); }

  /// Stored n-gram (context words followed by the predicted word).
  const Entry* find(const std::vector<WordIndex>& ngram) const {
    auto it = entries_.find(ngram);
    return it == entries_.end() ? nullptr : &it->second;
  }

  /// Sentence-start context if the model has <s>, else the empty context.
  LmStateId initial_state() {
    const auto s = index("<s>");
    return s >= 0 ? intern({s}) : intern({});
  }

  const std::vector<WordIndex>& context(LmStateId state) const { return states_.at(static_cast<std::size_t>(state)); }
  std::int64_t state_count() const noexcept { return static_cast<std::int64_t>(states_.size()); }

  /// Standard back-off evaluation of `w` after the context of `state`. A word
  /// outside the vocabulary (w < 0) is scored as <unk>, or at the floor when
  /// the model has none.
  Lookup lookup(LmStateId state, WordIndex w) {
    if (w < 0) w = unk();
    std::vector<WordIndex> ctx = context(state);
    Lookup out;
    if (w < 0) {
      out.score = kFloor;
      out.state = intern({});
      return out;
    }
    while (true) {
      std::vector<WordIndex> key = ctx;
      key.push_back(w);
      if (const auto* e = find(key)) {
        out.score += e->logp;
        break;
      }
      if (ctx.empty()) {
        out.score += kFloor;
        break;
      }
      if (const auto* c = find(ctx)) out.score += c->backoff;
      ctx.erase(ctx.begin());
      ++out.backoff_depth;
    }
    std::vector<WordIndex> next = context(state);
    next.push_back(w);
    const auto keep = static_cast<std::size_t>(std::max(order_ - 1, 0));
    if (next.size() > keep) next.erase(next.begin(), next.end() - static_cast<std::ptrdiff_t>(keep));
    out.state = intern(next);
    return out;
  }

  /// Builds a model directly (tests and generators).
  void add(const std::vector<std::string>& words, double logp, double backoff = 0.0) {
    if (words.empty()) throw InputError("empty n-gram");
    if (logp > 0.0) throw InputError("n-gram log probability above 0");
    std::vector<WordIndex> key;
    for (const auto& w : words) key.push_back(add_word(w));
    order_ = std::max(order_, static_cast<int>(words.size()));
    entries_[key] = {logp, backoff};
  }

  static NGramLM parse_arpa(std::istream& in) {
    NGramLM lm;
    std::string line;
    int lineno = 0;
    int section = -1;  // 0 = \data\, n = \n-grams:
    std::vector<std::int64_t> declared;
    std::vector<std::int64_t> seen;
    bool ended = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      line = line.substr(first);
      const auto where = "ARPA line " + std::to_string(lineno) + ": ";
      if (line == "\\data\\") {
        section = 0;
        continue;
      }
      if (line == "\\end\\") {
        ended = true;
        break;
      }
      if (line.front() == '\\') {
        int n = 0;
        if (std::sscanf(line.c_str(), "\\%d-grams:", &n) != 1 || n <= 0) throw InputError(where + "bad section header '" + line + "'");
        section = n;
        if (seen.size() < static_cast<std::size_t>(n)) seen.resize(static_cast<std::size_t>(n), 0);
        continue;
      }
      if (section < 0) throw InputError(where + "content before \\data\\");
      if (section == 0) {
        int n = 0;
        long long count = 0;
        if (std::sscanf(line.c_str(), "ngram %d=%lld", &n, &count) != 2 || n <= 0 || count < 0)
          throw InputError(where + "bad count line '" + line + "'");
        if (declared.size() < static_cast<std::size_t>(n)) declared.resize(static_cast<std::size_t>(n), 0);
        declared[static_cast<std::size_t>(n - 1)] = count;
        continue;
      }
      std::istringstream ls(line);
      std::vector<std::string> fields;
      std::string f;
      while (ls >> f) fields.push_back(f);
      const auto n = static_cast<std::size_t>(section);
      if (fields.size() != n + 1 && fields.size() != n + 2) throw InputError(where + "expected " + std::to_string(n) + " words");
      double logp = 0.0, bo = 0.0;
      try {
        logp = std::stod(fields[0]);
        if (fields.size() == n + 2) bo = std::stod(fields.back());
      } catch (const std::exception&) {
        throw InputError(where + "bad number");
      }
      if (logp > 0.0) throw InputError(where + "log probability above 0");
      lm.add(std::vector<std::string>(fields.begin() + 1, fields.begin() + 1 + static_cast<std::ptrdiff_t>(n)), logp, bo);
      ++seen[n - 1];
    }
    if (section < 0) throw InputError("ARPA file has no \\data\\ section");
    if (!ended) throw InputError("ARPA file has no \\end\\ marker");
    for (std::size_t i = 0; i < declared.size(); ++i)
      if ((i < seen.size() ? seen[i] : 0) != declared[i])
        throw InputError("ARPA file declares " + std::to_string(declared[i]) + " " + std::to_string(i + 1) +
                         "-grams but lists " + std::to_string(i < seen.size() ? seen[i] : 0));
    lm.order_ = std::max<int>(lm.order_, static_cast<int>(declared.size()));
    return lm;
  }

  static NGramLM load_arpa(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open language model '" + path + "'");
    return parse_arpa(in);
  }

  /// Writes the model back as ARPA text (n-grams grouped by order, sorted).
  void write_arpa(std::ostream& os) const {
    std::vector<std::vector<std::pair<std::vector<WordIndex>, Entry>>> by_order(static_cast<std::size_t>(order_));
    for (const auto& [k, e] : entries_) by_order[k.size() - 1].emplace_back(k, e);
    os << "\\data\\\n";
    for (int n = 1; n <= order_; ++n) os << "ngram " << n << '=' << by_order[static_cast<std::size_t>(n - 1)].size() << '\n';
    for (int n = 1; n <= order_; ++n) {
      auto& list = by_order[static_cast<std::size_t>(n - 1)];
      std::sort(list.begin(), list.end(), [&](const auto& a, const auto& b) { return spell(a.first) < spell(b.first); });
      os << "\n\\" << n << "-grams:\n";
      for (const auto& [k, e] : list) {
        os << e.logp << '\t' << spell(k);
        if (e.backoff != 0.0) os << '\t' << e.backoff;
        os << '\n';
      }
    }
    os << "\n\\end\\\n";
  }

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<WordIndex>& k) const noexcept {
      std::uint64_t h = kFnvOffset;
      for (auto w : k) h = fnv1a_mix(h, static_cast<std::uint32_t>(w), 4);
      return static_cast<std::size_t>(h);
    }
  };

  std::string spell(const std::vector<WordIndex>& k) const {
    std::string s;
    for (std::size_t i = 0; i < k.size(); ++i) s += (i ? " " : "") + word(k[i]);
    return s;
  }

  WordIndex add_word(const std::string& w) {
    auto [it, fresh] = vocab_ids_.emplace(w, static_cast<WordIndex>(vocab_.size()));
    if (fresh) vocab_.push_back(w);
    return it->second;
  }

  LmStateId intern(const std::vector<WordIndex>& ctx) {
    auto [it, fresh] = state_ids_.emplace(ctx, static_cast<LmStateId>(states_.size()));
    if (fresh) states_.push_back(ctx);
    return it->second;
  }

  int order_ = 0;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, WordIndex> vocab_ids_;
  std::unordered_map<std::vector<WordIndex>, Entry, KeyHash> entries_;
  std::vector<std::vector<WordIndex>> states_;
  std::unordered_map<std::vector<WordIndex>, LmStateId, KeyHash> state_ids_;
};

}  // namespace asrpu
