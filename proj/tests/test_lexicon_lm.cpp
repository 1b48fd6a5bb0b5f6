#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "asrpu/asrpu.hpp"

using namespace asrpu;

namespace {

TokenTable letters() { return TokenTable({"<b>", "a", "c", "r", "t", "s", "e"}); }

std::vector<LexiconEntry> lex(const std::string& text) {
  std::istringstream in(text);
  return parse_lexicon(in, letters());
}

NGramLM arpa(const std::string& text) {
  std::istringstream in(text);
  return NGramLM::parse_arpa(in);
}

const char* kBigram =
    "\\data\\\n"
    "ngram 1=4\n"
    "ngram 2=1\n"
    "\n\\1-grams:\n"
    "-99 <s> -0.3\n"
    "-1.0 the -0.3\n"
    "-1.2 cat\n"
    "-1.5 <unk>\n"
    "\n\\2-grams:\n"
    "-0.5 the cat\n"
    "\n\\end\\\n";

}  // namespace

TEST(Trie, CatCar) {
  const auto t = LexiconTrie::build(lex("cat c a t\ncar c a r\n"));
  EXPECT_EQ(t.node_count(), 5);
  const auto tok = letters();
  const auto c = t.child(0, tok.id("c"));
  const auto a = t.child(c, tok.id("a"));
  ASSERT_GE(a, 0);
  EXPECT_EQ(t.node(a).children.size(), 2u);
  const auto tt = t.child(a, tok.id("t"));
  ASSERT_EQ(t.node(tt).words.size(), 1u);
  EXPECT_EQ(t.word(t.node(tt).words[0]), "cat");
  EXPECT_EQ(t.child(0, tok.id("a")), -1);
  EXPECT_EQ(t.node(tt).depth, 3);
}

TEST(Trie, EmptyLexicon) {
  const auto t = LexiconTrie::build({});
  EXPECT_EQ(t.node_count(), 1);
  EXPECT_EQ(t.word_count(), 0);
  EXPECT_TRUE(t.node(0).children.empty());
}

TEST(Trie, NodesAreDistinctPrefixes) {
  std::mt19937_64 rng(12);
  std::vector<LexiconEntry> entries;
  std::set<std::vector<TokenId>> prefixes{{}};
  for (int i = 0; i < 1000; ++i) {
    LexiconEntry e;
    e.word = "w" + std::to_string(i);
    const auto len = 1 + rng() % 7;
    for (std::size_t k = 0; k < len; ++k) e.spelling.push_back(1 + static_cast<TokenId>(rng() % 6));
    for (std::size_t k = 1; k <= e.spelling.size(); ++k) prefixes.insert({e.spelling.begin(), e.spelling.begin() + static_cast<std::ptrdiff_t>(k)});
    entries.push_back(e);
  }
  const auto t = LexiconTrie::build(entries);
  EXPECT_EQ(t.node_count(), static_cast<std::int64_t>(prefixes.size()));
  for (const auto& e : entries) {
    NodeId n = 0;
    for (auto tok : e.spelling) n = t.child(n, tok);
    ASSERT_GE(n, 0);
    const auto& w = t.node(n).words;
    EXPECT_NE(std::find(w.begin(), w.end(), t.word_id(e.word)), w.end());
  }
}

TEST(Trie, DuplicatesWarnHomophonesShare) {
  const auto t = LexiconTrie::build(lex("cat c a t\ncat c a t\nkat c a t\n"));
  EXPECT_EQ(t.warnings().size(), 1u);
  EXPECT_EQ(t.word_count(), 2);
  NodeId n = 0;
  for (auto s : {"c", "a", "t"}) n = t.child(n, letters().id(s));
  EXPECT_EQ(t.node(n).words.size(), 2u);
}

TEST(Trie, Errors) {
  EXPECT_THROW(lex("cat c a x\n"), InputError);
  EXPECT_THROW(lex("cat\n"), InputError);
  EXPECT_THROW(LexiconTrie::build({{"b", {kBlank}}}), InputError);
  EXPECT_THROW(LexiconTrie::build({{"e", {}}}), InputError);
  const auto t = LexiconTrie::build({});
  EXPECT_THROW(t.node(5), KernelFault);
}

TEST(TokenTable, Parsing) {
  std::istringstream ok("<b> 0\na 1\nc 2\n");
  EXPECT_EQ(parse_tokens(ok).size(), 3);
  std::istringstream implicit("<b>\na\nc\n");
  EXPECT_EQ(parse_tokens(implicit).id("c"), 2);
  std::istringstream dup("<b> 0\na 0\n");
  EXPECT_THROW(parse_tokens(dup), InputError);
  std::istringstream gap("<b> 0\na 2\n");
  EXPECT_THROW(parse_tokens(gap), InputError);
  std::istringstream empty("");
  EXPECT_THROW(parse_tokens(empty), InputError);
  EXPECT_THROW(TokenTable({"a", "a"}), InputError);
  EXPECT_THROW(letters().id("z"), InputError);
}

TEST(NGram, BigramAndBackoff) {
  auto lm = arpa(kBigram);
  EXPECT_EQ(lm.order(), 2);
  const auto the = lm.index("the"), cat = lm.index("cat");
  const auto s_the = lm.lookup(lm.initial_state(), the);
  // No (<s>, the) bigram: backoff(<s>) + p(the).
  EXPECT_NEAR(s_the.score, -0.3 + -1.0, 1e-12);
  EXPECT_EQ(s_the.backoff_depth, 1);
  const auto the_cat = lm.lookup(s_the.state, cat);
  EXPECT_NEAR(the_cat.score, -0.5, 1e-12);
  EXPECT_EQ(the_cat.backoff_depth, 0);
  const auto cat_the = lm.lookup(the_cat.state, the);
  EXPECT_NEAR(cat_the.score, -1.0, 1e-12);  // no backoff weight on "cat"
  const auto the_the = lm.lookup(s_the.state, the);
  EXPECT_NEAR(the_the.score, -1.3, 1e-12);
}

TEST(NGram, OovUsesUnkElseFloor) {
  auto lm = arpa(kBigram);
  EXPECT_NEAR(lm.lookup(lm.initial_state(), -1).score, -0.3 - 1.5, 1e-12);
  NGramLM plain;
  plain.add({"a"}, -0.5);
  EXPECT_EQ(plain.lookup(plain.initial_state(), -1).score, NGramLM::kFloor);
}

TEST(NGram, ArpaErrors) {
  EXPECT_THROW(arpa("ngram 1=1\n"), InputError);
  EXPECT_THROW(arpa("\\data\\\nngram 1=2\n\n\\1-grams:\n-1 a\n\\end\\\n"), InputError);
  EXPECT_THROW(arpa("\\data\\\nngram 1=1\n\n\\1-grams:\n-1 a\n"), InputError);
  EXPECT_THROW(arpa("\\data\\\nngram 1=1\n\n\\1-grams:\n0.5 a\n\\end\\\n"), InputError);
  EXPECT_THROW(arpa("\\data\\\nngram 1=1\n\n\\1-grams:\nx a\n\\end\\\n"), InputError);
  EXPECT_THROW(arpa("\\data\\\nngram 1=1\n\n\\1-grams:\n-1 a b\n\\end\\\n"), InputError);
  EXPECT_THROW(NGramLM::load_arpa("/nonexistent.arpa"), InputError);
}

TEST(NGram, WriteParseRoundTrip) {
  auto lm = arpa(kBigram);
  std::ostringstream os;
  lm.write_arpa(os);
  auto back = arpa(os.str());
  EXPECT_EQ(back.entry_count(), lm.entry_count());
  for (const auto& w : {"the", "cat", "<unk>"}) {
    EXPECT_NEAR(back.lookup(back.initial_state(), back.index(w)).score,
                lm.lookup(lm.initial_state(), lm.index(w)).score, 1e-9);
  }
}

TEST(NGram, SyntheticLmIsNormalised) {
  std::vector<std::string> words;
  for (int i = 0; i < 200; ++i) words.push_back("w" + std::to_string(i));
  auto lm = synthetic_lm(words, 3);
  std::vector<std::string> ctxs{"<s>", "w0", "w17", "w199"};
  for (const auto& c : ctxs) {
    const auto st = lm.lookup(lm.initial_state(), lm.index(c)).state;
    const auto start = c == "<s>" ? lm.initial_state() : st;
    double total = 0.0;
    for (const auto& w : words) total += std::pow(10.0, lm.lookup(start, lm.index(w)).score);
    total += std::pow(10.0, lm.lookup(start, lm.unk()).score);
    EXPECT_LE(total, 1.0 + 1e-6) << c;
    EXPECT_GE(total, 0.5) << c;
  }
}
