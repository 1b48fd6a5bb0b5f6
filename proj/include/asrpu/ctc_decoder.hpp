#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asrpu/acoustic_model.hpp"
#include "asrpu/error.hpp"
#include "asrpu/hypothesis.hpp"
#include "asrpu/kernel.hpp"
#include "asrpu/lexicon.hpp"
#include "asrpu/memory.hpp"
#include "asrpu/ngram_lm.hpp"
#include "asrpu/pe_cost.hpp"

namespace asrpu {

struct DecodeParams {
  double beam_width = 10.0;
  double lm_weight = 1.0;
  double word_penalty = 0.0;
  TokenId blank = kBlank;

  void validate() const {
    if (std::isnan(beam_width) || beam_width < 0.0) throw ArgumentError("beam width must be >= 0");
    if (!(lm_weight >= 0.0) || !std::isfinite(lm_weight)) throw ArgumentError("lm_weight must be finite and >= 0");
    if (!std::isfinite(word_penalty)) throw ArgumentError("word_penalty must be finite");
  }
};

/// Lexicon-constrained CTC prefix expansion over an n-gram LM. Owns the
/// read-only graph data the expansion kernel walks.
class CtcDecoder {
 public:
  // Synthetic model-memory layout of the graph, for cache statistics.
  static constexpr std::uint64_t kNodeBase = 0;
  static constexpr std::uint64_t kNodeBytes = 16;
  static constexpr std::uint64_t kChildBytes = 8;
  static constexpr std::uint64_t kLmEntryBytes = 16;

  CtcDecoder(LexiconTrie trie, NGramLM lm, DecodeParams params = {})
      : trie_(std::move(trie)), lm_(std::move(lm)), params_(params) {
    params_.validate();
    lex_to_lm_.reserve(static_cast<std::size_t>(trie_.word_count()));
    for (const auto& w : trie_.words()) lex_to_lm_.push_back(lm_.index(w));
    root_state_ = lm_.initial_state();
    child_base_ = kNodeBase + kNodeBytes * static_cast<std::uint64_t>(trie_.node_count());
    std::int64_t edges = 0;
    child_offset_.reserve(static_cast<std::size_t>(trie_.node_count()));
    for (NodeId n = 0; n < trie_.node_count(); ++n) {
      child_offset_.push_back(edges);
      edges += static_cast<std::int64_t>(trie_.node(n).children.size());
    }
    lm_base_ = child_base_ + kChildBytes * static_cast<std::uint64_t>(edges);
    lm_span_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(lm_.entry_count())) * kLmEntryBytes;
  }

  const LexiconTrie& trie() const noexcept { return trie_; }
  NGramLM& lm() noexcept { return lm_; }
  const NGramLM& lm() const noexcept { return lm_; }
  const DecodeParams& params() const noexcept { return params_; }
  void set_params(const DecodeParams& p) {
    p.validate();
    params_ = p;
  }

  Hypothesis root_seed() const {
    return {hypothesis_hash(kRootLabeling, true), kRootLabeling, 0.0, 0, root_state_, kNoLink, params_.blank};
  }

  /// Expands `h` by one acoustic vector of log-probabilities. Calls
  /// submit(hypothesis) for every successor and returns how many there were.
  /// Word-final children append to `arena`.
  template <class Submit>
  std::int64_t expand(PEContext& pe, const Hypothesis& h, std::span<const float> scores, WordArena& arena,
                      Submit&& submit, LruCacheModel* cache = nullptr) {
    const auto n_tok = static_cast<std::int64_t>(scores.size());
    auto score_of = [&](TokenId t) {
      if (t < 0 || t >= n_tok) throw KernelFault("token " + std::to_string(t) + " outside the score vector");
      pe.load();
      return static_cast<double>(scores[static_cast<std::size_t>(t)]);
    };
    std::int64_t submitted = 0;
    auto emit = [&](const Hypothesis& nh) {
      pe.mul(2);
      pe.add(2);  // hash
      pe.store(6);
      submit(nh);
      ++submitted;
    };
    pe.load(6);
    const auto blank = params_.blank;

    Hypothesis b = h;
    b.score = h.score + score_of(blank);
    pe.add();
    b.hash = hypothesis_hash(h.labeling, true);
    b.last_token = blank;
    emit(b);

    pe.compare();
    pe.branch();
    if (h.last_token != blank) {
      Hypothesis r = h;
      r.score = h.score + score_of(h.last_token);
      pe.add();
      r.hash = hypothesis_hash(h.labeling, false);
      emit(r);
    }

    const auto& node = trie_.node(h.lexicon_node);
    if (cache) cache->access(kNodeBase + kNodeBytes * static_cast<std::uint64_t>(h.lexicon_node), kNodeBytes);
    pe.load(2);
    const auto first_edge = child_offset_[static_cast<std::size_t>(h.lexicon_node)];
    pe.loop(static_cast<std::int64_t>(node.children.size()), [&](std::int64_t i) {
      const auto [tok, child] = node.children[static_cast<std::size_t>(i)];
      if (cache) cache->access(child_base_ + kChildBytes * static_cast<std::uint64_t>(first_edge + i), kChildBytes);
      pe.load(2);
      pe.compare(2);
      pe.branch(2);
      // The same token right after itself is a repeat, covered above.
      if (h.last_token != blank && tok == h.last_token) return;
      Hypothesis c = h;
      c.score = h.score + score_of(tok);
      pe.add();
      c.labeling = extend_labeling(h.labeling, tok);
      pe.mul(2);
      pe.add(2);
      c.last_token = tok;
      c.lexicon_node = child;
      const auto& cn = trie_.node(child);
      if (cache) cache->access(kNodeBase + kNodeBytes * static_cast<std::uint64_t>(child), kNodeBytes);
      pe.load();
      pe.compare();
      pe.branch();
      if (!cn.words.empty()) {
        WordId best_word = -1;
        NGramLM::Lookup best{};
        for (const auto w : cn.words) {
          const auto lw = lex_to_lm_[static_cast<std::size_t>(w)];
          const auto look = lm_.lookup(h.lm_state, lw);
          if (cache) cache->access(lm_address(h.lm_state, lw), kLmEntryBytes);
          pe.load(4);
          pe.compare(3);
          pe.branch(3);
          pe.add(2);
          if (best_word < 0 || look.score > best.score) {
            best_word = w;
            best = look;
          }
        }
        const double term = params_.lm_weight * best.score + params_.word_penalty;
        pe.mul();
        pe.add(2);
        c.score += term;
        c.lm_state = best.state;
        c.lexicon_node = 0;
        c.backlink = arena.append(best_word, h.backlink, term);
        pe.store(3);
      }
      c.hash = hypothesis_hash(c.labeling, false);
      emit(c);
    });
    return submitted;
  }

  /// Number of successors expand() produces for `h`.
  std::int64_t fan_out(const Hypothesis& h) const {
    const auto& node = trie_.node(h.lexicon_node);
    std::int64_t n = 1 + static_cast<std::int64_t>(node.children.size());
    if (h.last_token != params_.blank) {
      ++n;
      if (trie_.child(h.lexicon_node, h.last_token) >= 0) --n;
    }
    return n;
  }

  /// Words on the backlink chain of `h`, in utterance order.
  std::vector<std::string> backtrack(const Hypothesis& h, const WordArena& arena) const {
    std::vector<std::string> out;
    for (auto w : arena.words_to(h.backlink)) out.push_back(trie_.word(w));
    return out;
  }

 private:
  std::uint64_t lm_address(LmStateId state, NGramLM::WordIndex w) const {
    const auto h = fnv1a_mix(fnv1a_mix(kFnvOffset, static_cast<std::uint32_t>(state), 4), static_cast<std::uint32_t>(w), 4);
    return lm_base_ + (h % lm_span_) / kLmEntryBytes * kLmEntryBytes;
  }

  LexiconTrie trie_;
  NGramLM lm_;
  DecodeParams params_;
  std::vector<NGramLM::WordIndex> lex_to_lm_;
  LmStateId root_state_ = 0;
  std::vector<std::int64_t> child_offset_;
  std::uint64_t child_base_ = 0;
  std::uint64_t lm_base_ = 0;
  std::uint64_t lm_span_ = 1;
};

/// The hypothesis-expansion kernel. Its setup normalises the acoustic
/// vectors that arrived this step and returns their count; thread i of round
/// r expands active hypothesis i with vector r.
inline KernelDescriptor make_hyp_expansion_kernel(std::shared_ptr<CtcDecoder> decoder, TensorBuffer<float>& scores,
                                                  bool apply_log_softmax = true) {
  struct State {
    std::shared_ptr<CtcDecoder> decoder;
    TensorBuffer<float>* scores;
    int reader;
    bool softmax;
    std::int64_t base = 0;
  };
  auto st = std::make_shared<State>(State{std::move(decoder), &scores, scores.add_reader(), apply_log_softmax});

  SetupRoutine setup = [st](SetupContext& ctx) -> std::int64_t {
    auto& pe = ctx.pe;
    pe.load(2);
    pe.add();
    st->base = st->scores->reader_mark(st->reader);
    const auto n = st->scores->next_write() - st->base;
    pe.compare();
    pe.branch();
    if (n <= 0) return 0;
    if (st->softmax)
      pe.loop(n, [&](std::int64_t i) { log_softmax(pe, st->scores->slot(st->base + i)); });
    ctx.on_complete([st, n] { st->scores->consume_inputs(n, st->reader); });
    return n;
  };

  KernelRoutine kernel = [st](ThreadContext& tc) {
    auto& m = tc.machine;
    const auto& h = m.hyps.active_at(tc.thread_id);
    const auto vec = st->scores->item(st->base + tc.round);
    const auto expected = st->decoder->fan_out(h);
    const auto n = st->decoder->expand(tc.pe, h, vec, m.hyps.words(), [&](const Hypothesis& nh) { m.hyps.submit(nh); },
                                       &m.dcache);
    if (n != expected) throw KernelFault("expansion produced " + std::to_string(n) + " successors, expected " + std::to_string(expected));
  };

  return {"hyp_expansion", KernelClass::expansion, std::move(setup), std::move(kernel)};
}

/// Host-side beam search over a matrix of log-probabilities with the same
/// expansion and hypothesis-unit semantics as the accelerator.
struct HostDecodeResult {
  Hypothesis best;
  std::vector<std::string> words;
  std::vector<std::int64_t> active_per_step;
};

inline HostDecodeResult decode_host(CtcDecoder& decoder, const std::vector<std::vector<float>>& logprobs, double beam,
                                    std::int64_t capacity, MergeMode mode = MergeMode::max) {
  HypothesisStore store(capacity, mode);
  store.reset_with_seed(decoder.root_seed());
  HostDecodeResult out;
  for (const auto& v : logprobs) {
    const auto n = store.active_count();
    for (std::int64_t i = 0; i < n; ++i) {
      PEContext pe;
      const auto h = store.active_at(i);
      decoder.expand(pe, h, v, store.words(), [&](const Hypothesis& nh) { store.submit(nh); });
    }
    out.active_per_step.push_back(store.finalize_step(beam));
  }
  out.best = store.best_hypothesis();
  out.words = decoder.backtrack(out.best, store.words());
  return out;
}

}  // namespace asrpu
