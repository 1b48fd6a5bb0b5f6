#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "asrpu/config.hpp"
#include "asrpu/error.hpp"

namespace asrpu {

using TokenId = std::int32_t;
using NodeId = std::int32_t;
using LmStateId = std::int32_t;
using WordId = std::int32_t;

inline constexpr TokenId kBlank = 0;
inline constexpr std::int32_t kNoLink = -1;

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

/// FNV-1a over the little-endian bytes of `value` (width bytes), continuing
/// from state h.
constexpr std::uint64_t fnv1a_mix(std::uint64_t h, std::uint64_t value, int width) {
  for (int i = 0; i < width; ++i) {
    h ^= (value >> (8 * i)) & 0xffu;
    h *= kFnvPrime;
  }
  return h;
}

/// Hash of a collapsed label sequence extended by one label.
constexpr std::uint64_t extend_labeling(std::uint64_t parent, TokenId label) {
  return fnv1a_mix(fnv1a_mix(kFnvOffset, parent, 8), static_cast<std::uint32_t>(label), 4);
}

/// Merge identity: the labeling plus whether the path currently ends in a
/// blank (the two states continue differently on a repeated token).
constexpr std::uint64_t hypothesis_hash(std::uint64_t labeling, bool ends_in_blank) {
  return fnv1a_mix(fnv1a_mix(kFnvOffset, labeling, 8), ends_in_blank ? 1u : 0u, 1);
}

inline constexpr std::uint64_t kRootLabeling = kFnvOffset;

struct Hypothesis {
  std::uint64_t hash = 0;
  std::uint64_t labeling = kRootLabeling;
  double score = 0.0;
  NodeId lexicon_node = 0;
  LmStateId lm_state = 0;
  std::int32_t backlink = kNoLink;
  TokenId last_token = kBlank;
};

/// One finished word in a hypothesis history.
struct WordLink {
  WordId word = 0;
  std::int32_t parent = kNoLink;
  double lm_term = 0.0;  // lm_weight * LM + word_penalty added at emission
};

/// Host-side history of emitted words. Grows without bound during an
/// utterance; not counted against hypothesis memory.
class WordArena {
 public:
  std::int32_t append(WordId word, std::int32_t parent, double lm_term) {
    links_.push_back({word, parent, lm_term});
    return static_cast<std::int32_t>(links_.size()) - 1;
  }
  const WordLink& at(std::int32_t i) const {
    if (i < 0 || static_cast<std::size_t>(i) >= links_.size())
      throw SimulationError("broken backlink " + std::to_string(i));
    return links_[static_cast<std::size_t>(i)];
  }
  std::size_t size() const noexcept { return links_.size(); }
  void clear() { links_.clear(); }

  /// Word ids from the root seed to `link`, in utterance order.
  std::vector<WordId> words_to(std::int32_t link) const {
    std::vector<WordId> out;
    std::size_t guard = 0;
    while (link != kNoLink) {
      if (++guard > links_.size()) throw SimulationError("backlink cycle");
      const auto& l = at(link);
      out.push_back(l.word);
      link = l.parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::vector<WordLink> links_;
};

/// Hypothesis memory plus its controller: collects hypotheses submitted by
/// expansion threads, merges duplicates, and beam/capacity prunes them.
class HypothesisStore {
 public:
  HypothesisStore(std::int64_t capacity_records, MergeMode mode = MergeMode::max)
      : capacity_(capacity_records), mode_(mode) {}

  std::int64_t capacity_records() const noexcept { return capacity_; }
  void set_capacity(std::int64_t records) { capacity_ = records; }
  void set_merge_mode(MergeMode m) { mode_ = m; }

  /// Clears everything and installs `seed` as the only active hypothesis.
  void reset_with_seed(const Hypothesis& seed) {
    active_.assign(1, seed);
    incoming_.clear();
    words_.clear();
    peak_incoming_ = 0;
  }

  void submit(const Hypothesis& h) {
    if (!std::isfinite(h.score)) throw KernelFault("submitted hypothesis with non-finite score");
    incoming_.push_back(h);
    peak_incoming_ = std::max<std::int64_t>(peak_incoming_, static_cast<std::int64_t>(incoming_.size()));
  }

  /// Merge by hash, beam prune against the best score, then cap at capacity.
  /// The incoming set becomes the active set; returns its size.
  std::int64_t finalize_step(double beam) {
    if (incoming_.empty()) throw SimulationError("finalize with no incoming hypotheses");
    std::sort(incoming_.begin(), incoming_.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.hash != b.hash) return a.hash < b.hash;
      if (a.score != b.score) return a.score > b.score;
      return a.backlink < b.backlink;
    });
    std::vector<Hypothesis> merged;
    merged.reserve(incoming_.size());
    for (const auto& h : incoming_) {
      if (!merged.empty() && merged.back().hash == h.hash) {
        if (mode_ == MergeMode::log_sum_exp) {
          auto& m = merged.back();
          const double hi = std::max(m.score, h.score), lo = std::min(m.score, h.score);
          m.score = hi + std::log1p(std::exp(lo - hi));
        }
        continue;
      }
      merged.push_back(h);
    }
    incoming_.clear();

    double best = merged.front().score;
    for (const auto& h : merged) best = std::max(best, h.score);
    const double threshold = best - beam;
    std::erase_if(merged, [&](const Hypothesis& h) { return h.score < threshold; });

    std::sort(merged.begin(), merged.end(), better);
    if (static_cast<std::int64_t>(merged.size()) > capacity_) merged.resize(static_cast<std::size_t>(capacity_));
    active_ = std::move(merged);
    return active_count();
  }

  std::int64_t active_count() const noexcept { return static_cast<std::int64_t>(active_.size()); }
  std::span<const Hypothesis> active() const noexcept { return active_; }
  const Hypothesis& active_at(std::int64_t i) const { return active_.at(static_cast<std::size_t>(i)); }
  std::int64_t incoming_count() const noexcept { return static_cast<std::int64_t>(incoming_.size()); }
  std::int64_t peak_incoming() const noexcept { return peak_incoming_; }

  const Hypothesis& best_hypothesis() const {
    if (active_.empty()) throw SimulationError("hypothesis store is empty");
    return *std::min_element(active_.begin(), active_.end(), better);
  }

  WordArena& words() noexcept { return words_; }
  const WordArena& words() const noexcept { return words_; }

  /// Higher score first, ties by smaller hash.
  static bool better(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.hash < b.hash;
  }

 private:
  std::int64_t capacity_;
  MergeMode mode_;
  std::vector<Hypothesis> active_;
  std::vector<Hypothesis> incoming_;
  std::int64_t peak_incoming_ = 0;
  WordArena words_;
};

}  // namespace asrpu
