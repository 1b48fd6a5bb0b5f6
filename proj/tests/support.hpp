#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance binary.
// Nothing here calls into the code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asrpu/asrpu.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Timeline invariants.

/// Returns an empty string when every invariant holds, else a description of
/// the first violation.
inline std::string check_timeline(const asrpu::Timeline& t, std::int64_t num_pes) {
  using asrpu::ThreadKind;
  std::ostringstream err;
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, std::int64_t>>> by_pe;
  std::int64_t max_end = 0;
  for (const auto& r : t.records) {
    if (r.end_cycle < r.start_cycle || r.pe_id < 0 || r.pe_id >= num_pes) {
      err << "bad record k" << r.kernel_index << " t" << r.thread_id;
      return err.str();
    }
    if (r.end_cycle > r.start_cycle) by_pe[r.pe_id].push_back({r.start_cycle, r.end_cycle});
    max_end = std::max(max_end, r.end_cycle);
  }
  if (t.step_cycles < max_end) return "step_cycles below the last record";

  // PE exclusivity.
  for (auto& [pe, iv] : by_pe) {
    std::sort(iv.begin(), iv.end());
    for (std::size_t i = 1; i < iv.size(); ++i)
      if (iv[i].first < iv[i - 1].second) {
        err << "overlap on pe " << pe << " at " << iv[i].first;
        return err.str();
      }
  }

  // Phase ordering and the setup-overlap rule.
  struct Span {
    std::int64_t first_start = std::numeric_limits<std::int64_t>::max();
    std::int64_t last_end = -1;
    bool any = false;
  };
  using Phase = std::pair<std::int64_t, std::int64_t>;  // kernel, round
  std::map<Phase, Span> threads;
  std::map<std::int64_t, std::vector<asrpu::ThreadRecord>> setups;
  for (const auto& r : t.records) {
    if (r.kind == ThreadKind::setup) {
      setups[r.kernel_index].push_back(r);
      continue;
    }
    auto& s = threads[{r.kernel_index, r.round}];
    s.any = true;
    s.first_start = std::min(s.first_start, r.start_cycle);
    s.last_end = std::max(s.last_end, r.end_cycle);
  }
  std::vector<Phase> order;
  for (const auto& [k, s] : threads) order.push_back(k);
  for (std::size_t i = 1; i < order.size(); ++i)
    if (threads[order[i - 1]].last_end > threads[order[i]].first_start) {
      err << "kernel " << order[i].first << " round " << order[i].second << " starts before kernel "
          << order[i - 1].first << " round " << order[i - 1].second << " finished";
      return err.str();
    }
  for (const auto& [k, list] : setups)
    for (const auto& s : list) {
      if (auto it = threads.find({k, 0}); it != threads.end() && s.end_cycle > it->second.first_start) {
        err << "kernel " << k << " threads start before its setup ended";
        return err.str();
      }
      for (const auto& [j, sp] : threads)
        if (j.first < k - 1 && sp.last_end > s.start_cycle) {
          err << "setup of kernel " << k << " overlaps kernel " << j.first;
          return err.str();
        }
    }

  // Work conservation: while a phase still has threads waiting, no PE idles.
  for (const auto& [ph, sp] : threads) {
    const auto [k, round] = ph;
    std::int64_t gate = sp.first_start;
    if (auto it = setups.find(k + 1); it != setups.end())
      for (const auto& s : it->second) gate = std::min(gate, s.start_cycle);
    for (const auto& r : t.records) {
      if (r.kind != ThreadKind::kernel || r.kernel_index != k || r.round != round || r.start_cycle <= gate) continue;
      for (std::int64_t pe = 0; pe < num_pes; ++pe) {
        std::int64_t covered = gate;
        for (const auto& [a, b] : by_pe[pe])
          if (a <= covered && b > covered) covered = b;
        if (covered < r.start_cycle) {
          err << "pe " << pe << " idle at " << covered << " while kernel " << k << " thread " << r.thread_id
              << " waits until " << r.start_cycle;
          return err.str();
        }
      }
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// MFCC by definition: naive DFT, triangular mel filters evaluated directly,
// natural log with floor, cosine-sum DCT-II with orthonormal scaling.

inline std::vector<double> mfcc_frame(const std::vector<double>& x, const asrpu::FrontendParams& p) {
  const auto w = static_cast<std::size_t>(p.frame_len());
  double mean = 0.0;
  for (std::size_t i = 0; i < w; ++i) mean += x[i];
  mean /= static_cast<double>(w);
  std::vector<double> y(w);
  for (std::size_t i = 0; i < w; ++i) {
    const double prev = i == 0 ? x[0] - mean : x[i - 1] - mean;
    const double win = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(w - 1));
    y[i] = ((x[i] - mean) - p.preemphasis * prev) * win;
  }
  const auto nfft = static_cast<std::size_t>(p.n_fft);
  const std::size_t bins = nfft / 2 + 1;
  std::vector<double> power(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < w; ++n) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(nfft);
      re += y[n] * std::cos(a);
      im -= y[n] * std::sin(a);
    }
    power[k] = re * re + im * im;
  }
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  const double top = mel(static_cast<double>(p.sample_rate) / 2.0);
  const auto nm = static_cast<std::size_t>(p.n_mels);
  std::vector<double> logmel(nm);
  for (std::size_t j = 0; j < nm; ++j) {
    const double l = top * static_cast<double>(j) / static_cast<double>(nm + 1);
    const double c = top * static_cast<double>(j + 1) / static_cast<double>(nm + 1);
    const double r = top * static_cast<double>(j + 2) / static_cast<double>(nm + 1);
    double e = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double m = mel(static_cast<double>(k) * static_cast<double>(p.sample_rate) / static_cast<double>(nfft));
      double wt = 0.0;
      if (m > l && m < c) wt = (m - l) / (c - l);
      if (m >= c && m < r) wt = (r - m) / (r - c);
      e += wt * power[k];
    }
    logmel[j] = std::log(std::max(e, p.log_floor));
  }
  const auto nc = static_cast<std::size_t>(p.n_ceps);
  std::vector<double> out(nc);
  for (std::size_t k = 0; k < nc; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < nm; ++i)
      s += logmel[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                                static_cast<double>(nm));
    out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(nm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CTC + lexicon + bigram search by exhaustive enumeration.

struct TinyLm {
  // log10 probabilities; backoff per context word. "<s>" starts a sentence.
  std::map<std::string, double> unigram;
  std::map<std::string, double> backoff;
  std::map<std::pair<std::string, std::string>, double> bigram;

  double score(const std::string& ctx, const std::string& w) const {
    if (auto it = bigram.find({ctx, w}); it != bigram.end()) return it->second;
    const double bo = backoff.count(ctx) ? backoff.at(ctx) : 0.0;
    return bo + unigram.at(w);
  }

  std::string arpa() const {
    std::ostringstream os;
    os.precision(17);
    os << "\\data\\\nngram 1=" << unigram.size() << "\nngram 2=" << bigram.size() << "\n\n\\1-grams:\n";
    for (const auto& [w, p] : unigram) {
      os << p << ' ' << w;
      if (backoff.count(w)) os << ' ' << backoff.at(w);
      os << '\n';
    }
    os << "\n\\2-grams:\n";
    for (const auto& [k, p] : bigram) os << p << ' ' << k.first << ' ' << k.second << '\n';
    os << "\n\\end\\\n";
    return os.str();
  }
};

struct CtcBest {
  double score = -std::numeric_limits<double>::infinity();
  std::vector<std::string> words;
};

/// Best path over all T-frame token paths whose CTC labeling is a sequence of
/// lexicon spellings followed by a (possibly empty) proper prefix of one.
/// The lexicon must be prefix-free with distinct spellings.
inline CtcBest exhaustive_ctc(const std::vector<std::vector<float>>& logp,
                              const std::vector<std::pair<std::string, std::vector<int>>>& lexicon, const TinyLm& lm,
                              double lm_weight, double word_penalty) {
  const auto T = logp.size();
  const auto V = logp.empty() ? 0 : logp[0].size();
  CtcBest best;
  std::vector<int> path(T, 0);
  std::function<void(std::size_t)> rec = [&](std::size_t t) {
    if (t < T) {
      for (std::size_t v = 0; v < V; ++v) {
        path[t] = static_cast<int>(v);
        rec(t + 1);
      }
      return;
    }
    std::vector<int> labels;
    int prev = -1;
    for (int v : path) {
      if (v != 0 && v != prev) labels.push_back(v);
      prev = v;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < T; ++i) s += logp[i][static_cast<std::size_t>(path[i])];
    std::vector<std::string> words;
    std::string ctx = "<s>";
    std::size_t pos = 0;
    while (pos < labels.size()) {
      bool matched = false, prefix = false;
      for (const auto& [w, sp] : lexicon) {
        const auto n = std::min(sp.size(), labels.size() - pos);
        if (!std::equal(sp.begin(), sp.begin() + static_cast<std::ptrdiff_t>(n), labels.begin() + static_cast<std::ptrdiff_t>(pos)))
          continue;
        if (n == sp.size()) {
          s += lm_weight * lm.score(ctx, w) + word_penalty;
          words.push_back(w);
          ctx = w;
          pos += n;
          matched = true;
          break;
        }
        prefix = true;
      }
      if (matched) continue;
      if (!prefix) return;  // not spellable
      break;                // trailing partial word
    }
    if (s > best.score) best = {s, words};
  };
  rec(0);
  return best;
}

}  // namespace oracle
