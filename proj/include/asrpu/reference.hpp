#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "asrpu/acoustic_model.hpp"
#include "asrpu/frontend.hpp"
#include "asrpu/lexicon.hpp"
#include "asrpu/model.hpp"
#include "asrpu/ngram_lm.hpp"
#include "asrpu/runner.hpp"

namespace asrpu {

/// TDS acoustic model over 80-dim features: four strided convolutions down
/// to 1/8 of the frame rate, then 2, 3, 4 and 5 TDS blocks at 15, 19, 23 and
/// 27 channels, and a final projection to n_tokens scores.
inline ModelDescriptor reference_descriptor(std::int64_t n_tokens = 9000) {
  constexpr std::int64_t W = 80;
  constexpr float ln_scale = 4.0f / 127.0f;
  constexpr float act_scale = 6.0f / 127.0f;
  ModelDescriptor d;
  d.name = "tds";
  d.input_dim = W;
  auto conv = [&](std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t s, bool residual) {
    LayerSpec l;
    l.kind = LayerKind::conv1d;
    l.width = W;
    l.in_ch = cin;
    l.out_ch = cout;
    l.kernel = k;
    l.stride = s;
    l.pad = k - 1;
    l.relu = true;
    l.residual = residual ? Residual::self : Residual::none;
    l.in_scale = 0.5f;
    l.out_scale = act_scale;
    d.layers.push_back(l);
  };
  auto norm = [&](std::int64_t dim) {
    LayerSpec l;
    l.kind = LayerKind::layernorm;
    l.in_dim = l.out_dim = dim;
    l.out_scale = ln_scale;
    d.layers.push_back(l);
  };
  auto fc = [&](std::int64_t in, std::int64_t out, bool relu, Residual res) {
    LayerSpec l;
    l.kind = LayerKind::fc;
    l.in_dim = in;
    l.out_dim = out;
    l.relu = relu;
    l.residual = res;
    l.out_scale = act_scale;
    d.layers.push_back(l);
  };

  const std::int64_t sub[4][4] = {{1, 15, 10, 2}, {15, 19, 10, 2}, {19, 23, 12, 2}, {23, 27, 11, 1}};
  const std::int64_t blocks[4][3] = {{2, 15, 9}, {3, 19, 9}, {4, 23, 11}, {5, 27, 11}};
  for (int g = 0; g < 4; ++g) {
    conv(sub[g][0], sub[g][1], sub[g][2], sub[g][3], false);
    norm(W * sub[g][1]);
    const auto [count, ch, k] = std::tuple{blocks[g][0], blocks[g][1], blocks[g][2]};
    for (std::int64_t b = 0; b < count; ++b) {
      conv(ch, ch, k, 1, true);
      norm(W * ch);
      fc(W * ch, W * ch, true, Residual::none);
      fc(W * ch, W * ch, false, Residual::prev);
      norm(W * ch);
    }
  }
  fc(W * 27, n_tokens, false, Residual::none);
  d.layers.back().float_output = true;
  return d;
}

/// Tokens for generated workloads: blank, then `n_tokens - 1` unit symbols.
inline TokenTable synthetic_tokens(std::int64_t n_tokens) {
  std::vector<std::string> s{"<b>"};
  for (std::int64_t i = 1; i < n_tokens; ++i) s.push_back("u" + std::to_string(i));
  return TokenTable(std::move(s));
}

/// Random words spelled with 2..6 units drawn from the first `alphabet` units.
inline std::vector<LexiconEntry> synthetic_lexicon(std::int64_t n_words, std::int64_t alphabet, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(2, 6);
  std::uniform_int_distribution<TokenId> unit(1, static_cast<TokenId>(alphabet));
  std::vector<LexiconEntry> out;
  for (std::int64_t i = 0; i < n_words; ++i) {
    LexiconEntry e;
    e.word = "w" + std::to_string(i);
    const int n = len(rng);
    for (int k = 0; k < n; ++k) e.spelling.push_back(unit(rng));
    out.push_back(std::move(e));
  }
  return out;
}

/// Normalised bigram model over the given words plus <s> and <unk>. Each word
/// gets a few explicit successors; the remaining mass backs off to unigrams.
inline NGramLM synthetic_lm(const std::vector<std::string>& words, std::uint64_t seed, int successors = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::vector<std::string> vocab = words;
  vocab.push_back("<unk>");
  std::vector<double> p(vocab.size());
  double total = 0.0;
  for (auto& x : p) total += (x = u(rng));
  for (auto& x : p) x /= total;

  NGramLM lm;
  std::vector<double> backoff(vocab.size() + 1, 0.0);
  std::vector<std::vector<std::pair<std::size_t, double>>> bigrams(vocab.size() + 1);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  for (std::size_t c = 0; c <= vocab.size(); ++c) {
    if (c < vocab.size() && vocab[c] == "<unk>") continue;
    std::vector<std::size_t> next;
    while (!words.empty() && next.size() < static_cast<std::size_t>(std::min<int>(successors, static_cast<int>(words.size())))) {
      const auto w = pick(rng);
      if (std::find(next.begin(), next.end(), w) == next.end()) next.push_back(w);
    }
    double explicit_mass = 0.0, unigram_mass = 0.0;
    for (auto w : next) {
      const double q = 0.5 / static_cast<double>(next.size());
      bigrams[c].emplace_back(w, q);
      explicit_mass += q;
      unigram_mass += p[w];
    }
    backoff[c] = std::log10((1.0 - explicit_mass) / (1.0 - unigram_mass));
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) lm.add({vocab[i]}, std::log10(p[i]), vocab[i] == "<unk>" ? 0.0 : backoff[i]);
  lm.add({"<s>"}, -99.0, backoff[vocab.size()]);
  for (std::size_t c = 0; c <= vocab.size(); ++c) {
    const std::string ctx = c == vocab.size() ? "<s>" : vocab[c];
    for (auto [w, q] : bigrams[c]) lm.add({ctx, words[w]}, std::log10(q));
  }
  return lm;
}

/// Deterministic speech-like signal: a voiced source with drifting pitch
/// through slowly moving resonances, plus noise.
inline std::vector<float> synthetic_audio(double seconds, std::int64_t sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  const auto n = static_cast<std::size_t>(seconds * static_cast<double>(sample_rate));
  std::vector<float> out(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(sample_rate);
    const double f0 = 120.0 + 30.0 * std::sin(2.0 * std::numbers::pi * 0.7 * t);
    phase += 2.0 * std::numbers::pi * f0 / static_cast<double>(sample_rate);
    const double env = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * 3.0 * t);
    double v = 0.0;
    for (int h = 1; h <= 20; ++h) {
      const double fh = f0 * h;
      const double f1 = 600.0 + 200.0 * std::sin(2.0 * std::numbers::pi * 1.3 * t);
      const double f2 = 1700.0 + 400.0 * std::sin(2.0 * std::numbers::pi * 0.9 * t);
      const double g = std::exp(-std::pow((fh - f1) / 200.0, 2)) + 0.6 * std::exp(-std::pow((fh - f2) / 300.0, 2)) + 0.05;
      v += g * std::sin(h * phase);
    }
    out[i] = static_cast<float>(0.1 * env * v + noise(rng));
  }
  return out;
}

/// The reference workload: TDS model with seeded weights, synthetic
/// lexicon, bigram LM and audio.
inline RunInputs reference_inputs(std::uint64_t seed = 1, double seconds = 3.0, std::int64_t n_tokens = 9000,
                                  std::int64_t n_words = 800) {
  RunInputs in;
  in.model = std::make_shared<const AcousticModel>(generate_weights(reference_descriptor(n_tokens), seed));
  in.tokens = synthetic_tokens(n_tokens);
  in.lexicon = synthetic_lexicon(n_words, std::min<std::int64_t>(n_tokens - 1, 40), seed + 1);
  std::vector<std::string> words;
  for (const auto& e : in.lexicon) words.push_back(e.word);
  in.lm = synthetic_lm(words, seed + 2);
  in.audio = synthetic_audio(seconds, in.settings.frontend.sample_rate, seed + 3);
  return in;
}

// ---------------------------------------------------------------------------
// Planted-signal workload: each letter is a pure tone, letters are separated
// by silence, and the model is a nearest-template classifier on normalised
// features, so its output spells the sentence with blanks and repeats.

struct PlantedSpec {
  std::vector<std::string> letters{"<b>", "t", "h", "e", "c", "a", "s"};
  std::vector<double> tone_hz{0.0, 400.0, 800.0, 1300.0, 1900.0, 2600.0, 3400.0};
  std::vector<std::string> sentence{"the", "cat", "sat"};
  std::vector<std::string> lexicon_words{"the", "cat", "sat", "hat", "act", "sea", "tea", "ate"};
  double tone_ms = 60.0;
  double gap_ms = 60.0;
  double word_gap_ms = 120.0;
  double lead_ms = 100.0;
  double tail_ms = 200.0;
  double tone_amplitude = 0.3;
  double noise_amplitude = 1e-3;
  double logit_range = 30.0;
};

inline std::vector<float> planted_tone(double hz, std::int64_t n, std::int64_t sample_rate, double amplitude,
                                       std::int64_t offset = 0) {
  std::vector<float> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i + offset) /
                                                     static_cast<double>(sample_rate)));
  return out;
}

inline RunInputs planted_inputs(const PlantedSpec& spec = {}, std::uint64_t seed = 7) {
  RunInputs in;
  const auto& fp = in.settings.frontend;
  const auto rate = fp.sample_rate;
  in.tokens = TokenTable(spec.letters);
  for (const auto& w : spec.lexicon_words) {
    LexiconEntry e{w, {}};
    for (char ch : w) e.spelling.push_back(in.tokens.id(std::string(1, ch)));
    in.lexicon.push_back(std::move(e));
  }
  // Bigram LM favouring the sentence order, with unigram back-off.
  const double uni = std::log10(1.0 / static_cast<double>(spec.lexicon_words.size() + 1));
  for (const auto& w : spec.lexicon_words) in.lm.add({w}, uni, std::log10(0.5));
  in.lm.add({"<unk>"}, uni);
  in.lm.add({"<s>"}, -99.0, std::log10(0.5));
  std::string prev = "<s>";
  for (const auto& w : spec.sentence) {
    in.lm.add({prev, w}, std::log10(0.5));
    prev = w;
  }

  // Audio.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-spec.noise_amplitude, spec.noise_amplitude);
  auto ms = [&](double v) { return static_cast<std::int64_t>(v * static_cast<double>(rate) / 1000.0); };
  std::vector<float> audio;
  auto silence = [&](double dur) { audio.resize(audio.size() + static_cast<std::size_t>(ms(dur)), 0.0f); };
  silence(spec.lead_ms);
  for (std::size_t wi = 0; wi < spec.sentence.size(); ++wi) {
    if (wi) silence(spec.word_gap_ms);
    const auto& w = spec.sentence[wi];
    for (std::size_t ci = 0; ci < w.size(); ++ci) {
      if (ci) silence(spec.gap_ms);
      const auto tok = in.tokens.id(std::string(1, w[ci]));
      const auto tone = planted_tone(spec.tone_hz[static_cast<std::size_t>(tok)], ms(spec.tone_ms), rate, spec.tone_amplitude);
      audio.insert(audio.end(), tone.begin(), tone.end());
    }
  }
  silence(spec.tail_ms);
  for (auto& s : audio) s += static_cast<float>(noise(rng));
  in.audio = std::move(audio);

  // Model: quantise features, layer-normalise, score against templates.
  ModelDescriptor d;
  d.name = "planted";
  d.input_dim = fp.n_ceps;
  LayerSpec ln;
  ln.kind = LayerKind::layernorm;
  ln.in_dim = ln.out_dim = fp.n_ceps;
  ln.in_scale = 0.5f;
  ln.out_scale = 4.0f / 127.0f;
  LayerSpec out;
  out.kind = LayerKind::fc;
  out.in_dim = fp.n_ceps;
  out.out_dim = static_cast<std::int64_t>(spec.letters.size());
  out.float_output = true;
  d.layers = {ln, out};

  AcousticModel m{d, {}};
  LayerWeights lnw;
  lnw.gamma.assign(static_cast<std::size_t>(fp.n_ceps), 1.0f);
  lnw.beta.assign(static_cast<std::size_t>(fp.n_ceps), 0.0f);
  LayerWeights fcw;
  fcw.bias.assign(spec.letters.size(), 0.0f);
  std::int64_t norm2 = 0;
  const FrontendTables tables(fp);
  const auto w_len = fp.frame_len();
  for (std::size_t tok = 0; tok < spec.letters.size(); ++tok) {
    std::vector<float> frame = tok == 0 ? std::vector<float>(static_cast<std::size_t>(w_len), 0.0f)
                                        : planted_tone(spec.tone_hz[tok], w_len, rate, spec.tone_amplitude);
    std::mt19937_64 nrng(seed + 100 + tok);
    for (auto& s : frame) s += static_cast<float>(noise(nrng));
    std::vector<float> mfcc(static_cast<std::size_t>(fp.n_ceps));
    PEContext pe;
    mfcc_frame(pe, tables, [&](std::int64_t i) { return frame[static_cast<std::size_t>(i)]; }, 0, mfcc);
    std::vector<std::int8_t> codes(mfcc.size());
    for (std::size_t i = 0; i < mfcc.size(); ++i) codes[i] = PEContext::quantize_value(mfcc[i], 1.0f / ln.in_scale);
    std::vector<std::int8_t> tmpl(mfcc.size());
    layernorm_frame(pe, codes, ln.in_scale, lnw.gamma, lnw.beta, ln.eps, [&](std::int64_t i, double v) {
      tmpl[static_cast<std::size_t>(i)] = PEContext::quantize_value(static_cast<float>(v), 1.0f / ln.out_scale);
    });
    std::int64_t n2 = 0;
    for (auto c : tmpl) n2 += std::int64_t{c} * c;
    norm2 = std::max(norm2, n2);
    fcw.w.insert(fcw.w.end(), tmpl.begin(), tmpl.end());
  }
  // A perfect match scores logit_range; the dot product peaks near norm2.
  fcw.w_scale = static_cast<float>(spec.logit_range / (static_cast<double>(norm2) * ln.out_scale));
  m.weights = {lnw, fcw};
  in.model = std::make_shared<const AcousticModel>(std::move(m));
  in.settings.decode.beam_width = 20.0;
  return in;
}

}  // namespace asrpu
