#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrpu/acoustic_model.hpp"
#include "asrpu/command_interface.hpp"
#include "asrpu/ctc_decoder.hpp"
#include "asrpu/lexicon.hpp"
#include "asrpu/model.hpp"
#include "asrpu/ngram_lm.hpp"
#include "asrpu/settings.hpp"
#include "asrpu/wav.hpp"

namespace asrpu {

enum class RunMode { streaming, offline };

inline std::string to_string(RunMode m) { return m == RunMode::streaming ? "streaming" : "offline"; }

struct RunManifest {
  std::string config;  // empty: built-in defaults
  std::string model;   // binary model file, or a text descriptor (weights from seed)
  std::string lexicon;
  std::string lm;
  std::string tokens;
  std::string audio;
  std::int64_t chunk_ms = 80;
  RunMode mode = RunMode::streaming;
  std::string report;  // empty: no report file
  std::string timeline;
  std::uint64_t seed = 1;
  std::optional<double> beam;
  std::optional<double> lm_weight;
  std::optional<double> word_penalty;
};

/// Fully loaded inputs of a run.
struct RunInputs {
  RunSettings settings;
  std::shared_ptr<const AcousticModel> model;
  TokenTable tokens;
  std::vector<LexiconEntry> lexicon;
  NGramLM lm;
  std::vector<float> audio;
};

/// Totals for one kernel over the whole run.
struct KernelAggregate {
  std::int64_t kernel_index = 0;
  std::string name;
  KernelClass cls = KernelClass::other;
  std::int64_t layer = -1;
  std::int64_t invocations = 0;  // steps in which it launched threads
  std::int64_t threads = 0;
  std::int64_t setup_cycles = 0;
  std::int64_t busy_cycles = 0;
  std::int64_t span_cycles = 0;
};

struct RunReport {
  RunMode mode = RunMode::streaming;
  std::int64_t chunk_ms = 0;
  AcceleratorConfig config;
  std::vector<StepReport> steps;
  std::vector<KernelAggregate> kernels;
  double audio_seconds = 0.0;
  double simulated_seconds = 0.0;
  double real_time_factor = 0.0;
  std::vector<std::string> transcript;
  double final_score = 0.0;
  std::int64_t acoustic_vectors = 0;
  std::int64_t trie_nodes = 0;
  std::vector<std::string> warnings;

  std::int64_t early_stopped_steps() const {
    return std::count_if(steps.begin(), steps.end(), [](const StepReport& s) { return s.early_stop; });
  }
};

/// Left panel groups CONV-like and expansion kernels, right panel FC-like
/// kernels and feature extraction.
inline std::string report_panel(KernelClass c) {
  return c == KernelClass::fc || c == KernelClass::frontend ? "fc+frontend" : "conv+expansion";
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) s += (i ? " " : "") + words[i];
  return s;
}

/// An accelerator with the full program configured: frontend and acoustic
/// model kernels, then hypothesis expansion.
struct ConfiguredSystem {
  std::unique_ptr<Accelerator> accel;
  AcousticProgram program;
  std::shared_ptr<CtcDecoder> decoder;
};

inline ConfiguredSystem configure_system(const RunInputs& in) {
  in.settings.validate();
  ConfiguredSystem sys;
  sys.accel = std::make_unique<Accelerator>(in.settings.accel);
  auto& acc = *sys.accel;
  sys.program = build_acoustic_program(acc.machine(), in.model, in.settings.frontend);
  if (in.model->desc.n_tokens() != in.tokens.size())
    throw ConfigError("model emits " + std::to_string(in.model->desc.n_tokens()) + " scores but the token table has " +
                      std::to_string(in.tokens.size()) + " tokens");
  for (std::size_t k = 0; k < sys.program.kernels.size(); ++k)
    acc.configure_acoustic_scoring(static_cast<std::int64_t>(k), sys.program.kernels[k]);
  sys.decoder = std::make_shared<CtcDecoder>(LexiconTrie::build(in.lexicon), in.lm, in.settings.decode);
  acc.configure_hyp_expansion(make_hyp_expansion_kernel(sys.decoder, *sys.program.scores));
  acc.configure_beam_width(in.settings.decode.beam_width);
  acc.set_root_seed(sys.decoder->root_seed());
  auto* machine = &acc.machine();
  auto decoder = sys.decoder;
  acc.set_transcriber([machine, decoder](const Hypothesis& h) { return decoder->backtrack(h, machine->hyps.words()); });
  acc.clean_decoding();
  return sys;
}

/// Frames per step the frontend extracts in offline mode when the config sets
/// no cap; keeps a whole utterance from landing in shared memory at once.
inline constexpr std::int64_t kOfflineFrameCap = 32;

/// Decodes one utterance. Streaming issues one step per chunk; offline one
/// step with the whole signal. When the frontend caps frames per step, empty
/// steps follow until the frontend has nothing left.

inline RunReport run(const RunInputs& in_ref, RunMode mode, std::int64_t chunk_ms = 80) {
  if (chunk_ms <= 0) throw ArgumentError("chunk_ms must be > 0");
  const RunInputs* src = &in_ref;
  std::optional<RunInputs> capped;
  if (mode == RunMode::offline && in_ref.settings.frontend.max_frames_per_step == 0) {
    capped = in_ref;
    capped->settings.frontend.max_frames_per_step = kOfflineFrameCap;
    src = &*capped;
  }
  const RunInputs& in = *src;
  auto sys = configure_system(in);
  auto& acc = *sys.accel;
  RunReport rep;
  rep.mode = mode;
  rep.chunk_ms = chunk_ms;
  rep.config = in.settings.accel;
  rep.trie_nodes = sys.decoder->trie().node_count();
  rep.warnings = sys.decoder->trie().warnings();
  const auto rate = in.settings.frontend.sample_rate;

  auto step = [&](std::span<const float> chunk) {
    try {
      rep.steps.push_back(acc.decoding_step(chunk));
    } catch (const SimulationError& e) {
      throw SimulationError("decoding step " + std::to_string(rep.steps.size()) + ": " + e.what());
    }
  };

  const std::span<const float> audio(in.audio);
  if (mode == RunMode::streaming) {
    const auto chunk = std::max<std::int64_t>(1, rate * chunk_ms / 1000);
    for (std::size_t pos = 0; pos < audio.size(); pos += static_cast<std::size_t>(chunk))
      step(audio.subspan(pos, std::min(audio.size() - pos, static_cast<std::size_t>(chunk))));
  } else {
    step(audio);
  }
  if (in.settings.frontend.max_frames_per_step > 0)
    while (rep.steps.empty() || rep.steps.back().stop_kernel != 0) step({});

  const auto& best = acc.machine().hyps.best_hypothesis();
  rep.transcript = sys.decoder->backtrack(best, acc.machine().hyps.words());
  rep.final_score = best.score;

  const auto n_as = static_cast<std::int64_t>(sys.program.kernels.size());
  rep.kernels.resize(static_cast<std::size_t>(n_as + 1));
  for (std::int64_t k = 0; k <= n_as; ++k) {
    auto& a = rep.kernels[static_cast<std::size_t>(k)];
    a.kernel_index = k;
    if (k < n_as) {
      a.name = sys.program.info[static_cast<std::size_t>(k)].name;
      a.cls = sys.program.info[static_cast<std::size_t>(k)].cls;
      a.layer = sys.program.info[static_cast<std::size_t>(k)].layer;
    } else {
      a.name = "hyp_expansion";
      a.cls = KernelClass::expansion;
    }
  }
  for (const auto& s : rep.steps) {
    rep.simulated_seconds += s.step_time_seconds;
    rep.acoustic_vectors += s.acoustic_vectors_emitted;
    for (const auto& ks : s.kernels) {
      auto& a = rep.kernels[static_cast<std::size_t>(ks.kernel_index)];
      if (ks.threads > 0) ++a.invocations;
      a.threads += ks.threads;
      a.setup_cycles += ks.setup_cycles;
      a.busy_cycles += ks.busy_cycles;
      a.span_cycles += ks.span_cycles;
    }
  }
  rep.audio_seconds = static_cast<double>(in.audio.size()) / static_cast<double>(rate);
  rep.real_time_factor = rep.simulated_seconds > 0.0 ? rep.audio_seconds / rep.simulated_seconds : 0.0;
  acc.clean_decoding();
  return rep;
}

/// Loads every input named by the manifest and applies its overrides.
inline RunInputs load_inputs(const RunManifest& m) {
  RunInputs in;
  if (!m.config.empty()) in.settings = load_settings(m.config);
  if (m.beam) in.settings.decode.beam_width = *m.beam;
  if (m.lm_weight) in.settings.decode.lm_weight = *m.lm_weight;
  if (m.word_penalty) in.settings.decode.word_penalty = *m.word_penalty;
  in.settings.decode.validate();
  for (const auto* p : {&m.model, &m.lexicon, &m.lm, &m.tokens, &m.audio})
    if (p->empty()) throw ArgumentError("manifest is missing a required path (model, lexicon, lm, tokens, audio)");

  std::ifstream probe(m.model, std::ios::binary);
  if (!probe) throw InputError("cannot open model '" + m.model + "'");
  char magic[8] = {};
  probe.read(magic, 8);
  if (probe.gcount() == 8 && std::memcmp(magic, detail::kModelMagic, 8) == 0)
    in.model = std::make_shared<const AcousticModel>(load_model(m.model));
  else
    in.model = std::make_shared<const AcousticModel>(generate_weights(load_descriptor(m.model), m.seed));

  in.tokens = load_tokens(m.tokens);
  in.lexicon = load_lexicon(m.lexicon, in.tokens);
  in.lm = NGramLM::load_arpa(m.lm);
  in.audio = load_wav(m.audio, in.settings.frontend.sample_rate).samples;
  return in;
}

inline RunReport run(const RunManifest& m) {
  const auto in = load_inputs(m);
  return run(in, m.mode, m.chunk_ms);
}

inline nlohmann::ordered_json report_json(const RunReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema"] = "asrpu-report/1";
  j["mode"] = to_string(r.mode);
  j["chunk_ms"] = r.chunk_ms;
  j["config"] = {{"frequency_hz", r.config.frequency_hz},     {"num_pes", r.config.num_pes},
                 {"mac_width", r.config.mac_width},           {"shared_mem_bytes", r.config.shared_mem_bytes},
                 {"model_mem_bytes", r.config.model_mem_bytes}, {"hyp_mem_bytes", r.config.hyp_mem_bytes},
                 {"pe_dcache_bytes", r.config.pe_dcache_bytes}, {"pe_icache_bytes", r.config.pe_icache_bytes}};
  j["audio_seconds"] = r.audio_seconds;
  j["simulated_seconds"] = r.simulated_seconds;
  j["real_time_factor"] = r.real_time_factor;
  j["decoding_steps"] = r.steps.size();
  j["early_stopped_steps"] = r.early_stopped_steps();
  j["acoustic_vectors"] = r.acoustic_vectors;
  j["transcript"] = join_words(r.transcript);
  j["final_score"] = r.final_score;
  j["warnings"] = r.warnings;
  auto& ks = j["kernels"] = ordered_json::array();
  const double f = static_cast<double>(r.config.frequency_hz);
  for (const auto& k : r.kernels)
    ks.push_back({{"index", k.kernel_index},
                  {"name", k.name},
                  {"class", std::string(to_string(k.cls))},
                  {"panel", report_panel(k.cls)},
                  {"layer", k.layer},
                  {"invocations", k.invocations},
                  {"threads", k.threads},
                  {"setup_cycles", k.setup_cycles},
                  {"busy_cycles", k.busy_cycles},
                  {"span_cycles", k.span_cycles},
                  {"span_ms", 1e3 * static_cast<double>(k.span_cycles) / f}});
  auto& ss = j["steps"] = ordered_json::array();
  for (const auto& s : r.steps) {
    std::int64_t spans = 0;
    for (const auto& k : s.kernels) spans += k.span_cycles;
    ss.push_back({{"index", s.step_index},
                  {"cycles", s.timeline.step_cycles},
                  {"time_ms", 1e3 * s.step_time_seconds},
                  {"early_stop", s.early_stop},
                  {"stop_kernel", s.stop_kernel},
                  {"acoustic_vectors", s.acoustic_vectors_emitted},
                  {"hyp_expansion_repeats", s.hyp_expansion_repeats},
                  {"active_hypotheses", s.active_hypotheses_after},
                  {"best_score", s.best_score},
                  {"partial_transcript", join_words(s.best_partial_transcript)},
                  {"first_setup_cycles", s.first_setup_cycles},
                  {"kernel_span_cycles", spans},
                  {"finalize_cycles", s.finalize_cycles},
                  {"other_cycles", s.timeline.step_cycles - s.first_setup_cycles - spans - s.finalize_cycles},
                  {"shared_mem_peak_bytes", s.shared_mem_peak_bytes},
                  {"dma_bytes", s.dma_bytes},
                  {"cache_hits", s.cache_hits},
                  {"cache_misses", s.cache_misses}});
  }
  return j;
}

/// Per-kernel table, one row per configured kernel.
inline void write_kernel_table(std::ostream& os, const RunReport& r) {
  os << "kernel_index,name,class,panel,layer,invocations,threads,setup_cycles,busy_cycles,span_cycles,span_ms\n";
  const double f = static_cast<double>(r.config.frequency_hz);
  for (const auto& k : r.kernels)
    os << k.kernel_index << ',' << k.name << ',' << to_string(k.cls) << ',' << report_panel(k.cls) << ',' << k.layer << ','
       << k.invocations << ',' << k.threads << ',' << k.setup_cycles << ',' << k.busy_cycles << ',' << k.span_cycles << ','
       << nlohmann::json(1e3 * static_cast<double>(k.span_cycles) / f).dump() << '\n';
}

/// Writes `path` (JSON) and `path` with a .csv extension (kernel table).
inline void emit_report(const RunReport& r, const std::string& path) {
  {
    std::ofstream os(path);
    if (!os) throw Error("cannot write report '" + path + "'");
    os << report_json(r).dump(2) << '\n';
    if (!os) throw Error("failed writing report '" + path + "'");
  }
  auto csv = std::filesystem::path(path).replace_extension(".csv");
  std::ofstream os(csv);
  if (!os) throw Error("cannot write kernel table '" + csv.string() + "'");
  write_kernel_table(os, r);
}

}  // namespace asrpu
