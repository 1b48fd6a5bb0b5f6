// asrpu: decode a WAV file on the simulated accelerator, or write a
// reference workload to disk.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "asrpu/asrpu.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kInput = 2, kConfig = 3, kSimulation = 4 };

void write_tokens(const std::string& path, const asrpu::TokenTable& t) {
  std::ofstream os(path);
  if (!os) throw asrpu::Error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < t.symbols().size(); ++i) os << t.symbols()[i] << ' ' << i << '\n';
}

void write_lexicon(const std::string& path, const std::vector<asrpu::LexiconEntry>& lex, const asrpu::TokenTable& t) {
  std::ofstream os(path);
  if (!os) throw asrpu::Error("cannot write '" + path + "'");
  for (const auto& e : lex) {
    os << e.word;
    for (auto tok : e.spelling) os << ' ' << t.symbol(tok);
    os << '\n';
  }
}

void write_lm(const std::string& path, const asrpu::NGramLM& lm) {
  std::ofstream os(path);
  if (!os) throw asrpu::Error("cannot write '" + path + "'");
  lm.write_arpa(os);
}

int run_main(const asrpu::RunManifest& m, const std::string& timeline_path, bool quiet) {
  const auto report = asrpu::run(m);
  if (!m.report.empty()) asrpu::emit_report(report, m.report);
  if (!timeline_path.empty()) {
    std::ofstream os(timeline_path);
    if (!os) throw asrpu::Error("cannot write timeline '" + timeline_path + "'");
    for (const auto& s : report.steps) {
      os << "# step " << s.step_index << " cycles " << s.timeline.step_cycles << '\n';
      asrpu::write_timeline(os, s.timeline);
    }
  }
  std::cout << asrpu::join_words(report.transcript) << '\n';
  if (!quiet) {
    std::cerr << "steps " << report.steps.size() << " (early stop " << report.early_stopped_steps() << "), vectors "
              << report.acoustic_vectors << ", audio " << report.audio_seconds << " s, simulated "
              << report.simulated_seconds << " s, rtf " << report.real_time_factor << ", score " << report.final_score
              << '\n';
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  }
  return kOk;
}

int make_reference(const std::string& dir, bool planted, std::uint64_t seed, double seconds, std::int64_t n_tokens,
                   std::int64_t n_words) {
  fs::create_directories(dir);
  const auto p = [&](const char* name) { return (fs::path(dir) / name).string(); };
  const auto in = planted ? asrpu::planted_inputs() : asrpu::reference_inputs(seed, seconds, n_tokens, n_words);
  write_tokens(p("tokens.txt"), in.tokens);
  write_lexicon(p("lexicon.txt"), in.lexicon, in.tokens);
  write_lm(p("lm.arpa"), in.lm);
  asrpu::write_wav(p("audio.wav"), in.audio, in.settings.frontend.sample_rate);
  if (planted) {
    asrpu::save_model(p("model.bin"), *in.model);
    std::ofstream os(p("asrpu.cfg"));
    os << "beam_width = " << in.settings.decode.beam_width << '\n';
  } else {
    std::ofstream os(p("model.desc"));
    asrpu::write_descriptor(os, in.model->desc);
  }
  std::cout << "wrote " << (planted ? "planted" : "reference") << " workload to " << dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ASR accelerator simulator"};
  app.require_subcommand(1);

  asrpu::RunManifest m;
  std::string mode = "streaming";
  std::string timeline;
  bool quiet = false;
  double beam = 0, lm_weight = 0, word_penalty = 0;
  auto* run = app.add_subcommand("run", "decode one utterance");
  run->add_option("--config", m.config, "key = value configuration file");
  run->add_option("--model", m.model, "binary model file or text descriptor")->required();
  run->add_option("--lexicon", m.lexicon, "lexicon file")->required();
  run->add_option("--lm", m.lm, "ARPA language model")->required();
  run->add_option("--tokens", m.tokens, "token table")->required();
  run->add_option("--audio", m.audio, "16-bit PCM mono WAV")->required();
  run->add_option("--chunk-ms", m.chunk_ms, "audio per decoding step in streaming mode")->capture_default_str();
  run->add_option("--mode", mode, "streaming or offline")
      ->check(CLI::IsMember({"streaming", "offline"}))
      ->capture_default_str();
  run->add_option("--report", m.report, "JSON report path (a .csv kernel table is written next to it)");
  run->add_option("--timeline", timeline, "per-step thread timeline output");
  run->add_option("--seed", m.seed, "weight seed when --model is a descriptor")->capture_default_str();
  auto* beam_opt = run->add_option("--beam", beam, "beam width (overrides config)");
  auto* lmw_opt = run->add_option("--lm-weight", lm_weight, "LM weight (overrides config)");
  auto* wp_opt = run->add_option("--word-penalty", word_penalty, "word penalty (overrides config)");
  run->add_flag("-q,--quiet", quiet, "only print the transcript");

  std::string out_dir;
  bool planted = false;
  std::uint64_t seed = 1;
  double seconds = 3.0;
  std::int64_t n_tokens = 9000, n_words = 800;
  auto* mk = app.add_subcommand("make-reference", "write a generated workload (tokens, lexicon, LM, audio, model)");
  mk->add_option("dir", out_dir, "output directory")->required();
  mk->add_flag("--planted", planted, "planted-signal workload instead of the TDS reference");
  mk->add_option("--seed", seed)->capture_default_str();
  mk->add_option("--seconds", seconds)->capture_default_str();
  mk->add_option("--tokens", n_tokens)->capture_default_str();
  mk->add_option("--words", n_words)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }

  try {
    if (*run) {
      m.mode = mode == "offline" ? asrpu::RunMode::offline : asrpu::RunMode::streaming;
      if (*beam_opt) m.beam = beam;
      if (*lmw_opt) m.lm_weight = lm_weight;
      if (*wp_opt) m.word_penalty = word_penalty;
      return run_main(m, timeline, quiet);
    }
    return make_reference(out_dir, planted, seed, seconds, n_tokens, n_words);
  } catch (const asrpu::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const asrpu::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const asrpu::ArgumentError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const asrpu::SimulationError& e) {
    std::cerr << "simulation error: " << e.what() << '\n';
    return kSimulation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
