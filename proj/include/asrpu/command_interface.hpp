#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "asrpu/config.hpp"
#include "asrpu/error.hpp"
#include "asrpu/execution_unit.hpp"
#include "asrpu/kernel.hpp"

namespace asrpu {

struct DecoderState {
  double beam_width = 10.0;
  bool utterance_open = false;
  std::int64_t step_counter = 0;
};

/// The accelerator as seen from the host: the command set plus the state it
/// keeps between commands. Commands are processed strictly in issue order.
class Accelerator {
 public:
  explicit Accelerator(const AcceleratorConfig& config = {}) : machine_(std::make_unique<Machine>(validated(config))) {
    clean_decoding();
  }

  /// Sets slot n of the acoustic-scoring phase. n may overwrite an existing
  /// slot or append directly after the last one.
  void configure_acoustic_scoring(std::int64_t n_kernel, KernelDescriptor kd) {
    ensure_idle();
    auto& list = program_.acoustic_scoring;
    if (n_kernel < 0 || n_kernel > static_cast<std::int64_t>(list.size()))
      throw ConfigError("acoustic scoring kernel " + std::to_string(n_kernel) + " leaves a gap (configured: " +
                        std::to_string(list.size()) + ")");
    if (!kd.setup || !kd.kernel) throw ConfigError("kernel " + std::to_string(n_kernel) + " needs setup and kernel routines");
    if (n_kernel == static_cast<std::int64_t>(list.size()))
      list.push_back(std::move(kd));
    else
      list[static_cast<std::size_t>(n_kernel)] = std::move(kd);
  }

  void configure_acoustic_scoring(std::int64_t n_kernel, SetupRoutine setup, KernelRoutine kernel) {
    configure_acoustic_scoring(n_kernel, KernelDescriptor{"kernel" + std::to_string(n_kernel), KernelClass::other,
                                                          std::move(setup), std::move(kernel)});
  }

  /// The expansion descriptor's setup returns how many acoustic vectors to
  /// expand this step; its kernel runs once per active hypothesis.
  void configure_hyp_expansion(KernelDescriptor kd) {
    ensure_idle();
    if (!kd.setup || !kd.kernel) throw ConfigError("hypothesis expansion needs setup and kernel routines");
    program_.hyp_expansion = std::move(kd);
  }

  void configure_beam_width(double beam) {
    ensure_idle();
    if (std::isnan(beam) || beam < 0.0) throw ArgumentError("beam width must be >= 0");
    state_.beam_width = beam;
    machine_->beam_width = beam;
  }

  /// Ends the utterance: hypothesis memory holds only the root seed, every
  /// shared-memory buffer is emptied, pending audio is dropped.
  void clean_decoding() {
    ensure_idle();
    machine_->hyps.reset_with_seed(seed_);
    machine_->shared.clear_all();
    machine_->samples.clear();
    machine_->dcache.flush();
    state_.utterance_open = false;
    state_.step_counter = 0;
  }

  StepReport decoding_step(std::span<const float> signal_chunk) {
    ensure_idle();
    if (!program_.configured()) throw ConfigError("decoding step issued before both phases are configured");
    machine_->samples.append(signal_chunk);
    state_.utterance_open = true;
    busy_ = true;
    struct Reset {
      bool& flag;
      ~Reset() { flag = false; }
    } reset{busy_};
    auto report = run_decoding_step(*machine_, program_, state_.step_counter, transcriber_);
    ++state_.step_counter;
    return report;
  }

  /// Root hypothesis installed by clean_decoding (lexicon root, initial LM
  /// context). Takes effect at the next clean_decoding.
  void set_root_seed(const Hypothesis& seed) { seed_ = seed; }
  const Hypothesis& root_seed() const noexcept { return seed_; }

  /// Maps a hypothesis to its word sequence for step reports.
  void set_transcriber(std::function<std::vector<std::string>(const Hypothesis&)> fn) { transcriber_ = std::move(fn); }

  bool busy() const noexcept { return busy_; }
  Machine& machine() noexcept { return *machine_; }
  const Machine& machine() const noexcept { return *machine_; }
  const AcceleratorConfig& config() const noexcept { return machine_->config; }
  const DecoderState& state() const noexcept { return state_; }
  const PhaseProgram& program() const noexcept { return program_; }
  std::int64_t pending_samples() const noexcept { return machine_->samples.size(); }

 private:
  static const AcceleratorConfig& validated(const AcceleratorConfig& c) {
    c.validate();
    return c;
  }
  void ensure_idle() const {
    if (busy_) throw BusyError("command issued while a decoding step is in flight");
  }

  std::unique_ptr<Machine> machine_;
  PhaseProgram program_;
  DecoderState state_;
  Hypothesis seed_{hypothesis_hash(kRootLabeling, true), kRootLabeling, 0.0, 0, 0, kNoLink, kBlank};
  std::function<std::vector<std::string>(const Hypothesis&)> transcriber_;
  bool busy_ = false;
};

}  // namespace asrpu
