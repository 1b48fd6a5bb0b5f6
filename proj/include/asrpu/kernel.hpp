#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asrpu/config.hpp"
#include "asrpu/hypothesis.hpp"
#include "asrpu/memory.hpp"
#include "asrpu/pe_cost.hpp"

namespace asrpu {

/// Audio samples submitted by the host and not yet released by the frontend.
/// Lives in external memory; indices are counted from the utterance start.
class SampleQueue {
 public:
  void append(std::span<const float> chunk) { samples_.insert(samples_.end(), chunk.begin(), chunk.end()); }
  std::int64_t begin() const noexcept { return base_; }
  std::int64_t end() const noexcept { return base_ + static_cast<std::int64_t>(samples_.size()); }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(samples_.size()); }
  bool empty() const noexcept { return samples_.empty(); }
  float at(std::int64_t index) const { return samples_.at(static_cast<std::size_t>(index - base_)); }

  /// Releases every sample with index < `index`.
  void drop_before(std::int64_t index) {
    while (base_ < index && !samples_.empty()) {
      samples_.pop_front();
      ++base_;
    }
  }
  void clear() {
    samples_.clear();
    base_ = 0;
  }

 private:
  std::deque<float> samples_;
  std::int64_t base_ = 0;
};

/// Everything a kernel routine can reach: the memories and the hypothesis
/// unit of one accelerator instance.
struct Machine {
  explicit Machine(const AcceleratorConfig& cfg)
      : config(cfg),
        shared(cfg.shared_mem_bytes),
        model(cfg.model_mem_bytes, cfg.dma_bytes_per_cycle),
        dcache(cfg.model_mem_bytes, cfg.cache_line_bytes),
        hyps(cfg.hyp_capacity_records(), cfg.merge_mode) {}
  Machine(const Machine&) = delete;
  Machine& operator=(const Machine&) = delete;

  AcceleratorConfig config;
  SharedMemory shared;
  ModelMemory model;
  LruCacheModel dcache;
  HypothesisStore hyps;
  SampleQueue samples;
  double beam_width = 10.0;
};

/// Handed to a setup routine. Buffer operations that must wait for the
/// kernel's threads (publishing outputs, releasing inputs) go through
/// on_complete.
class SetupContext {
 public:
  SetupContext(Machine& m, PEContext& pe, std::int64_t kernel_index)
      : machine(m), pe(pe), kernel_index(kernel_index) {}

  Machine& machine;
  PEContext& pe;
  const std::int64_t kernel_index;

  /// Requests that `blob` be loaded into model memory for this kernel.
  void prefetch(const ModelBlob& blob) { blob_ = blob; }
  const std::optional<ModelBlob>& prefetch_request() const noexcept { return blob_; }

  void on_complete(std::function<void()> fn) { completions_.push_back(std::move(fn)); }
  void run_completions() {
    for (auto& fn : completions_) fn();
    completions_.clear();
  }

 private:
  std::optional<ModelBlob> blob_;
  std::vector<std::function<void()>> completions_;
};

struct ThreadContext {
  Machine& machine;
  PEContext& pe;
  std::int64_t kernel_index;
  std::int64_t thread_id;
  /// Repetition index inside the hypothesis-expansion phase (0 otherwise).
  std::int64_t round;
};

/// Returns the number of kernel threads to launch; zero stops the step.
using SetupRoutine = std::function<std::int64_t(SetupContext&)>;
using KernelRoutine = std::function<void(ThreadContext&)>;

enum class KernelClass { frontend, conv, fc, layernorm, expansion, other };

inline std::string_view to_string(KernelClass c) {
  switch (c) {
    case KernelClass::frontend: return "frontend";
    case KernelClass::conv: return "conv";
    case KernelClass::fc: return "fc";
    case KernelClass::layernorm: return "layernorm";
    case KernelClass::expansion: return "expansion";
    case KernelClass::other: return "other";
  }
  return "other";
}

struct KernelDescriptor {
  std::string name;
  KernelClass cls = KernelClass::other;
  SetupRoutine setup;
  KernelRoutine kernel;
};

/// The two decoding phases as configured through the command interface.
struct PhaseProgram {
  std::vector<KernelDescriptor> acoustic_scoring;
  std::optional<KernelDescriptor> hyp_expansion;

  bool configured() const { return !acoustic_scoring.empty() && hyp_expansion.has_value(); }
};

}  // namespace asrpu
