#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "asrpu/config.hpp"
#include "asrpu/error.hpp"

namespace asrpu {

enum class ThreadKind { setup, kernel };

inline std::string_view to_string(ThreadKind k) { return k == ThreadKind::setup ? "setup" : "kernel"; }

struct ThreadRecord {
  std::int64_t kernel_index = 0;
  std::int64_t thread_id = 0;
  std::int64_t pe_id = 0;
  std::int64_t start_cycle = 0;
  std::int64_t end_cycle = 0;
  ThreadKind kind = ThreadKind::kernel;
  std::int64_t round = 0;  // hypothesis-expansion repetition

  friend bool operator==(const ThreadRecord&, const ThreadRecord&) = default;
};

struct Timeline {
  std::vector<ThreadRecord> records;
  std::int64_t step_cycles = 0;
  bool early_stop = false;
  /// Cycles from a kernel's dispatch gate until its last thread finishes.
  std::map<std::int64_t, std::int64_t> per_kernel_cycles;

  friend bool operator==(const Timeline&, const Timeline&) = default;
};

/// Seconds for a step at one instruction per PE cycle.
inline double compute_makespan(const Timeline& timeline, const AcceleratorConfig& config) {
  return static_cast<double>(timeline.step_cycles) / static_cast<double>(config.frequency_hz);
}

/// One line per record: kernel_index thread_id kind pe_id start_cycle end_cycle
inline void write_timeline(std::ostream& os, const Timeline& t) {
  for (const auto& r : t.records)
    os << r.kernel_index << ' ' << r.thread_id << ' ' << to_string(r.kind) << ' ' << r.pe_id << ' '
       << r.start_cycle << ' ' << r.end_cycle << '\n';
}

/// Pool of PEs under greedy dispatch: each thread goes to the PE that turns
/// idle first, ties to the lowest pe_id.
class PePool {
 public:
  explicit PePool(std::int64_t num_pes) : free_at_(static_cast<std::size_t>(num_pes), 0) {
    if (num_pes <= 0) throw ConfigError("num_pes must be > 0");
  }

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(free_at_.size()); }

  void advance_all_to(std::int64_t cycle) {
    for (auto& f : free_at_) f = std::max(f, cycle);
  }

  ThreadRecord dispatch(std::int64_t kernel_index, std::int64_t thread_id, ThreadKind kind, std::int64_t cost) {
    if (cost < 0) throw SimulationError("negative thread cost", kernel_index, thread_id);
    const auto it = std::min_element(free_at_.begin(), free_at_.end());
    const auto pe = static_cast<std::int64_t>(it - free_at_.begin());
    ThreadRecord r{kernel_index, thread_id, pe, *it, *it + cost, kind};
    *it = r.end_cycle;
    return r;
  }

 private:
  std::vector<std::int64_t> free_at_;
};

struct KernelSpan {
  std::int64_t gate = 0;          // cycle the kernel's threads became dispatchable
  std::int64_t threads_end = 0;   // last thread of the kernel finished
  std::int64_t next_setup_end = 0;
  std::int64_t next_gate = 0;     // when the following kernel may start
};

struct NextSetup {
  std::int64_t kernel_index = 0;
  std::int64_t cost = 0;
  /// The next kernel's threads may not start before this cycle (DMA).
  std::int64_t ready_cycle = 0;
};

/// Event-level schedule of one decoding step. Kernel threads of kernel k all
/// finish before any thread of kernel k+1 starts; only the setup thread of
/// kernel k+1 overlaps kernel k.
class StepScheduler {
 public:
  explicit StepScheduler(std::int64_t num_pes) : pool_(num_pes) {}

  /// Dispatches the setup thread of the first kernel at cycle 0. The thread
  /// holds its PE until `wait_until` (model DMA it waits on).
  std::int64_t first_setup(std::int64_t kernel_index, std::int64_t cost, std::int64_t wait_until = 0) {
    auto r = pool_.dispatch(kernel_index, 0, ThreadKind::setup, cost);
    r.end_cycle = std::max(r.end_cycle, wait_until);
    pool_.advance_all_to(0);
    record(r);
    gate_ = r.end_cycle;
    pool_.advance_all_to(gate_);
    return gate_;
  }

  /// Cycle at which the next kernel's threads (and the setup after it) are
  /// dispatched.
  std::int64_t gate() const noexcept { return gate_; }

  /// Dispatches `next` (if any) on the first idle PE, then every thread of
  /// `kernel_index` in thread-id order.
  KernelSpan run_kernel(std::int64_t kernel_index, std::span<const std::int64_t> thread_costs,
                        std::optional<NextSetup> next = std::nullopt, std::int64_t first_thread_id = 0,
                        std::int64_t round = 0) {
    KernelSpan span{gate_, gate_, gate_, gate_};
    pool_.advance_all_to(gate_);
    if (next) {
      const auto r = pool_.dispatch(next->kernel_index, 0, ThreadKind::setup, next->cost);
      span.next_setup_end = r.end_cycle;
      record(r);
    }
    for (std::size_t i = 0; i < thread_costs.size(); ++i) {
      auto r = pool_.dispatch(kernel_index, first_thread_id + static_cast<std::int64_t>(i), ThreadKind::kernel,
                              thread_costs[i]);
      r.round = round;
      span.threads_end = std::max(span.threads_end, r.end_cycle);
      record(r);
    }
    timeline_.per_kernel_cycles[kernel_index] += span.threads_end - span.gate;
    span.next_gate = std::max(span.threads_end, span.next_setup_end);
    if (next) span.next_gate = std::max(span.next_gate, next->ready_cycle);
    gate_ = span.next_gate;
    return span;
  }

  /// Stalls the controller (e.g. hypothesis-unit finalize) before the next
  /// dispatch.
  void add_gap(std::int64_t cycles) { gate_ += cycles; }

  void mark_early_stop() { timeline_.early_stop = true; }

  Timeline finish() {
    timeline_.step_cycles = gate_;
    for (const auto& r : timeline_.records) timeline_.step_cycles = std::max(timeline_.step_cycles, r.end_cycle);
    return std::move(timeline_);
  }

 private:
  void record(const ThreadRecord& r) { timeline_.records.push_back(r); }

  PePool pool_;
  Timeline timeline_;
  std::int64_t gate_ = 0;
};

}  // namespace asrpu
