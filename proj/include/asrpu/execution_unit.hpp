#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "asrpu/config.hpp"
#include "asrpu/error.hpp"
#include "asrpu/kernel.hpp"
#include "asrpu/schedule.hpp"

namespace asrpu {

/// Per-kernel accounting for one step.
struct KernelStat {
  std::int64_t kernel_index = 0;
  std::string name;
  KernelClass cls = KernelClass::other;
  std::int64_t threads = 0;
  std::int64_t setup_cycles = 0;
  std::int64_t busy_cycles = 0;  // sum of kernel-thread instructions
  std::int64_t span_cycles = 0;  // gate to last thread end

  friend bool operator==(const KernelStat&, const KernelStat&) = default;
};

struct StepReport {
  std::int64_t step_index = 0;
  Timeline timeline;
  std::int64_t acoustic_vectors_emitted = 0;
  std::int64_t hyp_expansion_repeats = 0;
  std::int64_t active_hypotheses_after = 0;
  std::vector<std::string> best_partial_transcript;
  double best_score = 0.0;
  double step_time_seconds = 0.0;

  bool early_stop = false;
  /// Kernel whose setup returned zero (acoustic-scoring count == expansion).
  std::int64_t stop_kernel = -1;
  std::int64_t acoustic_scoring_cycles = 0;
  std::int64_t finalize_cycles = 0;
  std::int64_t first_setup_cycles = 0;
  std::vector<KernelStat> kernels;

  std::int64_t shared_mem_live_bytes = 0;
  std::int64_t shared_mem_peak_bytes = 0;
  std::int64_t dma_bytes = 0;
  std::int64_t cache_hits = 0;
  std::int64_t cache_misses = 0;
  std::int64_t peak_incoming_hypotheses = 0;

  friend bool operator==(const StepReport&, const StepReport&) = default;
};

namespace detail {

template <class Fn>
auto guard_routine(std::int64_t kernel_index, std::int64_t thread_id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const CapacityError& e) {
    if (e.kernel_index() != SimulationError::kNoIndex) throw;
    throw CapacityError(e.what(), kernel_index, thread_id);
  } catch (const SimulationError& e) {
    if (e.kernel_index() != SimulationError::kNoIndex) throw;
    throw SimulationError(e.what(), kernel_index, thread_id);
  } catch (const KernelFault& e) {
    throw SimulationError(e.what(), kernel_index, thread_id);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw SimulationError(e.what(), kernel_index, thread_id);
  }
}

struct SetupOutcome {
  std::int64_t n_threads = 0;
  std::int64_t cost = 0;
  std::optional<ModelBlob> blob;
};

}  // namespace detail

/// Runs one decoding step: the acoustic-scoring kernels in order, then the
/// hypothesis-expansion kernel once per emitted acoustic vector. Kernel
/// routines execute functionally in serial order; the timeline is derived
/// from their charged instruction counts.
inline StepReport run_decoding_step(Machine& m, const PhaseProgram& program, std::int64_t step_index,
                                    const std::function<std::vector<std::string>(const Hypothesis&)>& transcribe = {}) {
  if (!program.configured()) throw ConfigError("decoding step issued before both phases are configured");
  const auto& cfg = m.config;
  const auto n_as = static_cast<std::int64_t>(program.acoustic_scoring.size());
  const std::int64_t hyp_index = n_as;

  StepReport report;
  report.step_index = step_index;
  m.model.begin_step();
  m.shared.reset_peak();
  const auto dma_before = m.model.bytes_transferred();
  const auto hits_before = m.dcache.hits();
  const auto misses_before = m.dcache.misses();

  std::vector<KernelStat> stats(static_cast<std::size_t>(n_as + 1));
  for (std::int64_t k = 0; k < n_as; ++k) {
    const auto& kd = program.acoustic_scoring[static_cast<std::size_t>(k)];
    stats[static_cast<std::size_t>(k)] = {k, kd.name, kd.cls};
  }
  stats.back() = {hyp_index, program.hyp_expansion->name, program.hyp_expansion->cls};

  std::optional<PEContext> setup_pe;
  std::optional<SetupContext> pending_ctx;
  std::optional<ModelBlob> kernel0_blob;

  auto run_setup = [&](std::int64_t k, const KernelDescriptor& kd) {
    pending_ctx.reset();
    setup_pe.emplace(cfg.costs, cfg.mac_width);
    pending_ctx.emplace(m, *setup_pe, k);
    detail::SetupOutcome out;
    out.n_threads = detail::guard_routine(k, 0, [&] { return kd.setup(*pending_ctx); });
    if (out.n_threads < 0) throw SimulationError("setup returned a negative thread count", k, 0);
    out.cost = setup_pe->instruction_count();
    out.blob = pending_ctx->prefetch_request();
    stats[static_cast<std::size_t>(k)].setup_cycles += out.cost;
    return out;
  };

  auto run_threads = [&](std::int64_t k, const KernelDescriptor& kd, std::int64_t n, std::int64_t round) {
    std::vector<std::int64_t> costs(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
      PEContext pe(cfg.costs, cfg.mac_width);
      ThreadContext tc{m, pe, k, t, round};
      detail::guard_routine(k, t, [&] { kd.kernel(tc); });
      costs[static_cast<std::size_t>(t)] = pe.instruction_count();
    }
    auto& st = stats[static_cast<std::size_t>(k)];
    st.threads += n;
    for (auto c : costs) st.busy_cycles += c;
    return costs;
  };

  auto complete = [&](std::int64_t k) {
    detail::guard_routine(k, SimulationError::kNoIndex, [&] { pending_ctx->run_completions(); });
  };

  StepScheduler sched(cfg.num_pes);
  const auto& first = program.acoustic_scoring.front();
  auto current = run_setup(0, first);
  std::int64_t wait = 0;
  if (current.blob) {
    kernel0_blob = current.blob;
    wait = detail::guard_routine(0, 0, [&] { return m.model.dma_prefetch(*current.blob, 0); });
  }
  report.first_setup_cycles = sched.first_setup(0, current.cost, wait);

  std::int64_t n_vectors = 0;
  bool stopped = false;
  if (current.n_threads == 0) {
    stopped = true;
    report.stop_kernel = 0;
    sched.mark_early_stop();
  }

  for (std::int64_t k = 0; k < n_as && !stopped; ++k) {
    const auto& kd = program.acoustic_scoring[static_cast<std::size_t>(k)];
    const auto costs = run_threads(k, kd, current.n_threads, 0);
    complete(k);

    const bool last = k + 1 == n_as;
    const auto& next_kd = last ? *program.hyp_expansion : program.acoustic_scoring[static_cast<std::size_t>(k + 1)];
    const std::int64_t next_index = last ? hyp_index : k + 1;
    const auto issue = sched.gate();
    auto next = run_setup(next_index, next_kd);

    std::int64_t ready = 0;
    if (next.blob && next.n_threads > 0) {
      const auto done = detail::guard_routine(next_index, 0, [&] { return m.model.dma_prefetch(*next.blob, issue); });
      if (cfg.dma_gating == DmaGating::all) ready = done;
    }
    const auto span = sched.run_kernel(k, costs, NextSetup{next_index, next.cost, ready});
    stats[static_cast<std::size_t>(k)].span_cycles = span.threads_end - span.gate;

    if (next.n_threads == 0) {
      stopped = true;
      report.stop_kernel = next_index;
      sched.mark_early_stop();
      complete(next_index);
      if (cfg.prefetch_on_stop && kernel0_blob)
        m.model.dma_prefetch(*kernel0_blob, span.next_setup_end);
      break;
    }
    if (last) n_vectors = next.n_threads;
    current = next;
  }

  report.acoustic_scoring_cycles = sched.gate();

  if (!stopped) {
    // Model memory switches to cache mode for graph accesses.
    m.model.flush();
    m.dcache.flush();
    const auto& hk = *program.hyp_expansion;
    std::int64_t first_tid = 0;
    for (std::int64_t r = 0; r < n_vectors; ++r) {
      const auto n = m.hyps.active_count();
      if (n == 0) throw SimulationError("no active hypotheses to expand", hyp_index);
      const auto costs = run_threads(hyp_index, hk, n, r);
      sched.run_kernel(hyp_index, costs, std::nullopt, first_tid, r);
      first_tid += n;
      const auto incoming = m.hyps.incoming_count();
      detail::guard_routine(hyp_index, SimulationError::kNoIndex, [&] { return m.hyps.finalize_step(m.beam_width); });
      const auto gap = incoming * cfg.finalize_cycles_per_record;
      sched.add_gap(gap);
      report.finalize_cycles += gap;
      ++report.hyp_expansion_repeats;
    }
    complete(hyp_index);
  }

  report.acoustic_vectors_emitted = n_vectors;
  report.timeline = sched.finish();
  if (auto it = report.timeline.per_kernel_cycles.find(hyp_index); it != report.timeline.per_kernel_cycles.end())
    stats.back().span_cycles = it->second;
  report.early_stop = report.timeline.early_stop;
  report.step_time_seconds = compute_makespan(report.timeline, cfg);
  report.kernels = std::move(stats);
  report.active_hypotheses_after = m.hyps.active_count();
  if (m.hyps.active_count() > 0) {
    const auto& best = m.hyps.best_hypothesis();
    report.best_score = best.score;
    if (transcribe) report.best_partial_transcript = transcribe(best);
  }
  report.shared_mem_live_bytes = m.shared.occupied_bytes();
  report.shared_mem_peak_bytes = m.shared.peak_bytes();
  report.dma_bytes = m.model.bytes_transferred() - dma_before;
  report.cache_hits = m.dcache.hits() - hits_before;
  report.cache_misses = m.dcache.misses() - misses_before;
  report.peak_incoming_hypotheses = m.hyps.peak_incoming();
  return report;
}

}  // namespace asrpu
