#include <gtest/gtest.h>

#include <memory>
#include <random>
#include <vector>

#include "asrpu/asrpu.hpp"
#include "support.hpp"

using namespace asrpu;

namespace {

/// Kernel whose setup charges `setup_cost` and launches costs.size() threads;
/// thread t charges costs[t].
KernelDescriptor costed(std::int64_t setup_cost, std::vector<std::int64_t> costs, std::string name = "k") {
  auto c = std::make_shared<std::vector<std::int64_t>>(std::move(costs));
  return {std::move(name), KernelClass::other,
          [setup_cost, c](SetupContext& ctx) -> std::int64_t {
            ctx.pe.add(setup_cost);
            return static_cast<std::int64_t>(c->size());
          },
          [c](ThreadContext& tc) { tc.pe.add((*c)[static_cast<std::size_t>(tc.thread_id)]); }};
}

/// Expansion that runs `rounds` times; every hypothesis spawns `fan` children.
KernelDescriptor branching(std::int64_t rounds, int fan) {
  return {"hyp", KernelClass::expansion, [rounds](SetupContext&) { return rounds; },
          [fan](ThreadContext& tc) {
            const auto& h = tc.machine.hyps.active_at(tc.thread_id);
            for (int i = 0; i < fan; ++i) {
              Hypothesis c = h;
              c.hash = h.hash * 31 + static_cast<std::uint64_t>(i) + 1;
              c.score = h.score - i;
              tc.pe.add(3);
              tc.machine.hyps.submit(c);
            }
          }};
}

}  // namespace

TEST(ExecutionUnit, UniformKernelClosedForm) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  const std::int64_t S = 40, C = 7, T = 9000;
  prog.acoustic_scoring.push_back(costed(S, std::vector<std::int64_t>(T, C)));
  prog.hyp_expansion = branching(0, 1);
  m.hyps.reset_with_seed({});
  const auto r = run_decoding_step(m, prog, 0);
  EXPECT_EQ(r.timeline.step_cycles, S + (T + 7) / 8 * C);
  EXPECT_EQ(r.kernels[0].span_cycles, (T + 7) / 8 * C);
  EXPECT_EQ(r.stop_kernel, 1);
  EXPECT_DOUBLE_EQ(r.step_time_seconds, static_cast<double>(r.timeline.step_cycles) / 500e6);
}

TEST(ExecutionUnit, FirstSetupZeroStops) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  prog.acoustic_scoring.push_back(costed(5, {}));
  prog.acoustic_scoring.push_back(costed(5, {1, 1}));
  prog.hyp_expansion = branching(1, 1);
  m.hyps.reset_with_seed({});
  const auto r = run_decoding_step(m, prog, 0);
  EXPECT_TRUE(r.early_stop);
  EXPECT_EQ(r.stop_kernel, 0);
  ASSERT_EQ(r.timeline.records.size(), 1u);
  EXPECT_EQ(r.timeline.records[0].kind, ThreadKind::setup);
  EXPECT_EQ(r.timeline.step_cycles, 5);
  EXPECT_EQ(r.hyp_expansion_repeats, 0);
}

TEST(ExecutionUnit, ExpansionRounds) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  prog.acoustic_scoring.push_back(costed(1, {1}));
  prog.hyp_expansion = branching(3, 2);
  m.hyps.reset_with_seed({});
  m.beam_width = 100.0;
  const auto r = run_decoding_step(m, prog, 0);
  EXPECT_EQ(r.acoustic_vectors_emitted, 3);
  EXPECT_EQ(r.hyp_expansion_repeats, 3);
  // 1, 2, 4 threads over the three rounds.
  EXPECT_EQ(r.kernels[1].threads, 7);
  EXPECT_EQ(r.active_hypotheses_after, 8);
  EXPECT_EQ(oracle::check_timeline(r.timeline, 8), "");
}

TEST(ExecutionUnit, ZeroBeamRoundLaunchesTiedBest) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  prog.acoustic_scoring.push_back(costed(1, {1}));
  // Children: scores h, h-1, h (two tied best).
  prog.hyp_expansion = KernelDescriptor{"hyp", KernelClass::expansion, [](SetupContext&) -> std::int64_t { return 2; },
                                        [](ThreadContext& tc) {
                                          const auto h = tc.machine.hyps.active_at(tc.thread_id);
                                          for (int i = 0; i < 3; ++i) {
                                            Hypothesis c = h;
                                            c.hash = h.hash * 7 + static_cast<std::uint64_t>(i) + 1;
                                            c.score = h.score - (i == 1 ? 1.0 : 0.0);
                                            tc.machine.hyps.submit(c);
                                          }
                                        }};
  m.hyps.reset_with_seed({});
  m.beam_width = 0.0;
  const auto r = run_decoding_step(m, prog, 0);
  EXPECT_EQ(r.kernels[1].threads, 1 + 2);
  EXPECT_EQ(r.active_hypotheses_after, 4);
}

TEST(ExecutionUnit, FaultCarriesKernelAndThread) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  prog.acoustic_scoring.push_back(costed(1, {1}));
  prog.acoustic_scoring.push_back({"bad", KernelClass::other, [](SetupContext&) -> std::int64_t { return 4; },
                                   [](ThreadContext& tc) {
                                     if (tc.thread_id == 2) throw KernelFault("boom");
                                   }});
  prog.hyp_expansion = branching(0, 1);
  m.hyps.reset_with_seed({});
  try {
    run_decoding_step(m, prog, 0);
    FAIL();
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.kernel_index(), 1);
    EXPECT_EQ(e.thread_id(), 2);
  }
}

TEST(ExecutionUnit, EmptyExpansionIsAnError) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  prog.acoustic_scoring.push_back(costed(1, {1}));
  prog.hyp_expansion = branching(1, 0);
  m.hyps.reset_with_seed({});
  EXPECT_THROW(run_decoding_step(m, prog, 0), SimulationError);
}

TEST(ExecutionUnit, DmaGatesKernelZero) {
  Machine m(AcceleratorConfig{});
  PhaseProgram prog;
  KernelDescriptor k = costed(2, {5});
  auto inner = k.setup;
  k.setup = [inner](SetupContext& ctx) {
    ctx.prefetch({42, 8000});
    return inner(ctx);
  };
  prog.acoustic_scoring.push_back(k);
  prog.hyp_expansion = branching(0, 1);
  m.hyps.reset_with_seed({});
  const auto r = run_decoding_step(m, prog, 0);
  EXPECT_EQ(r.first_setup_cycles, 1000);
  EXPECT_EQ(r.timeline.step_cycles, 1005);
  EXPECT_EQ(r.dma_bytes, 8000);
  // Resident on the next step (prefetched at the early stop): no wait.
  const auto r2 = run_decoding_step(m, prog, 1);
  EXPECT_EQ(r2.first_setup_cycles, 2);
}

TEST(ExecutionUnit, DeterministicReports) {
  auto once = [] {
    Machine m(AcceleratorConfig{});
    PhaseProgram prog;
    prog.acoustic_scoring.push_back(costed(3, {4, 9, 2, 7, 7, 1, 30, 2, 2}));
    prog.acoustic_scoring.push_back(costed(8, {1, 2, 3}));
    prog.hyp_expansion = branching(2, 3);
    m.hyps.reset_with_seed({});
    return run_decoding_step(m, prog, 0);
  };
  EXPECT_EQ(once(), once());
}

TEST(ExecutionUnit, RandomProgramsKeepInvariants) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    AcceleratorConfig cfg;
    cfg.num_pes = 1 + static_cast<std::int64_t>(rng() % 16);
    Machine m(cfg);
    PhaseProgram prog;
    const int K = 1 + static_cast<int>(rng() % 5);
    for (int k = 0; k < K; ++k) {
      std::vector<std::int64_t> costs(1 + rng() % 30);
      for (auto& c : costs) c = static_cast<std::int64_t>(rng() % 100);
      prog.acoustic_scoring.push_back(costed(static_cast<std::int64_t>(rng() % 20), costs));
    }
    prog.hyp_expansion = branching(static_cast<std::int64_t>(rng() % 3), 2);
    m.hyps.reset_with_seed({});
    m.beam_width = 1.5;
    const auto r = run_decoding_step(m, prog, 0);
    ASSERT_EQ(oracle::check_timeline(r.timeline, cfg.num_pes), "") << trial;
    std::int64_t busy = 0;
    for (const auto& k : r.kernels) busy += k.busy_cycles + k.setup_cycles;
    EXPECT_LE(busy, cfg.num_pes * r.timeline.step_cycles);
  }
}
