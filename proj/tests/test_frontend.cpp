#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "asrpu/asrpu.hpp"
#include "support.hpp"

using namespace asrpu;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed, float amp = 0.3f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-amp, amp);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<float> pipeline_frame(const std::vector<float>& x, const FrontendParams& p) {
  const FrontendTables t(p);
  std::vector<float> out(static_cast<std::size_t>(p.n_ceps));
  PEContext pe;
  mfcc_frame(pe, t, [&](std::int64_t i) { return x[static_cast<std::size_t>(i)]; }, 0, out);
  return out;
}

}  // namespace

TEST(Framing, SetupCounts) {
  EXPECT_EQ(frames_available(400, 400, 160), 1);
  EXPECT_EQ(frames_available(399, 400, 160), 0);
  EXPECT_EQ(frames_available(1680, 400, 160), 9);
  // Enumerate window placements.
  for (std::int64_t n = 0; n < 3000; n += 37) {
    std::int64_t count = 0;
    for (std::int64_t s = 0; s + 400 <= n; s += 160) ++count;
    EXPECT_EQ(frames_available(n, 400, 160), count) << n;
  }
}

TEST(Mfcc, MatchesNaiveOracle) {
  FrontendParams p;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = noise(400, 100 + trial);
    const auto got = pipeline_frame(x, p);
    const auto want = oracle::mfcc_frame(std::vector<double>(x.begin(), x.end()), p);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-4) << trial << " " << k;
  }
}

TEST(Mfcc, PureTone) {
  FrontendParams p;
  std::vector<float> x(400);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(i) / 16000.0));
  const auto got = pipeline_frame(x, p);
  const auto want = oracle::mfcc_frame(std::vector<double>(x.begin(), x.end()), p);
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-4);
}

TEST(Mfcc, SilenceIsConstantLogFloor) {
  FrontendParams p;
  const auto got = pipeline_frame(std::vector<float>(400, 0.0f), p);
  EXPECT_NEAR(got[0], std::log(p.log_floor) * std::sqrt(80.0), 1e-3);
  for (std::size_t k = 1; k < got.size(); ++k) EXPECT_NEAR(got[k], 0.0, 1e-3);
}

TEST(Mfcc, ShiftInvariance) {
  FrontendParams p;
  const auto x = noise(16000, 9);
  const auto all = compute_mfcc(x, p);
  for (std::size_t k : {1u, 17u, 90u}) {
    const std::vector<float> shifted(x.begin() + static_cast<std::ptrdiff_t>(k * 160), x.end());
    EXPECT_EQ(compute_mfcc(shifted, p)[0], all[k]);
  }
  EXPECT_EQ(static_cast<std::int64_t>(all.size()), frames_available(16000, 400, 160));
}

TEST(Fft, MatchesNaiveDft) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  FrontendParams p;
  const FrontendTables t(p);
  std::vector<std::complex<double>> x(512);
  for (auto& v : x) v = {d(rng), d(rng)};
  auto y = x;
  PEContext pe;
  fft_radix2(pe, y, t.twiddle);
  for (std::size_t k = 0; k < 512; k += 13) {
    std::complex<double> s = 0;
    for (std::size_t n = 0; n < 512; ++n) s += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * n) / 512.0);
    EXPECT_NEAR(std::abs(y[k] - s), 0.0, 1e-9);
  }
}

TEST(MelProject, Linearity) {
  const MelFilterbank fb(80, 512, 16000);
  const std::vector<double> unit(257, 1.0);
  const auto out = mel_project(fb, unit);
  for (std::int64_t j = 0; j < 80; ++j) {
    double s = 0.0;
    for (std::int64_t b = 0; b < 257; ++b) s += fb.weight(j, b);
    EXPECT_NEAR(out[static_cast<std::size_t>(j)], s, 1e-12);
  }
  std::vector<double> delta(257, 0.0);
  delta[40] = 1.0;
  const auto col = mel_project(fb, delta);
  for (std::int64_t j = 0; j < 80; ++j) EXPECT_DOUBLE_EQ(col[static_cast<std::size_t>(j)], fb.weight(j, 40));
}

TEST(MelProject, InteriorBinsCovered) {
  const MelFilterbank fb(80, 512, 16000);
  // Bins between the first filter's peak and the last filter's peak.
  const double top = hz_to_mel(8000.0);
  for (std::int64_t b = 1; b < 256; ++b) {
    const double m = hz_to_mel(static_cast<double>(b) * 16000.0 / 512.0);
    if (m <= top / 81.0 || m >= top * 80.0 / 81.0) continue;
    double total = 0.0;
    for (std::int64_t j = 0; j < 80; ++j) total += fb.weight(j, b);
    EXPECT_GT(total, 0.0) << b;
  }
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.0)), 1234.0, 1e-9);
}

TEST(Dct, Examples) {
  const std::vector<double> zero(80, 0.0);
  for (double v : dct2(zero)) EXPECT_EQ(v, 0.0);
  const std::vector<double> c(80, 2.0);
  const auto y = dct2(c);
  EXPECT_NEAR(y[0], 2.0 * std::sqrt(80.0), 1e-12);
  for (std::size_t k = 1; k < y.size(); ++k) EXPECT_NEAR(y[k], 0.0, 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  std::vector<double> x(80);
  for (auto& v : x) v = d(rng);
  const auto got = dct2(x);
  for (std::size_t k = 0; k < 80; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < 80; ++i) s += x[i] * std::cos(std::numbers::pi * double(k) * (double(i) + 0.5) / 80.0);
    s *= std::sqrt((k == 0 ? 1.0 : 2.0) / 80.0);
    EXPECT_NEAR(got[k], s, 1e-5);
  }
}

TEST(FrontendKernel, StreamingEqualsWholeSignal) {
  FrontendParams p;
  const auto x = noise(16000, 5);
  const auto ref = compute_mfcc(x, p);
  for (std::int64_t chunk : {1280, 333, 4000}) {
    Accelerator a;
    auto fe = make_frontend_kernel(a.machine(), p);
    std::vector<std::vector<float>> got;
    const int reader = fe.output->add_reader();
    a.configure_acoustic_scoring(0, fe.descriptor);
    a.configure_hyp_expansion({"drain", KernelClass::expansion,
                               [&](SetupContext&) -> std::int64_t {
                                 auto* b = fe.output;
                                 for (auto i = b->reader_mark(reader); i < b->next_write(); ++i)
                                   got.emplace_back(b->item(i).begin(), b->item(i).end());
                                 b->consume_inputs(b->next_write() - b->reader_mark(reader), reader);
                                 return 0;
                               },
                               [](ThreadContext&) {}});
    for (std::size_t pos = 0; pos < x.size(); pos += static_cast<std::size_t>(chunk))
      a.decoding_step(std::span<const float>(x).subspan(pos, std::min<std::size_t>(chunk, x.size() - pos)));
    ASSERT_EQ(got.size(), ref.size()) << chunk;
    for (std::size_t f = 0; f < ref.size(); ++f) ASSERT_EQ(got[f], ref[f]) << chunk << " " << f;
    // Samples before the next frame's window have been released.
    EXPECT_LE(a.pending_samples(), 400 + chunk);
  }
}

TEST(FrontendKernel, FrameCapSpreadsOverSteps) {
  FrontendParams p;
  p.max_frames_per_step = 4;
  Accelerator a;
  auto fe = make_frontend_kernel(a.machine(), p);
  a.configure_acoustic_scoring(0, fe.descriptor);
  a.configure_hyp_expansion({"idle", KernelClass::expansion, [](SetupContext&) -> std::int64_t { return 0; },
                             [](ThreadContext&) {}});
  const auto x = noise(1680, 2);
  EXPECT_EQ(a.decoding_step(x).kernels[0].threads, 4);
  EXPECT_EQ(a.decoding_step({}).kernels[0].threads, 4);
  EXPECT_EQ(a.decoding_step({}).kernels[0].threads, 1);
  EXPECT_TRUE(a.decoding_step({}).early_stop);
}

TEST(FrontendParams, Validation) {
  FrontendParams p;
  p.n_fft = 256;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.n_mels = 300;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.n_fft = 500;
  EXPECT_THROW(p.validate(), ConfigError);
}
