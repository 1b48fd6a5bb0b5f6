#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "asrpu/error.hpp"
#include "asrpu/kernel.hpp"
#include "asrpu/pe_cost.hpp"

namespace asrpu {

enum class WindowKind { hamming, hann, rectangular };

struct FrontendParams {
  std::int64_t sample_rate = 16000;
  std::int64_t frame_len_ms = 25;
  std::int64_t frame_shift_ms = 10;
  std::int64_t n_mels = 80;
  std::int64_t n_ceps = 80;
  std::int64_t n_fft = 512;
  double preemphasis = 0.97;
  WindowKind window = WindowKind::hamming;
  double log_floor = 1e-10;
  /// Upper bound on frames extracted in one step (0 = no bound).
  std::int64_t max_frames_per_step = 0;

  std::int64_t frame_len() const { return sample_rate * frame_len_ms / 1000; }
  std::int64_t frame_shift() const { return sample_rate * frame_shift_ms / 1000; }

  void validate() const {
    if (sample_rate <= 0 || frame_len() <= 0 || frame_shift() <= 0) throw ConfigError("frontend: bad sample rate or framing");
    if (!std::has_single_bit(static_cast<std::uint64_t>(n_fft))) throw ConfigError("frontend: n_fft must be a power of two");
    if (n_fft < frame_len()) throw ConfigError("frontend: n_fft shorter than the frame");
    if (n_mels <= 0 || n_mels > n_fft / 2) throw ConfigError("frontend: n_mels must be in (0, n_fft/2]");
    if (n_ceps <= 0 || n_ceps > n_mels) throw ConfigError("frontend: n_ceps must be in (0, n_mels]");
    if (!(log_floor > 0.0)) throw ConfigError("frontend: log_floor must be > 0");
    if (max_frames_per_step < 0) throw ConfigError("frontend: max_frames_per_step must be >= 0");
  }
};

/// Frames whose window fits in the first `available` samples.
constexpr std::int64_t frames_available(std::int64_t available, std::int64_t frame_len, std::int64_t shift) {
  return available < frame_len ? 0 : (available - frame_len) / shift + 1;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist,
/// evaluated at each FFT bin's centre frequency. Row-major n_mels x bins.
class MelFilterbank {
 public:
  MelFilterbank(std::int64_t n_mels, std::int64_t n_fft, std::int64_t sample_rate)
      : n_mels_(n_mels), n_bins_(n_fft / 2 + 1), weights_(static_cast<std::size_t>(n_mels * (n_fft / 2 + 1)), 0.0) {
    const double top = hz_to_mel(static_cast<double>(sample_rate) / 2.0);
    std::vector<double> edge(static_cast<std::size_t>(n_mels + 2));
    for (std::size_t i = 0; i < edge.size(); ++i) edge[i] = top * static_cast<double>(i) / static_cast<double>(n_mels + 1);
    first_.assign(static_cast<std::size_t>(n_mels), n_bins_);
    last_.assign(static_cast<std::size_t>(n_mels), 0);
    for (std::int64_t b = 0; b < n_bins_; ++b) {
      const double m = hz_to_mel(static_cast<double>(b) * static_cast<double>(sample_rate) / static_cast<double>(n_fft));
      for (std::int64_t j = 0; j < n_mels; ++j) {
        const double l = edge[j], c = edge[j + 1], r = edge[j + 2];
        double w = 0.0;
        if (m > l && m < c)
          w = (m - l) / (c - l);
        else if (m >= c && m < r)
          w = (r - m) / (r - c);
        if (w > 0.0) {
          weights_[static_cast<std::size_t>(j * n_bins_ + b)] = w;
          first_[j] = std::min(first_[j], b);
          last_[j] = std::max(last_[j], b + 1);
        }
      }
    }
    for (std::int64_t j = 0; j < n_mels; ++j)
      if (first_[j] >= last_[j]) first_[j] = last_[j] = 0;
  }

  std::int64_t n_mels() const noexcept { return n_mels_; }
  std::int64_t n_bins() const noexcept { return n_bins_; }
  double weight(std::int64_t filter, std::int64_t bin) const {
    return weights_[static_cast<std::size_t>(filter * n_bins_ + bin)];
  }
  /// Nonzero support [begin, end) of a filter.
  std::int64_t support_begin(std::int64_t filter) const { return first_[filter]; }
  std::int64_t support_end(std::int64_t filter) const { return last_[filter]; }

 private:
  std::int64_t n_mels_;
  std::int64_t n_bins_;
  std::vector<double> weights_;
  std::vector<std::int64_t> first_, last_;
};

/// Orthonormal DCT-II basis, n_out rows of n_in.
inline std::vector<double> dct2_matrix(std::int64_t n_in, std::int64_t n_out) {
  std::vector<double> m(static_cast<std::size_t>(n_in * n_out));
  const double n = static_cast<double>(n_in);
  for (std::int64_t k = 0; k < n_out; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::int64_t i = 0; i < n_in; ++i)
      m[static_cast<std::size_t>(k * n_in + i)] =
          s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
  }
  return m;
}

/// Read-only constants of the frontend kernel (window, twiddles, filterbank,
/// DCT basis). They live in model memory while the kernel runs.
struct FrontendTables {
  explicit FrontendTables(const FrontendParams& p)
      : params(p), mel(p.n_mels, p.n_fft, p.sample_rate), dct(dct2_matrix(p.n_mels, p.n_ceps)) {
    p.validate();
    const auto w = p.frame_len();
    window.resize(static_cast<std::size_t>(w));
    for (std::int64_t i = 0; i < w; ++i) {
      const double x = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(w - 1);
      switch (p.window) {
        case WindowKind::hamming: window[i] = 0.54 - 0.46 * std::cos(x); break;
        case WindowKind::hann: window[i] = 0.5 - 0.5 * std::cos(x); break;
        case WindowKind::rectangular: window[i] = 1.0; break;
      }
    }
    twiddle.resize(static_cast<std::size_t>(p.n_fft / 2));
    for (std::int64_t k = 0; k < p.n_fft / 2; ++k)
      twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(p.n_fft));
  }

  /// Bytes occupied in model memory (stored as f32).
  std::int64_t footprint_bytes() const {
    std::int64_t mel_bytes = 0;
    for (std::int64_t j = 0; j < mel.n_mels(); ++j) mel_bytes += 4 * (mel.support_end(j) - mel.support_begin(j));
    return 4 * static_cast<std::int64_t>(window.size()) + 8 * static_cast<std::int64_t>(twiddle.size()) + mel_bytes +
           4 * static_cast<std::int64_t>(dct.size());
  }

  FrontendParams params;
  MelFilterbank mel;
  std::vector<double> dct;
  std::vector<double> window;
  std::vector<std::complex<double>> twiddle;
};

constexpr std::uint64_t reverse_bits(std::uint64_t v, int bits) {
  std::uint64_t r = 0;
  for (int b = 0; b < bits; ++b) r |= ((v >> b) & 1u) << (bits - 1 - b);
  return r;
}

/// In-place iterative radix-2 FFT, charging each butterfly to `pe`.
inline void fft_radix2(PEContext& pe, std::span<std::complex<double>> x, std::span<const std::complex<double>> twiddle) {
  const auto n = static_cast<std::int64_t>(x.size());
  const int bits = std::countr_zero(static_cast<std::uint64_t>(n));
  pe.loop(n, [&](std::int64_t i) {
    const auto j = static_cast<std::int64_t>(reverse_bits(static_cast<std::uint64_t>(i), bits));
    pe.compare();
    pe.branch();
    if (i < j) {
      std::swap(x[i], x[j]);
      pe.load(4);
      pe.store(4);
    }
  });
  for (std::int64_t len = 2; len <= n; len <<= 1) {
    const auto half = len / 2, step = n / len;
    pe.add();
    pe.loop(n / len, [&](std::int64_t blk) {
      const auto base = blk * len;
      pe.mul();
      pe.loop(half, [&](std::int64_t k) {
        const auto w = twiddle[static_cast<std::size_t>(k * step)];
        const auto a = x[base + k], b = x[base + k + half] * w;
        x[base + k] = a + b;
        x[base + k + half] = a - b;
        pe.mul(5);    // twiddle index + complex product
        pe.load(6);   // two complex operands, one twiddle
        pe.add(8);    // complex product terms, sum, difference, addressing
        pe.store(4);
      });
    });
  }
}

/// Filterbank energies of one power spectrum (n_fft/2 + 1 bins).
inline std::vector<double> mel_project(PEContext& pe, const MelFilterbank& fb, std::span<const double> power) {
  if (static_cast<std::int64_t>(power.size()) != fb.n_bins()) throw KernelFault("mel_project: spectrum size mismatch");
  std::vector<double> out(static_cast<std::size_t>(fb.n_mels()), 0.0);
  pe.loop(fb.n_mels(), [&](std::int64_t j) {
    double acc = 0.0;
    const auto b0 = fb.support_begin(j);
    pe.load(2);
    pe.loop(fb.support_end(j) - b0, [&](std::int64_t i) {
      acc += fb.weight(j, b0 + i) * power[static_cast<std::size_t>(b0 + i)];
      pe.load(2);
      pe.mul();
      pe.add();
    });
    out[static_cast<std::size_t>(j)] = acc;
    pe.store();
  });
  return out;
}

inline std::vector<double> mel_project(const MelFilterbank& fb, std::span<const double> power) {
  PEContext pe;
  return mel_project(pe, fb, power);
}

/// Orthonormal DCT-II through a precomputed basis (see dct2_matrix).
inline std::vector<double> dct2(PEContext& pe, std::span<const double> basis, std::span<const double> x, std::int64_t n_out) {
  const auto n = static_cast<std::int64_t>(x.size());
  if (static_cast<std::int64_t>(basis.size()) != n * n_out) throw KernelFault("dct2: basis size mismatch");
  std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
  pe.loop(n_out, [&](std::int64_t k) {
    double acc = 0.0;
    pe.loop(n, [&](std::int64_t i) {
      acc += basis[static_cast<std::size_t>(k * n + i)] * x[static_cast<std::size_t>(i)];
      pe.load(2);
      pe.mul();
      pe.add();
    });
    out[static_cast<std::size_t>(k)] = acc;
    pe.store();
  });
  return out;
}

inline std::vector<double> dct2(std::span<const double> x) {
  PEContext pe;
  const auto n = static_cast<std::int64_t>(x.size());
  return dct2(pe, dct2_matrix(n, n), x, n);
}

/// One feature frame from the window starting at sample `start`; `sample(i)`
/// returns the signal value at absolute index i.
template <class SampleFn>
void mfcc_frame(PEContext& pe, const FrontendTables& t, SampleFn&& sample, std::int64_t start, std::span<float> out) {
  const auto& p = t.params;
  const auto w = p.frame_len();
  std::vector<double> frame(static_cast<std::size_t>(w));
  double mean = 0.0;
  pe.loop(w, [&](std::int64_t i) {
    frame[i] = static_cast<double>(sample(start + i));
    mean += frame[i];
    pe.load();
    pe.add();
  });
  mean /= static_cast<double>(w);
  pe.mul();

  // DC removal, pre-emphasis (first sample against itself), window.
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(p.n_fft));
  double prev = frame[0] - mean;
  pe.loop(w, [&](std::int64_t i) {
    const double cur = frame[i] - mean;
    spec[i] = (cur - p.preemphasis * prev) * t.window[i];
    prev = cur;
    pe.load(2);
    pe.add(2);
    pe.mul(2);
    pe.store();
  });
  fft_radix2(pe, spec, t.twiddle);

  const auto bins = p.n_fft / 2 + 1;
  std::vector<double> power(static_cast<std::size_t>(bins));
  pe.loop(bins, [&](std::int64_t b) {
    power[b] = std::norm(spec[b]);
    pe.load(2);
    pe.mul(2);
    pe.add();
    pe.store();
  });

  auto energies = mel_project(pe, t.mel, power);
  pe.loop(p.n_mels, [&](std::int64_t j) {
    pe.compare();
    pe.branch();
    const double e = std::max(energies[j], p.log_floor);
    energies[j] = pe.sfu(SfuOp::log, e);
    pe.load();
    pe.store();
  });
  const auto ceps = dct2(pe, t.dct, energies, p.n_ceps);
  if (static_cast<std::int64_t>(out.size()) < p.n_ceps) throw KernelFault("mfcc_frame: output slot too small");
  for (std::int64_t k = 0; k < p.n_ceps; ++k) out[k] = static_cast<float>(ceps[k]);
}

/// Whole-signal extraction on the host, frame after frame.
inline std::vector<std::vector<float>> compute_mfcc(std::span<const float> signal, const FrontendParams& p) {
  const FrontendTables t(p);
  const auto n = frames_available(static_cast<std::int64_t>(signal.size()), p.frame_len(), p.frame_shift());
  std::vector<std::vector<float>> out(static_cast<std::size_t>(n), std::vector<float>(static_cast<std::size_t>(p.n_ceps)));
  for (std::int64_t f = 0; f < n; ++f) {
    PEContext pe;
    mfcc_frame(pe, t, [&](std::int64_t i) { return signal[static_cast<std::size_t>(i)]; }, f * p.frame_shift(), out[f]);
  }
  return out;
}

struct FrontendKernel {
  KernelDescriptor descriptor;
  TensorBuffer<float>* output = nullptr;
  std::shared_ptr<const FrontendTables> tables;
};

/// The feature-extraction kernel. Its setup sizes the step from the samples
/// waiting in external memory; frames already emitted are the output
/// buffer's write position, so a cleared buffer restarts the utterance.
inline FrontendKernel make_frontend_kernel(Machine& m, const FrontendParams& p, std::uint64_t blob_id = 0xF0) {
  struct State {
    std::shared_ptr<const FrontendTables> tables;
    TensorBuffer<float>* out;
    ModelBlob blob;
    std::int64_t base = 0;
  };
  auto st = std::make_shared<State>();
  st->tables = std::make_shared<const FrontendTables>(p);
  st->out = &m.shared.create<float>("mfcc", p.n_ceps);
  st->blob = {blob_id, st->tables->footprint_bytes()};

  SetupRoutine setup = [st](SetupContext& ctx) -> std::int64_t {
    auto& pe = ctx.pe;
    const auto& fp = st->tables->params;
    const auto emitted = st->out->next_write();
    pe.load(3);
    auto n = frames_available(ctx.machine.samples.end(), fp.frame_len(), fp.frame_shift()) - emitted;
    pe.add(2);
    pe.mul();
    pe.compare(2);
    pe.branch(2);
    n = std::max<std::int64_t>(n, 0);
    if (fp.max_frames_per_step > 0) n = std::min(n, fp.max_frames_per_step);
    st->base = emitted;
    pe.store();
    if (n == 0) return 0;
    st->out->reserve_output(n);
    ctx.prefetch(st->blob);
    auto& machine = ctx.machine;
    ctx.on_complete([st, n, &machine] {
      st->out->publish(n);
      machine.samples.drop_before((st->base + n) * st->tables->params.frame_shift());
    });
    return n;
  };

  KernelRoutine kernel = [st](ThreadContext& tc) {
    const auto frame = st->base + tc.thread_id;
    const auto shift = st->tables->params.frame_shift();
    auto& samples = tc.machine.samples;
    mfcc_frame(tc.pe, *st->tables, [&](std::int64_t i) { return samples.at(i); }, frame * shift, st->out->slot(frame));
  };

  return {KernelDescriptor{"frontend", KernelClass::frontend, std::move(setup), std::move(kernel)}, st->out, st->tables};
}

}  // namespace asrpu
