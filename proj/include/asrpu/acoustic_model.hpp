#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "asrpu/error.hpp"
#include "asrpu/frontend.hpp"
#include "asrpu/kernel.hpp"
#include "asrpu/model.hpp"
#include "asrpu/pe_cost.hpp"

namespace asrpu {

using AnyBuffer = std::variant<TensorBuffer<float>*, TensorBuffer<std::int8_t>*>;

inline BufferBase& base_of(const AnyBuffer& b) {
  return std::visit([](auto* p) -> BufferBase& { return *p; }, b);
}

/// Scale of the int8 codes a kernel computes on: the buffer's own scale, or
/// the layer's input scale when the buffer holds floats.
inline float code_scale(const AnyBuffer& b, float in_scale) {
  if (auto* q = std::get_if<TensorBuffer<std::int8_t>*>(&b)) return (*q)->scale();
  return in_scale;
}

/// int8 view of an input item. Float items are quantised into `scratch`.
inline std::span<const std::int8_t> input_codes(PEContext& pe, const AnyBuffer& b, std::int64_t index, float in_scale,
                                                std::vector<std::int8_t>& scratch) {
  if (auto* q = std::get_if<TensorBuffer<std::int8_t>*>(&b)) return (*q)->item(index);
  const auto item = std::get<TensorBuffer<float>*>(b)->item(index);
  scratch.resize(item.size());
  const float inv = 1.0f / in_scale;
  pe.loop(static_cast<std::int64_t>(item.size()), [&](std::int64_t i) {
    pe.load();
    scratch[static_cast<std::size_t>(i)] = pe.quantize(item[static_cast<std::size_t>(i)], inv);
    pe.store();
  });
  return scratch;
}

/// Dot product of two int8 vectors in mac_width-lane chunks.
inline std::int32_t mac_dot(PEContext& pe, std::span<const std::int8_t> w, std::span<const std::int8_t> x) {
  const auto n = static_cast<std::int64_t>(std::min(w.size(), x.size()));
  const auto lanes = pe.mac_width();
  std::int32_t acc = 0;
  pe.loop((n + lanes - 1) / lanes, [&](std::int64_t c) {
    const auto off = static_cast<std::size_t>(c * lanes);
    const auto len = static_cast<std::size_t>(std::min(lanes, n - c * lanes));
    pe.load(2);
    acc = pe.vmac(acc, w.subspan(off, len), x.subspan(off, len));
  });
  return acc;
}

/// Instructions of one FC thread computing one neuron over `frames` frames
/// of an int8 input with `in_dim` values: four parameter loads, then per frame
/// the chunked MAC loop, scale and bias, optional ReLU, optional residual,
/// requantisation (unless the output is float) and the store.
inline std::int64_t fc_thread_instructions(const CostTable& c, std::int64_t in_dim, std::int64_t frames,
                                           std::int64_t mac_width, bool relu, bool residual, bool float_output) {
  auto loop = [&](std::int64_t n, std::int64_t body) { return c.add + n * (c.compare + c.branch + c.add + body); };
  const auto chunks = (in_dim + mac_width - 1) / mac_width;
  std::int64_t per_frame = loop(chunks, c.mac + 2 * c.load) + c.mul + c.add + c.store;
  if (relu) per_frame += c.compare + c.branch;
  if (residual) per_frame += c.load + c.mul + c.add;
  if (!float_output) per_frame += c.mul + c.add + 2 * c.compare;
  return 4 * c.load + loop(frames, per_frame);
}

/// Layer normalisation of one frame of int8 codes with scale `sx`.
/// emit(i, value) receives each normalised, affine-transformed value.
template <class Emit>
void layernorm_frame(PEContext& pe, std::span<const std::int8_t> x, float sx, std::span<const float> gamma,
                     std::span<const float> beta, float eps, Emit&& emit) {
  const auto d = static_cast<std::int64_t>(x.size());
  const auto lanes = pe.mac_width();
  const std::vector<std::int8_t> ones(static_cast<std::size_t>(lanes), 1);
  std::int32_t sum = 0, sq = 0;
  pe.loop((d + lanes - 1) / lanes, [&](std::int64_t c) {
    const auto off = static_cast<std::size_t>(c * lanes);
    const auto len = static_cast<std::size_t>(std::min(lanes, d - c * lanes));
    pe.load();
    const auto xs = x.subspan(off, len);
    sum = pe.vmac(sum, xs, std::span<const std::int8_t>(ones).first(len));
    sq = pe.vmac(sq, xs, xs);
  });
  // Integer moments: var * d^2 = d * sum(x^2) - sum(x)^2, exactly.
  const auto dd = static_cast<double>(d);
  const double mean = static_cast<double>(sx) * static_cast<double>(sum) / dd;
  const auto num = static_cast<std::int64_t>(sq) * d - static_cast<std::int64_t>(sum) * sum;
  const double var = static_cast<double>(sx) * static_cast<double>(sx) * static_cast<double>(num) / (dd * dd);
  pe.mul(5);
  pe.add();
  pe.add();
  const double inv_std = pe.sfu(SfuOp::exp, -0.5 * pe.sfu(SfuOp::log, var + static_cast<double>(eps)));
  pe.mul();
  pe.loop(d, [&](std::int64_t i) {
    const auto k = static_cast<std::size_t>(i);
    pe.load(3);
    pe.mul(3);
    pe.add(2);
    const double g = gamma.empty() ? 1.0 : gamma[k];
    const double b = beta.empty() ? 0.0 : beta[k];
    emit(i, (static_cast<double>(sx) * x[k] - mean) * inv_std * g + b);
  });
}

/// In-place log-softmax with max subtraction.
inline void log_softmax(PEContext& pe, std::span<float> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  if (n == 0) return;
  double mx = v[0];
  pe.loop(n, [&](std::int64_t i) {
    pe.load();
    pe.compare();
    pe.branch();
    mx = std::max(mx, static_cast<double>(v[static_cast<std::size_t>(i)]));
  });
  double sum = 0.0;
  pe.loop(n, [&](std::int64_t i) {
    pe.load();
    pe.add(2);
    sum += pe.sfu(SfuOp::exp, static_cast<double>(v[static_cast<std::size_t>(i)]) - mx);
  });
  const double lse = mx + pe.sfu(SfuOp::log, sum);
  pe.add();
  pe.loop(n, [&](std::int64_t i) {
    pe.load();
    pe.add();
    pe.store();
    auto& x = v[static_cast<std::size_t>(i)];
    x = static_cast<float>(static_cast<double>(x) - lse);
  });
}

inline std::vector<float> log_softmax(std::span<const float> v) {
  std::vector<float> out(v.begin(), v.end());
  PEContext pe;
  log_softmax(pe, out);
  return out;
}

// ---------------------------------------------------------------------------

/// One entry of the acoustic-scoring program, for reports.
struct KernelInfo {
  std::string name;
  KernelClass cls = KernelClass::other;
  std::int64_t layer = -1;  // -1 for the frontend
  NeuronRange range;
  std::int64_t weight_bytes = 0;
  std::int64_t blob_bytes = 0;
};

struct AcousticProgram {
  std::vector<KernelDescriptor> kernels;
  std::vector<KernelInfo> info;
  TensorBuffer<float>* features = nullptr;
  TensorBuffer<float>* scores = nullptr;
  std::vector<AnyBuffer> layer_outputs;
  std::shared_ptr<const AcousticModel> model;
  std::shared_ptr<const FrontendTables> frontend_tables;
};

namespace detail {

/// Written by the first setup of a layer, read by its threads and by the
/// setups of later partitions of the same layer.
struct LayerParams {
  std::int64_t base = 0;      // first output frame of this step
  std::int64_t n_frames = 0;  // output frames this step
  float in_code_scale = 1.0f;
  float res_code_scale = 1.0f;
};

struct LayerState {
  std::shared_ptr<const AcousticModel> model;
  std::int64_t layer = 0;
  AnyBuffer in;
  int reader = 0;
  AnyBuffer out;
  std::optional<AnyBuffer> res;  // input of the previous fc
  int res_reader = 0;
  NeuronRange range;
  bool first_part = true;
  bool last_part = true;
  ModelBlob blob;
  std::shared_ptr<LayerParams> params;

  const LayerSpec& spec() const { return model->desc.layers[static_cast<std::size_t>(layer)]; }
  const LayerWeights& weights() const { return model->weights[static_cast<std::size_t>(layer)]; }
};

inline void require_resident(const ThreadContext& tc, const ModelBlob& blob) {
  if (!tc.machine.model.is_resident(blob.id)) throw KernelFault("weights not resident in model memory");
}

template <class T>
void store_output(PEContext& pe, TensorBuffer<T>& out, std::int64_t frame, std::int64_t index, double v, float out_scale) {
  if constexpr (std::is_same_v<T, float>) {
    out.slot(frame)[static_cast<std::size_t>(index)] = static_cast<float>(v);
  } else {
    out.slot(frame)[static_cast<std::size_t>(index)] = pe.quantize(static_cast<float>(v), 1.0f / out_scale);
  }
  pe.store();
}

inline void store_any(PEContext& pe, const AnyBuffer& out, std::int64_t frame, std::int64_t index, double v,
                      float out_scale) {
  std::visit([&](auto* b) { store_output(pe, *b, frame, index, v, out_scale); }, out);
}

inline SetupRoutine layer_setup(std::shared_ptr<LayerState> st) {
  return [st](SetupContext& ctx) -> std::int64_t {
    auto& pe = ctx.pe;
    const auto& spec = st->spec();
    auto& p = *st->params;
    auto& in = base_of(st->in);
    auto& out = base_of(st->out);
    std::int64_t n = 0;
    if (st->first_part) {
      pe.load(4);
      const auto total = spec.frames_out(in.next_write());
      pe.add(2);
      pe.mul();
      pe.compare(2);
      pe.branch(2);
      n = std::max<std::int64_t>(0, total - out.next_write());
      p.base = out.next_write();
      p.n_frames = n;
      p.in_code_scale = code_scale(st->in, spec.in_scale);
      if (st->res) p.res_code_scale = code_scale(*st->res, spec.in_scale);
      pe.store(4);
      if (n == 0) return 0;
      out.reserve_output(n);
    } else {
      pe.load(2);
      n = p.n_frames;
    }
    ctx.prefetch(st->blob);
    if (st->last_part) {
      ctx.on_complete([st, n] {
        auto& pr = *st->params;
        base_of(st->out).publish(n);
        const auto next = pr.base + n;
        auto& inb = base_of(st->in);
        const auto keep_from = st->spec().first_input(next);
        inb.consume_inputs(std::max<std::int64_t>(0, keep_from - inb.reader_mark(st->reader)), st->reader);
        if (st->res) {
          auto& rb = base_of(*st->res);
          rb.consume_inputs(std::max<std::int64_t>(0, next - rb.reader_mark(st->res_reader)), st->res_reader);
        }
      });
    }
    switch (spec.kind) {
      case LayerKind::conv1d: return n * spec.out_ch;
      case LayerKind::fc: return st->range.size();
      case LayerKind::layernorm: return n;
    }
    return 0;
  };
}

inline KernelRoutine fc_kernel(std::shared_ptr<LayerState> st) {
  return [st](ThreadContext& tc) {
    require_resident(tc, st->blob);
    auto& pe = tc.pe;
    const auto& spec = st->spec();
    const auto& w = st->weights();
    const auto& p = *st->params;
    const auto j = st->range.begin + tc.thread_id;
    if (j >= st->range.end) throw KernelFault("fc thread outside its neuron range");
    const auto row = std::span<const std::int8_t>(w.w).subspan(static_cast<std::size_t>(j * spec.in_dim),
                                                              static_cast<std::size_t>(spec.in_dim));
    pe.load(3);
    const double scale = static_cast<double>(w.w_scale) * p.in_code_scale;
    pe.load();
    const double bias = w.bias[static_cast<std::size_t>(j)];
    std::vector<std::int8_t> scratch;
    pe.loop(p.n_frames, [&](std::int64_t f) {
      const auto frame = p.base + f;
      const auto x = input_codes(pe, st->in, frame, spec.in_scale, scratch);
      const auto acc = mac_dot(pe, row, x);
      double v = static_cast<double>(acc) * scale + bias;
      pe.mul();
      pe.add();
      if (spec.relu) {
        pe.compare();
        pe.branch();
        v = std::max(v, 0.0);
      }
      if (st->res) {
        std::vector<std::int8_t> rs;
        const auto r = input_codes(pe, *st->res, frame, spec.in_scale, rs);
        pe.load();
        pe.mul();
        pe.add();
        v += static_cast<double>(r[static_cast<std::size_t>(j)]) * p.res_code_scale;
      }
      store_any(pe, st->out, frame, j, v, spec.out_scale);
    });
  };
}

inline KernelRoutine conv_kernel(std::shared_ptr<LayerState> st) {
  return [st](ThreadContext& tc) {
    require_resident(tc, st->blob);
    auto& pe = tc.pe;
    const auto& spec = st->spec();
    const auto& w = st->weights();
    const auto& p = *st->params;
    const auto pos = tc.thread_id / spec.out_ch;
    const auto c = tc.thread_id % spec.out_ch;
    if (pos >= p.n_frames) throw KernelFault("conv thread beyond the step's output frames");
    const auto t = p.base + pos;
    pe.load(4);
    pe.load();
    const double bias = w.bias[static_cast<std::size_t>(c)];
    const double scale = static_cast<double>(w.w_scale) * p.in_code_scale;

    std::vector<std::vector<std::int8_t>> scratch(static_cast<std::size_t>(spec.kernel));
    std::vector<std::span<const std::int8_t>> taps(static_cast<std::size_t>(spec.kernel));
    const std::vector<std::int8_t> zeros(static_cast<std::size_t>(spec.input_dim()), 0);
    for (std::int64_t k = 0; k < spec.kernel; ++k) {
      const auto idx = spec.first_input(t) + k;
      taps[k] = idx < 0 ? std::span<const std::int8_t>(zeros) : input_codes(pe, st->in, idx, spec.in_scale, scratch[k]);
    }
    const auto wc = std::span<const std::int8_t>(w.w).subspan(static_cast<std::size_t>(c * spec.kernel * spec.in_ch),
                                                             static_cast<std::size_t>(spec.kernel * spec.in_ch));
    pe.loop(spec.width, [&](std::int64_t x) {
      std::int32_t acc = 0;
      pe.loop(spec.kernel, [&](std::int64_t k) {
        const auto xin = taps[k].subspan(static_cast<std::size_t>(x * spec.in_ch), static_cast<std::size_t>(spec.in_ch));
        const auto wk = wc.subspan(static_cast<std::size_t>(k * spec.in_ch), static_cast<std::size_t>(spec.in_ch));
        acc += mac_dot(pe, wk, xin);
        pe.add();
      });
      double v = static_cast<double>(acc) * scale + bias;
      pe.mul();
      pe.add();
      if (spec.relu) {
        pe.compare();
        pe.branch();
        v = std::max(v, 0.0);
      }
      if (spec.residual == Residual::self) {
        const auto& r = taps[static_cast<std::size_t>(spec.kernel - 1)];
        pe.load();
        pe.mul();
        pe.add();
        v += static_cast<double>(r[static_cast<std::size_t>(x * spec.in_ch + c)]) * p.in_code_scale;
      }
      store_any(pe, st->out, t, x * spec.out_ch + c, v, spec.out_scale);
    });
  };
}

inline KernelRoutine layernorm_kernel(std::shared_ptr<LayerState> st) {
  return [st](ThreadContext& tc) {
    require_resident(tc, st->blob);
    auto& pe = tc.pe;
    const auto& spec = st->spec();
    const auto& w = st->weights();
    const auto& p = *st->params;
    if (tc.thread_id >= p.n_frames) throw KernelFault("layernorm thread beyond the step's frames");
    const auto frame = p.base + tc.thread_id;
    pe.load(3);
    std::vector<std::int8_t> scratch;
    const auto x = input_codes(pe, st->in, frame, spec.in_scale, scratch);
    layernorm_frame(pe, x, p.in_code_scale, w.gamma, w.beta, spec.eps,
                    [&](std::int64_t i, double v) { store_any(pe, st->out, frame, i, v, spec.out_scale); });
  };
}

}  // namespace detail

/// Lays out the acoustic-scoring phase on `m`: the frontend kernel, then one
/// kernel per layer, FC layers split by partition_fc. Creates every stream
/// buffer in shared memory.
inline AcousticProgram build_acoustic_program(Machine& m, std::shared_ptr<const AcousticModel> model,
                                              const FrontendParams& fp) {
  model->validate();
  if (model->desc.input_dim != fp.n_ceps)
    throw ConfigError("model input dim " + std::to_string(model->desc.input_dim) + " != feature dim " +
                      std::to_string(fp.n_ceps));
  AcousticProgram prog;
  prog.model = model;
  auto fe = make_frontend_kernel(m, fp);
  prog.features = fe.output;
  prog.frontend_tables = fe.tables;
  prog.kernels.push_back(std::move(fe.descriptor));
  prog.info.push_back({"frontend", KernelClass::frontend, -1, {}, 0, fe.tables->footprint_bytes()});

  AnyBuffer prev = prog.features;
  AnyBuffer prev_input = prog.features;
  const auto cap = m.config.model_mem_bytes;
  const auto& layers = model->desc.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto li = static_cast<std::int64_t>(i);
    const auto base_name = to_string(l.kind) + std::to_string(i);
    AnyBuffer out;
    if (l.float_output) {
      auto& b = m.shared.create<float>("scores", l.output_dim());
      out = &b;
      prog.scores = &b;
    } else {
      auto& b = m.shared.create<std::int8_t>(base_name, l.output_dim());
      b.set_scale(l.out_scale);
      out = &b;
    }
    prog.layer_outputs.push_back(out);

    const int reader = base_of(prev).add_reader();
    std::optional<AnyBuffer> res;
    int res_reader = 0;
    if (l.residual == Residual::prev) {
      res = prev_input;
      res_reader = base_of(prev_input).add_reader();
    }

    std::vector<NeuronRange> ranges;
    if (l.kind == LayerKind::fc)
      ranges = partition_fc(l, cap);
    else
      ranges = {{0, l.output_dim()}};
    if (l.kind != LayerKind::fc && l.blob_bytes() > cap)
      throw ConfigError(base_name + ": " + std::to_string(l.blob_bytes()) + " bytes do not fit model memory");

    auto params = std::make_shared<detail::LayerParams>();
    for (std::size_t r = 0; r < ranges.size(); ++r) {
      auto st = std::make_shared<detail::LayerState>();
      st->model = model;
      st->layer = li;
      st->in = prev;
      st->reader = reader;
      st->out = out;
      st->res = res;
      st->res_reader = res_reader;
      st->range = ranges[r];
      st->first_part = r == 0;
      st->last_part = r + 1 == ranges.size();
      st->params = params;
      KernelInfo info;
      info.layer = li;
      info.range = ranges[r];
      if (l.kind == LayerKind::fc) {
        info.weight_bytes = ranges[r].size() * l.in_dim;
        info.blob_bytes = ranges[r].size() * (l.in_dim + 4);
      } else {
        info.weight_bytes = l.weight_count();
        info.blob_bytes = l.blob_bytes();
      }
      if (info.blob_bytes > cap) throw ConfigError(base_name + ": partition does not fit model memory");
      st->blob = {(static_cast<std::uint64_t>(li + 1) << 16) | r, info.blob_bytes};
      info.name = ranges.size() > 1 ? base_name + ".p" + std::to_string(r) : base_name;

      KernelRoutine routine;
      switch (l.kind) {
        case LayerKind::conv1d:
          info.cls = KernelClass::conv;
          routine = detail::conv_kernel(st);
          break;
        case LayerKind::fc:
          info.cls = KernelClass::fc;
          routine = detail::fc_kernel(st);
          break;
        case LayerKind::layernorm:
          info.cls = KernelClass::layernorm;
          routine = detail::layernorm_kernel(st);
          break;
      }
      prog.kernels.push_back({info.name, info.cls, detail::layer_setup(st), std::move(routine)});
      prog.info.push_back(std::move(info));
    }
    prev_input = prev;
    prev = out;
  }
  return prog;
}

}  // namespace asrpu
