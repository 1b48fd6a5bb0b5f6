#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "asrpu/error.hpp"

namespace asrpu {

enum class LayerKind { conv1d, fc, layernorm };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv";
    case LayerKind::fc: return "fc";
    case LayerKind::layernorm: return "layernorm";
  }
  return "?";
}

/// conv: own input frame added to the output (TDS conv sub-block).
/// prev: input of the preceding FC layer added to the output (TDS FC sub-block).
enum class Residual { none, self, prev };

/// One logical layer. Frames are flat vectors; a conv layer sees its frame as
/// `width` positions of `in_ch` channels (channel-contiguous) and convolves
/// along time only.
struct LayerSpec {
  LayerKind kind = LayerKind::fc;
  std::int64_t width = 1;
  std::int64_t in_ch = 1;
  std::int64_t out_ch = 1;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad = 0;  // zero frames assumed before the first input frame
  std::int64_t in_dim = 0;
  std::int64_t out_dim = 0;
  bool relu = false;
  Residual residual = Residual::none;
  bool float_output = false;
  float in_scale = 1.0f;   // used when the input buffer holds floats
  float out_scale = 1.0f;  // int8 activation scale of the output
  float eps = 1e-5f;       // layernorm

  std::int64_t input_dim() const { return kind == LayerKind::conv1d ? width * in_ch : in_dim; }
  std::int64_t output_dim() const { return kind == LayerKind::conv1d ? width * out_ch : out_dim; }
  std::int64_t time_kernel() const { return kind == LayerKind::conv1d ? kernel : 1; }
  std::int64_t time_stride() const { return kind == LayerKind::conv1d ? stride : 1; }

  std::int64_t time_pad() const { return kind == LayerKind::conv1d ? pad : 0; }

  /// Output frames produced from the first `in_frames` input frames.
  std::int64_t frames_out(std::int64_t in_frames) const {
    const auto k = time_kernel(), s = time_stride();
    const auto padded = in_frames + time_pad();
    return in_frames <= 0 || padded < k ? 0 : (padded - k) / s + 1;
  }

  /// First input frame read by output frame t (may be negative: padding).
  std::int64_t first_input(std::int64_t t) const { return t * time_stride() - time_pad(); }

  std::int64_t weight_count() const {
    switch (kind) {
      case LayerKind::conv1d: return out_ch * kernel * in_ch;
      case LayerKind::fc: return out_dim * in_dim;
      case LayerKind::layernorm: return 0;
    }
    return 0;
  }
  /// f32 values stored next to the weights: biases, or gamma and beta.
  std::int64_t float_count() const {
    switch (kind) {
      case LayerKind::conv1d: return out_ch;
      case LayerKind::fc: return out_dim;
      case LayerKind::layernorm: return 2 * in_dim;
    }
    return 0;
  }
  std::int64_t blob_bytes() const { return weight_count() + 4 * float_count(); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelDescriptor {
  std::string name = "model";
  std::int64_t input_dim = 80;
  std::vector<LayerSpec> layers;

  std::int64_t n_tokens() const { return layers.empty() ? 0 : layers.back().output_dim(); }

  std::int64_t count(LayerKind k) const {
    return std::count_if(layers.begin(), layers.end(), [k](const LayerSpec& l) { return l.kind == k; });
  }

  /// Product of all strides.
  std::int64_t subsample_factor() const {
    std::int64_t s = 1;
    for (const auto& l : layers) s *= l.time_stride();
    return s;
  }

  /// Acoustic vectors emitted for `frames` feature frames.
  std::int64_t vectors_for_frames(std::int64_t frames) const {
    for (const auto& l : layers) frames = l.frames_out(frames);
    return frames;
  }

  void validate() const {
    if (layers.empty()) throw ConfigError("model has no layers");
    std::int64_t dim = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const auto where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
      if (l.input_dim() != dim)
        throw ConfigError(where + "input dim " + std::to_string(l.input_dim()) + " != previous output " + std::to_string(dim));
      if (l.input_dim() <= 0 || l.output_dim() <= 0) throw ConfigError(where + "dims must be > 0");
      if (l.kind == LayerKind::conv1d && (l.kernel <= 0 || l.stride <= 0 || l.width <= 0))
        throw ConfigError(where + "kernel, stride and width must be > 0");
      if (l.time_pad() < 0 || (l.kind == LayerKind::conv1d && l.pad >= l.kernel))
        throw ConfigError(where + "pad must be in [0, kernel)");
      if (l.kind != LayerKind::conv1d && l.pad != 0) throw ConfigError(where + "only conv layers take pad");
      if (l.kind == LayerKind::layernorm && l.out_dim != l.in_dim) throw ConfigError(where + "layernorm must keep its dim");
      if (l.float_output && (l.kind != LayerKind::fc || i + 1 != layers.size()))
        throw ConfigError(where + "only the final fc layer may emit floats");
      if (l.residual == Residual::self) {
        if (l.kind != LayerKind::conv1d || l.stride != 1 || l.in_ch != l.out_ch)
          throw ConfigError(where + "self residual needs a stride-1 conv with in_ch == out_ch");
      }
      if (l.residual == Residual::prev) {
        if (l.kind != LayerKind::fc || i == 0 || layers[i - 1].kind != LayerKind::fc ||
            layers[i - 1].in_dim != l.out_dim)
          throw ConfigError(where + "prev residual needs a preceding fc whose input matches this output");
      }
      if (!(l.out_scale > 0.0f) || !(l.in_scale > 0.0f)) throw ConfigError(where + "scales must be > 0");
      if (!(l.eps >= 0.0f)) throw ConfigError(where + "eps must be >= 0");
      dim = l.output_dim();
    }
    if (!layers.back().float_output) throw ConfigError("final layer must be an fc with output=float");
  }

  friend bool operator==(const ModelDescriptor&, const ModelDescriptor&) = default;
};

// ---------------------------------------------------------------------------
// Text descriptor: one layer per line, `kind key=value ...`; `#` comments.
//   model name=tds input_dim=80
//   conv width=80 in_ch=1 out_ch=15 kernel=10 stride=2 pad=causal relu=1 out_scale=0.05
//   layernorm dim=1200
//   fc in=1200 out=1200 relu=1
//   fc in=1200 out=1200 residual=prev
//   fc in=2160 out=9000 output=float

inline ModelDescriptor parse_descriptor(std::istream& in) {
  ModelDescriptor d;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    std::map<std::string, std::string> kv;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0) throw InputError("descriptor line " + std::to_string(lineno) + ": bad token '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    const auto where = "descriptor line " + std::to_string(lineno) + ": ";
    auto take = [&](const char* key, auto fallback) {
      using V = decltype(fallback);
      auto it = kv.find(key);
      if (it == kv.end()) return fallback;
      const auto text = it->second;
      kv.erase(it);
      try {
        std::size_t used = 0;
        V v{};
        if constexpr (std::is_same_v<V, float>)
          v = std::stof(text, &used);
        else
          v = static_cast<V>(std::stoll(text, &used));
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      } catch (const std::exception&) {
        throw InputError(where + "bad value for " + key + ": '" + text + "'");
      }
    };
    auto take_str = [&](const char* key, std::string fallback) {
      auto it = kv.find(key);
      if (it == kv.end()) return fallback;
      auto v = it->second;
      kv.erase(it);
      return v;
    };

    if (kind == "model") {
      d.name = take_str("name", d.name);
      d.input_dim = take("input_dim", d.input_dim);
    } else {
      LayerSpec l;
      if (kind == "conv") {
        l.kind = LayerKind::conv1d;
        l.width = take("width", std::int64_t{1});
        l.in_ch = take("in_ch", std::int64_t{1});
        l.out_ch = take("out_ch", std::int64_t{1});
        l.kernel = take("kernel", std::int64_t{1});
        l.stride = take("stride", std::int64_t{1});
        const auto pad = take_str("pad", "0");
        if (pad == "causal") {
          l.pad = l.kernel - 1;
        } else {
          kv["pad"] = pad;
          l.pad = take("pad", std::int64_t{0});
        }
      } else if (kind == "fc") {
        l.kind = LayerKind::fc;
        l.in_dim = take("in", std::int64_t{0});
        l.out_dim = take("out", std::int64_t{0});
      } else if (kind == "layernorm") {
        l.kind = LayerKind::layernorm;
        l.in_dim = l.out_dim = take("dim", std::int64_t{0});
        l.eps = take("eps", l.eps);
      } else {
        throw InputError(where + "unknown layer kind '" + kind + "'");
      }
      l.relu = take("relu", 0) != 0;
      const auto res = take_str("residual", "none");
      if (res == "none" || res == "0")
        l.residual = Residual::none;
      else if (res == "self" || res == "1")
        l.residual = Residual::self;
      else if (res == "prev")
        l.residual = Residual::prev;
      else
        throw InputError(where + "residual must be none, self or prev");
      const auto out = take_str("output", "int8");
      if (out != "int8" && out != "float") throw InputError(where + "output must be int8 or float");
      l.float_output = out == "float";
      l.in_scale = take("in_scale", l.in_scale);
      l.out_scale = take("out_scale", l.out_scale);
      d.layers.push_back(l);
    }
    if (!kv.empty()) throw InputError(where + "unknown key '" + kv.begin()->first + "'");
  }
  return d;
}

inline ModelDescriptor parse_descriptor(const std::string& text) {
  std::istringstream in(text);
  return parse_descriptor(in);
}

inline ModelDescriptor load_descriptor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model descriptor '" + path + "'");
  return parse_descriptor(in);
}

inline void write_descriptor(std::ostream& os, const ModelDescriptor& d) {
  const auto saved = os.precision(std::numeric_limits<float>::max_digits10);
  os << "model name=" << d.name << " input_dim=" << d.input_dim << '\n';
  for (const auto& l : d.layers) {
    switch (l.kind) {
      case LayerKind::conv1d:
        os << "conv width=" << l.width << " in_ch=" << l.in_ch << " out_ch=" << l.out_ch << " kernel=" << l.kernel
           << " stride=" << l.stride;
        if (l.pad) os << " pad=" << l.pad;
        break;
      case LayerKind::fc: os << "fc in=" << l.in_dim << " out=" << l.out_dim; break;
      case LayerKind::layernorm: os << "layernorm dim=" << l.in_dim << " eps=" << l.eps; break;
    }
    if (l.relu) os << " relu=1";
    if (l.residual == Residual::self) os << " residual=self";
    if (l.residual == Residual::prev) os << " residual=prev";
    if (l.float_output) os << " output=float";
    os << " in_scale=" << l.in_scale << " out_scale=" << l.out_scale << '\n';
  }
  os.precision(saved);
}

// ---------------------------------------------------------------------------

/// Quantized parameters of one layer. Dequantised weight = w * w_scale.
/// conv weights are [out_ch][kernel][in_ch]; fc weights are [out][in].
struct LayerWeights {
  std::vector<std::int8_t> w;
  float w_scale = 1.0f;
  std::vector<float> bias;
  std::vector<float> gamma;
  std::vector<float> beta;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct AcousticModel {
  ModelDescriptor desc;
  std::vector<LayerWeights> weights;

  void validate() const {
    desc.validate();
    if (weights.size() != desc.layers.size()) throw ConfigError("weight count does not match layer count");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const auto& l = desc.layers[i];
      const auto& w = weights[i];
      const bool ln = l.kind == LayerKind::layernorm;
      if (static_cast<std::int64_t>(w.w.size()) != l.weight_count() ||
          static_cast<std::int64_t>(ln ? w.gamma.size() + w.beta.size() : w.bias.size()) != l.float_count())
        throw ConfigError("layer " + std::to_string(i) + ": weight payload does not match its dims");
      if (std::any_of(w.w.begin(), w.w.end(), [](std::int8_t v) { return v < -127; }))
        throw ConfigError("layer " + std::to_string(i) + ": weight code -128 outside symmetric range");
    }
  }
};

/// Pseudo-random parameters. Weights are uniform int8 codes with a scale that
/// keeps activation variance roughly constant through the layer.
inline AcousticModel generate_weights(const ModelDescriptor& d, std::uint64_t seed) {
  d.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> code(-127, 127);
  std::uniform_real_distribution<float> small(-0.1f, 0.1f);
  AcousticModel m{d, {}};
  for (const auto& l : d.layers) {
    LayerWeights w;
    w.w.resize(static_cast<std::size_t>(l.weight_count()));
    for (auto& v : w.w) v = static_cast<std::int8_t>(code(rng));
    const auto fan_in = l.kind == LayerKind::conv1d ? l.kernel * l.in_ch : l.in_dim;
    w.w_scale = static_cast<float>(std::sqrt(3.0 / static_cast<double>(std::max<std::int64_t>(fan_in, 1))) / 127.0);
    if (l.kind == LayerKind::layernorm) {
      w.gamma.resize(static_cast<std::size_t>(l.in_dim));
      w.beta.resize(static_cast<std::size_t>(l.in_dim));
      for (auto& g : w.gamma) g = 1.0f + small(rng);
      for (auto& b : w.beta) b = small(rng);
    } else {
      w.bias.resize(static_cast<std::size_t>(l.float_count()));
      for (auto& b : w.bias) b = small(rng);
    }
    m.weights.push_back(std::move(w));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Binary model file, little-endian:
//   "ASRPUMDL" u32 version u32 layer_count i64 input_dim
//   per layer: u32 kind u32 flags(relu | residual<<1 | float_output<<3)
//              i64 width in_ch out_ch kernel stride pad in_dim out_dim
//              f32 in_scale out_scale eps w_scale
//              u64 n_weights, int8[n_weights], u64 n_floats, f32[n_floats]
// layernorm floats are gamma then beta.

namespace detail {

inline constexpr char kModelMagic[8] = {'A', 'S', 'R', 'P', 'U', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelVersion = 1;

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw InputError("model file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_model(std::ostream& os, const AcousticModel& m) {
  using detail::put_le;
  m.validate();
  os.write(detail::kModelMagic, 8);
  put_le<std::uint32_t>(os, detail::kModelVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.desc.layers.size()));
  put_le<std::int64_t>(os, m.desc.input_dim);
  for (std::size_t i = 0; i < m.desc.layers.size(); ++i) {
    const auto& l = m.desc.layers[i];
    const auto& w = m.weights[i];
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.kind));
    put_le<std::uint32_t>(os, (l.relu ? 1u : 0u) | (static_cast<std::uint32_t>(l.residual) << 1) |
                                  (l.float_output ? 8u : 0u));
    for (auto v : {l.width, l.in_ch, l.out_ch, l.kernel, l.stride, l.pad, l.in_dim, l.out_dim}) put_le<std::int64_t>(os, v);
    for (auto v : {l.in_scale, l.out_scale, l.eps, w.w_scale}) put_le<float>(os, v);
    put_le<std::uint64_t>(os, w.w.size());
    os.write(reinterpret_cast<const char*>(w.w.data()), static_cast<std::streamsize>(w.w.size()));
    std::vector<float> floats = w.bias;
    floats.insert(floats.end(), w.gamma.begin(), w.gamma.end());
    floats.insert(floats.end(), w.beta.begin(), w.beta.end());
    put_le<std::uint64_t>(os, floats.size());
    for (auto f : floats) put_le<float>(os, f);
  }
  if (!os) throw Error("failed writing model file");
}

inline AcousticModel read_model(std::istream& is) {
  using detail::get_le;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kModelMagic, 8) != 0) throw InputError("not a model file (bad magic)");
  if (const auto v = get_le<std::uint32_t>(is); v != detail::kModelVersion)
    throw InputError("unsupported model file version " + std::to_string(v));
  const auto count = get_le<std::uint32_t>(is);
  AcousticModel m;
  m.desc.name = "model";
  m.desc.input_dim = get_le<std::int64_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec l;
    const auto kind = get_le<std::uint32_t>(is);
    if (kind > 2) throw InputError("model file: unknown layer kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    const auto flags = get_le<std::uint32_t>(is);
    l.relu = flags & 1u;
    const auto res = (flags >> 1) & 3u;
    if (res > 2) throw InputError("model file: bad residual flag");
    l.residual = static_cast<Residual>(res);
    l.float_output = flags & 8u;
    for (auto* v : {&l.width, &l.in_ch, &l.out_ch, &l.kernel, &l.stride, &l.pad, &l.in_dim, &l.out_dim}) *v = get_le<std::int64_t>(is);
    LayerWeights w;
    for (auto* v : {&l.in_scale, &l.out_scale, &l.eps, &w.w_scale}) *v = get_le<float>(is);
    const auto nw = get_le<std::uint64_t>(is);
    if (nw != static_cast<std::uint64_t>(std::max<std::int64_t>(0, l.weight_count())))
      throw InputError("model file: layer " + std::to_string(i) + " weight count mismatch");
    w.w.resize(nw);
    if (!is.read(reinterpret_cast<char*>(w.w.data()), static_cast<std::streamsize>(nw))) throw InputError("model file truncated");
    const auto nf = get_le<std::uint64_t>(is);
    if (nf != static_cast<std::uint64_t>(std::max<std::int64_t>(0, l.float_count())))
      throw InputError("model file: layer " + std::to_string(i) + " float count mismatch");
    std::vector<float> floats(nf);
    for (auto& f : floats) f = get_le<float>(is);
    if (l.kind == LayerKind::layernorm) {
      w.gamma.assign(floats.begin(), floats.begin() + static_cast<std::ptrdiff_t>(nf / 2));
      w.beta.assign(floats.begin() + static_cast<std::ptrdiff_t>(nf / 2), floats.end());
    } else {
      w.bias = std::move(floats);
    }
    m.desc.layers.push_back(l);
    m.weights.push_back(std::move(w));
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
  return m;
}

inline void save_model(const std::string& path, const AcousticModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write model file '" + path + "'");
  write_model(os, m);
}

inline AcousticModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open model file '" + path + "'");
  return read_model(is);
}

// ---------------------------------------------------------------------------

struct NeuronRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  std::int64_t size() const { return end - begin; }
  friend bool operator==(const NeuronRange&, const NeuronRange&) = default;
};

/// Splits an FC layer into the fewest contiguous, equal (+-1) neuron ranges
/// whose weights plus biases fit in model memory.
inline std::vector<NeuronRange> partition_fc(const LayerSpec& layer, std::int64_t model_mem_bytes) {
  if (layer.kind != LayerKind::fc) throw ConfigError("partition_fc on a non-fc layer");
  const auto per_neuron = layer.in_dim + 4;
  if (per_neuron > model_mem_bytes)
    throw ConfigError("one neuron of a " + std::to_string(layer.in_dim) + "-input fc layer exceeds model memory");
  const auto n = layer.out_dim;
  auto k = std::max<std::int64_t>(1, (n * per_neuron + model_mem_bytes - 1) / model_mem_bytes);
  while (((n + k - 1) / k) * per_neuron > model_mem_bytes) ++k;
  std::vector<NeuronRange> out;
  std::int64_t begin = 0;
  for (std::int64_t i = 0; i < k; ++i) {
    const auto size = n / k + (i < n % k ? 1 : 0);
    out.push_back({begin, begin + size});
    begin += size;
  }
  return out;
}

}  // namespace asrpu
