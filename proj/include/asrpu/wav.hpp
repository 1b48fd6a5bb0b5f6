#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "asrpu/error.hpp"

namespace asrpu {

struct WavData {
  std::int64_t sample_rate = 0;
  std::vector<float> samples;  // normalised to [-1, 1)
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}
inline std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

}  // namespace detail

/// Parses a RIFF/WAVE file holding 16-bit PCM mono audio.
inline WavData parse_wav(std::span<const unsigned char> bytes, const std::string& name = "audio") {
  using detail::le16;
  using detail::le32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw InputError(name + ": not a RIFF/WAVE file");
  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto* chunk = bytes.data() + pos;
    const auto size = le32(chunk + 4);
    const auto body = pos + 8;
    if (body + size > bytes.size()) throw InputError(name + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw InputError(name + ": fmt chunk too short");
      const auto* f = bytes.data() + body;
      const auto format = le16(f), channels = le16(f + 2), bits = le16(f + 14);
      if (format != 1) throw InputError(name + ": unsupported encoding (format tag " + std::to_string(format) + ", need PCM)");
      if (channels != 1) throw InputError(name + ": " + std::to_string(channels) + " channels, need mono");
      if (bits != 16) throw InputError(name + ": " + std::to_string(bits) + "-bit samples, need 16-bit");
      out.sample_rate = le32(f + 4);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw InputError(name + ": data chunk before fmt chunk");
      const auto* d = bytes.data() + body;
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = static_cast<float>(static_cast<std::int16_t>(le16(d + 2 * i))) / 32768.0f;
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw InputError(name + ": no data chunk");
}

/// Loads a WAV file; a nonzero `expected_rate` must match the file's rate.
inline WavData load_wav(const std::string& path, std::int64_t expected_rate = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open audio file '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto wav = parse_wav(bytes, path);
  if (expected_rate > 0 && wav.sample_rate != expected_rate)
    throw InputError(path + ": sample rate " + std::to_string(wav.sample_rate) + " Hz, configuration expects " +
                     std::to_string(expected_rate) + " Hz");
  return wav;
}

inline std::vector<unsigned char> encode_wav(std::span<const float> samples, std::int64_t sample_rate,
                                             std::uint16_t channels = 1) {
  std::vector<unsigned char> out;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
  };
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  u32(36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  u32(16);
  u16(1);
  u16(channels);
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate) * 2u * channels);
  u16(static_cast<std::uint16_t>(2 * channels));
  u16(16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  u32(data_bytes);
  for (float s : samples) {
    const auto q = static_cast<std::int32_t>(std::lround(std::clamp(s, -1.0f, 32767.0f / 32768.0f) * 32768.0f));
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768, 32767))));
  }
  return out;
}

inline void write_wav(const std::string& path, std::span<const float> samples, std::int64_t sample_rate) {
  const auto bytes = encode_wav(samples, sample_rate);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write audio file '" + path + "'");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace asrpu
