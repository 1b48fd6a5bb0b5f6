#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "asrpu/config.hpp"
#include "asrpu/ctc_decoder.hpp"
#include "asrpu/error.hpp"
#include "asrpu/frontend.hpp"

namespace asrpu {

/// Everything a run can be configured with from a config file.
struct RunSettings {
  AcceleratorConfig accel;
  FrontendParams frontend;
  DecodeParams decode;

  void validate() const {
    accel.validate();
    frontend.validate();
    decode.validate();
  }
};

namespace detail {

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace detail

/// Applies one `key = value` setting. Unknown keys are configuration errors.
inline void apply_setting(RunSettings& s, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  auto& a = s.accel;
  auto& f = s.frontend;
  auto& d = s.decode;
  const std::map<std::string, std::function<void(const std::string&)>> table = {
      {"frequency_hz", [&](const std::string& v) { a.frequency_hz = parse_int(key, v); }},
      {"num_pes", [&](const std::string& v) { a.num_pes = parse_int(key, v); }},
      {"mac_width", [&](const std::string& v) { a.mac_width = parse_int(key, v); }},
      {"shared_mem_bytes", [&](const std::string& v) { a.shared_mem_bytes = parse_int(key, v); }},
      {"model_mem_bytes", [&](const std::string& v) { a.model_mem_bytes = parse_int(key, v); }},
      {"hyp_mem_bytes", [&](const std::string& v) { a.hyp_mem_bytes = parse_int(key, v); }},
      {"pe_dcache_bytes", [&](const std::string& v) { a.pe_dcache_bytes = parse_int(key, v); }},
      {"pe_icache_bytes", [&](const std::string& v) { a.pe_icache_bytes = parse_int(key, v); }},
      {"dma_bytes_per_cycle", [&](const std::string& v) { a.dma_bytes_per_cycle = parse_int(key, v); }},
      {"cache_line_bytes", [&](const std::string& v) { a.cache_line_bytes = parse_int(key, v); }},
      {"hyp_record_bytes", [&](const std::string& v) { a.hyp_record_bytes = parse_int(key, v); }},
      {"finalize_cycles_per_record", [&](const std::string& v) { a.finalize_cycles_per_record = parse_int(key, v); }},
      {"merge_mode",
       [&](const std::string& v) {
         if (v == "max")
           a.merge_mode = MergeMode::max;
         else if (v == "logsumexp")
           a.merge_mode = MergeMode::log_sum_exp;
         else
           throw ConfigError("merge_mode must be max or logsumexp");
       }},
      {"dma_gating",
       [&](const std::string& v) {
         if (v == "kernel0")
           a.dma_gating = DmaGating::kernel0;
         else if (v == "all")
           a.dma_gating = DmaGating::all;
         else
           throw ConfigError("dma_gating must be kernel0 or all");
       }},
      {"prefetch_on_stop", [&](const std::string& v) { a.prefetch_on_stop = parse_bool(key, v); }},
      {"cost.mac", [&](const std::string& v) { a.costs.mac = parse_int(key, v); }},
      {"cost.add", [&](const std::string& v) { a.costs.add = parse_int(key, v); }},
      {"cost.mul", [&](const std::string& v) { a.costs.mul = parse_int(key, v); }},
      {"cost.load", [&](const std::string& v) { a.costs.load = parse_int(key, v); }},
      {"cost.store", [&](const std::string& v) { a.costs.store = parse_int(key, v); }},
      {"cost.compare", [&](const std::string& v) { a.costs.compare = parse_int(key, v); }},
      {"cost.branch", [&](const std::string& v) { a.costs.branch = parse_int(key, v); }},
      {"cost.sfu", [&](const std::string& v) { a.costs.sfu = parse_int(key, v); }},
      {"sample_rate", [&](const std::string& v) { f.sample_rate = parse_int(key, v); }},
      {"frame_len_ms", [&](const std::string& v) { f.frame_len_ms = parse_int(key, v); }},
      {"frame_shift_ms", [&](const std::string& v) { f.frame_shift_ms = parse_int(key, v); }},
      {"n_mels", [&](const std::string& v) { f.n_mels = parse_int(key, v); }},
      {"n_ceps", [&](const std::string& v) { f.n_ceps = parse_int(key, v); }},
      {"n_fft", [&](const std::string& v) { f.n_fft = parse_int(key, v); }},
      {"preemphasis", [&](const std::string& v) { f.preemphasis = parse_real(key, v); }},
      {"window",
       [&](const std::string& v) {
         if (v == "hamming")
           f.window = WindowKind::hamming;
         else if (v == "hann")
           f.window = WindowKind::hann;
         else if (v == "rectangular")
           f.window = WindowKind::rectangular;
         else
           throw ConfigError("window must be hamming, hann or rectangular");
       }},
      {"log_floor", [&](const std::string& v) { f.log_floor = parse_real(key, v); }},
      {"max_frames_per_step", [&](const std::string& v) { f.max_frames_per_step = parse_int(key, v); }},
      {"beam_width", [&](const std::string& v) { d.beam_width = parse_real(key, v); }},
      {"lm_weight", [&](const std::string& v) { d.lm_weight = parse_real(key, v); }},
      {"word_penalty", [&](const std::string& v) { d.word_penalty = parse_real(key, v); }},
  };
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(value);
}

/// `key = value` lines; `#` starts a comment.
inline RunSettings parse_settings(std::istream& in, RunSettings base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    apply_setting(base, key, value);
  }
  base.validate();
  return base;
}

inline RunSettings load_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_settings(in);
}

}  // namespace asrpu
