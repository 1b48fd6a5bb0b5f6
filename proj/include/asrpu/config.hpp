#pragma once

#include <bit>
#include <cstdint>
#include <string>

#include "asrpu/error.hpp"

namespace asrpu {

inline constexpr std::int64_t kKiB = 1024;
inline constexpr std::int64_t kMiB = 1024 * kKiB;

/// Instructions charged per primitive operation. Every PE retires one
/// instruction per cycle, so these are also cycle costs.
struct CostTable {
  std::int64_t mac = 1;
  std::int64_t add = 1;
  std::int64_t mul = 1;
  std::int64_t load = 1;
  std::int64_t store = 1;
  std::int64_t compare = 1;
  std::int64_t branch = 1;
  std::int64_t sfu = 1;

  void validate() const {
    for (auto c : {mac, add, mul, load, store, compare, branch, sfu})
      if (c < 1) throw ConfigError("cost table entries must be >= 1");
  }
};

/// How the hypothesis unit combines two submissions with the same hash.
enum class MergeMode { max, log_sum_exp };

/// Which kernels wait for their model-memory DMA before dispatching threads.
/// `kernel0` treats all other layers as already prefetched.
enum class DmaGating { kernel0, all };

/// Hardware parameters of the simulated accelerator. Defaults are the
/// low-power real-time configuration (500 MHz, 8 PEs, 8-lane MAC).
struct AcceleratorConfig {
  std::int64_t frequency_hz = 500'000'000;
  std::int64_t num_pes = 8;
  std::int64_t mac_width = 8;
  std::int64_t shared_mem_bytes = 512 * kKiB;
  std::int64_t model_mem_bytes = 1 * kMiB;
  std::int64_t hyp_mem_bytes = 24 * kKiB;
  std::int64_t pe_dcache_bytes = 24 * kKiB;
  std::int64_t pe_icache_bytes = 4 * kKiB;

  std::int64_t dma_bytes_per_cycle = 8;
  std::int64_t cache_line_bytes = 64;
  std::int64_t hyp_record_bytes = 24;
  std::int64_t finalize_cycles_per_record = 1;
  MergeMode merge_mode = MergeMode::max;
  DmaGating dma_gating = DmaGating::kernel0;
  bool prefetch_on_stop = true;

  CostTable costs{};

  std::int64_t hyp_capacity_records() const { return hyp_mem_bytes / hyp_record_bytes; }

  void validate() const {
    auto positive = [](std::int64_t v, const char* name) {
      if (v <= 0) throw ConfigError(std::string(name) + " must be > 0");
    };
    positive(frequency_hz, "frequency_hz");
    positive(num_pes, "num_pes");
    positive(mac_width, "mac_width");
    positive(shared_mem_bytes, "shared_mem_bytes");
    positive(model_mem_bytes, "model_mem_bytes");
    positive(hyp_mem_bytes, "hyp_mem_bytes");
    positive(pe_dcache_bytes, "pe_dcache_bytes");
    positive(pe_icache_bytes, "pe_icache_bytes");
    positive(dma_bytes_per_cycle, "dma_bytes_per_cycle");
    positive(cache_line_bytes, "cache_line_bytes");
    positive(hyp_record_bytes, "hyp_record_bytes");
    if (finalize_cycles_per_record < 0) throw ConfigError("finalize_cycles_per_record must be >= 0");
    if (!std::has_single_bit(static_cast<std::uint64_t>(mac_width)))
      throw ConfigError("mac_width must be a power of two");
    if (hyp_capacity_records() < 1) throw ConfigError("hypothesis memory holds no records");
    costs.validate();
  }
};

}  // namespace asrpu
