#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "asrpu/config.hpp"
#include "asrpu/error.hpp"

namespace asrpu {

/// Instructions charged for a counted loop: one for the induction variable
/// initialisation, then per iteration a compare, a conditional branch and the
/// variable update on top of the body.
constexpr std::int64_t loop_cost(std::int64_t iterations, std::int64_t body_cost) {
  return 1 + iterations * (body_cost + 3);
}

enum class SfuOp { log, exp, cos };

/// Special function unit. Log of a non-positive value is a kernel fault.
inline float sfu_eval(SfuOp op, float x) {
  switch (op) {
    case SfuOp::log:
      if (!(x > 0.0f)) throw KernelFault("sfu log of non-positive value " + std::to_string(x));
      return std::log(x);
    case SfuOp::exp:
      return std::exp(x);
    case SfuOp::cos:
      return std::cos(x);
  }
  return 0.0f;
}

/// Reference semantics of the vector MAC: acc + sum(a[i] * b[i]) with a
/// 32-bit accumulator.
inline std::int32_t vector_mac(std::int32_t acc, std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
  const auto n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) acc += std::int32_t{a[i]} * std::int32_t{b[i]};
  return acc;
}

/// Execution context of one simulated thread. Owns the instruction counter;
/// every primitive a kernel executes goes through here so the charged count
/// is exactly the sum of primitive costs and loop overheads.
class PEContext {
 public:
  explicit PEContext(const CostTable& costs = {}, std::int64_t mac_width = 8)
      : costs_(costs), mac_width_(mac_width) {}

  std::int64_t instruction_count() const noexcept { return count_; }
  std::int64_t mac_width() const noexcept { return mac_width_; }
  const CostTable& costs() const noexcept { return costs_; }

  void add(std::int64_t n = 1) { count_ += n * costs_.add; }
  void mul(std::int64_t n = 1) { count_ += n * costs_.mul; }
  void load(std::int64_t n = 1) { count_ += n * costs_.load; }
  void store(std::int64_t n = 1) { count_ += n * costs_.store; }
  void compare(std::int64_t n = 1) { count_ += n * costs_.compare; }
  void branch(std::int64_t n = 1) { count_ += n * costs_.branch; }

  /// One vector MAC instruction over up to mac_width int8 lanes.
  std::int32_t vmac(std::int32_t acc, std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
    if (static_cast<std::int64_t>(std::min(a.size(), b.size())) > mac_width_)
      throw KernelFault("vmac operand wider than the MAC unit");
    count_ += costs_.mac;
    return vector_mac(acc, a, b);
  }

  float sfu(SfuOp op, float x) {
    count_ += costs_.sfu;
    return sfu_eval(op, x);
  }
  double sfu(SfuOp op, double x) {
    count_ += costs_.sfu;
    if (op == SfuOp::log && !(x > 0.0)) throw KernelFault("sfu log of non-positive value " + std::to_string(x));
    return op == SfuOp::log ? std::log(x) : op == SfuOp::exp ? std::exp(x) : std::cos(x);
  }

  /// Lane-wise saturating vector add / multiply (one instruction each).
  template <std::size_t N>
  void vadd(std::span<const std::int8_t, N> a, std::span<const std::int8_t, N> b,
            std::span<std::int8_t, N> out) {
    count_ += costs_.add;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = saturate(int{a[i]} + int{b[i]});
  }
  template <std::size_t N>
  void vmul(std::span<const std::int8_t, N> a, std::span<const std::int8_t, N> b,
            std::span<std::int8_t, N> out) {
    count_ += costs_.mul;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = saturate(int{a[i]} * int{b[i]});
  }

  /// Symmetric int8 quantisation: scale, round, clamp to [-127, 127].
  std::int8_t quantize(float value, float inv_scale) {
    mul();
    add();
    compare(2);
    return quantize_value(value, inv_scale);
  }

  static std::int8_t quantize_value(float value, float inv_scale) {
    const float r = std::nearbyint(value * inv_scale);
    return static_cast<std::int8_t>(std::clamp(r, -127.0f, 127.0f));
  }

  /// Runs body(i) for i in [0, n) and charges the loop overhead of loop_cost.
  template <class Body>
  void loop(std::int64_t n, Body&& body) {
    add();  // init
    for (std::int64_t i = 0; i < n; ++i) {
      compare();
      branch();
      body(i);
      add();  // update
    }
  }

 private:
  static std::int8_t saturate(int v) { return static_cast<std::int8_t>(std::clamp(v, -128, 127)); }

  CostTable costs_;
  std::int64_t mac_width_;
  std::int64_t count_ = 0;
};

/// Seconds taken by a thread at one instruction per cycle.
inline double elapsed_time(const PEContext& ctx, const AcceleratorConfig& config) {
  return static_cast<double>(ctx.instruction_count()) / static_cast<double>(config.frequency_hz);
}

}  // namespace asrpu
