#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace asrpu {

/// Root of every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported input data (audio, lexicon, LM, token table).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent accelerator configuration or program (bad keys, unconfigured
/// phases, kernel index gaps, unpartitionable layers).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A command argument outside its domain (e.g. negative beam width).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A command was issued while a decoding step is executing.
class BusyError : public Error {
 public:
  using Error::Error;
};

/// Raised from inside a kernel routine. The execution unit rethrows it as a
/// SimulationError tagged with the kernel and thread that faulted.
class KernelFault : public Error {
 public:
  using Error::Error;
};

/// Failure while simulating a decoding step.
class SimulationError : public Error {
 public:
  static constexpr std::int64_t kNoIndex = -1;

  explicit SimulationError(const std::string& what, std::int64_t kernel_index = kNoIndex,
                           std::int64_t thread_id = kNoIndex)
      : Error(decorate(what, kernel_index, thread_id)),
        kernel_index_(kernel_index),
        thread_id_(thread_id) {}

  std::int64_t kernel_index() const noexcept { return kernel_index_; }
  std::int64_t thread_id() const noexcept { return thread_id_; }

 private:
  static std::string decorate(const std::string& what, std::int64_t k, std::int64_t t) {
    if (k == kNoIndex) return what;
    std::string out = "kernel " + std::to_string(k);
    if (t != kNoIndex) out += " thread " + std::to_string(t);
    return out + ": " + what;
  }

  std::int64_t kernel_index_;
  std::int64_t thread_id_;
};

/// A buffer, memory, or hypothesis store overflowed.
class CapacityError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

}  // namespace asrpu
