#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace csearch {

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for an independent stream: splitmix64(base ^ splitmix64(fnv1a64(key))).
/// Batch runs key streams by prefix id, so the stream a prefix sees does not
/// depend on scheduling order or on its position in the file.
std::uint64_t derive_stream_seed(std::uint64_t base, std::string_view key) noexcept;

/// Portable seeded generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; uniform and normal variates are derived
/// here rather than through <random> distributions, which are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal (Box-Muller).
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace csearch
