#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ntil {

/// Seeded generator with platform-independent draws. std::mt19937_64 output is
/// fully specified by the standard; the distribution helpers below are written
/// out so that results do not depend on the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1).
  double uniform_open();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard Gumbel(0, 1) draw.
  double gumbel();

  /// Engine state as text; restore() resumes the exact stream.
  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& other) const = default;

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ntil
