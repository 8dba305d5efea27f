#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace dora {

/// SplitMix64-based generator. All randomness in the project flows from one
/// master seed through named sub-streams (`fork`), so every consumer draws
/// from an independent, reproducible stream and no generator state needs to
/// be serialized: a stream is a pure function of (seed, fork path).
///
/// std::uniform_* distributions are implementation-defined, so the mapping
/// from raw bits to doubles is done by hand here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ kGolden)) {}

  uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), n >= 1.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent sub-stream identified by name.
  Rng fork(std::string_view name) const {
    return Rng(mix(state_ ^ fnv1a(name)));
  }

  /// Independent sub-stream identified by an integer (step, clip index, ...).
  Rng fork(uint64_t salt) const {
    return Rng(mix(state_ ^ mix(salt + 0x9e3779b9ull)));
  }

 private:
  static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  uint64_t state_;
};

}  // namespace dora
