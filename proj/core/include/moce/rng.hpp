// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace moce {

// Deterministic RNG used everywhere randomness appears. Hand-rolled
// (splitmix64 core, Box-Muller normals) so that streams are bit-identical
// across platforms and standard-library versions; std::normal_distribution
// makes no such guarantee. Named substreams keep independent consumers
// (data order, masks, gate noise, init) from perturbing each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Reject to kill modulo bias.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller, two fresh uniforms per draw (no cached
  // spare; stream position stays a pure function of the draw count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derived generator for an independent named stream.
  Rng fork(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    Rng r(state_ ^ h);
    r.next_u64();  // decorrelate from the parent state
    return Rng(r.next_u64());
  }

  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ (stream * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL));
    r.next_u64();
    return Rng(r.next_u64());
  }

 private:
  std::uint64_t state_;
};

}  // namespace moce
