/*
 * Copyright (c) 2026 the coupled-gp authors. All rights reserved.
 *
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace cgp {

// splitmix64 finalizer; strong enough avalanche for counter-based streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Maps to (0, 1]; never returns 0 so log() is safe.
inline double to_unit(std::uint64_t x) {
  return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

// Sequential generator used for data synthesis and randomized tests.
class SequentialRng {
 public:
  explicit SequentialRng(std::uint64_t seed) : state_(mix64(seed)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  double uniform() { return to_unit(next_u64()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; generates pairs and caches the second draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Counter-based standard-normal source. Draws are keyed by
// (seed, step, point, sample, component), so evaluation order does not
// matter and the same key always yields the same value.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed, std::uint64_t step = 0)
      : seed_(seed), step_(step) {}

  NoiseStream with_step(std::uint64_t step) const { return NoiseStream(seed_, step); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }

  Eigen::VectorXd normals(std::uint64_t point, std::uint64_t sample, int dim) const {
    std::uint64_t h = mix64(seed_);
    h = mix64(h ^ step_);
    h = mix64(h ^ point);
    h = mix64(h ^ sample);
    Eigen::VectorXd out(dim);
    for (int j = 0; 2 * j < dim; ++j) {
      const std::uint64_t a = mix64(h ^ (2 * static_cast<std::uint64_t>(j)));
      const std::uint64_t b = mix64(h ^ (2 * static_cast<std::uint64_t>(j) + 1));
      const double r = std::sqrt(-2.0 * std::log(to_unit(a)));
      const double theta = 2.0 * M_PI * to_unit(b);
      out[2 * j] = r * std::cos(theta);
      if (2 * j + 1 < dim) out[2 * j + 1] = r * std::sin(theta);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t step_;
};

}  // namespace cgp
