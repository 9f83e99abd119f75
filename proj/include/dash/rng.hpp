// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "dash/matrix.hpp"

namespace dash {

// Counter-based SplitMix64 generator.
//
// Draw k (k = 1, 2, ...) is mix64(seed + k * 0x9E3779B97F4A7C15), where mix64
// is the SplitMix64 finalizer (Steele, Lea & Flood 2014). The stream depends
// only on the seed and the counter, so it is identical on every platform and
// any draw can be reproduced by seeking. Derived floating-point variates use
// only integer arithmetic, a fixed 2^-53 scale and std::log/std::cos/std::sin,
// never the implementation-defined std:: distributions.
//
// Single-owner: concurrent use needs independent instances (see fork()).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void seek(std::uint64_t counter) {
    counter_ = counter;
    has_spare_ = false;
  }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound), unbiased by rejection.
  std::uint64_t uniform_index(std::uint64_t bound);
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  // Fisher-Yates with uniform_index, so permutations are reproducible.
  template <typename T>
  void shuffle(std::span<T> xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Independent generator for sub-stream `stream`.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

DenseMatrix random_normal(std::size_t rows, std::size_t cols, Rng& rng,
                          double scale = 1.0);
DenseMatrix random_uniform(std::size_t rows, std::size_t cols, Rng& rng,
                           double lo, double hi);

}  // namespace dash
