// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dash/block_mask.hpp"
#include "dash/config.hpp"
#include "dash/rng.hpp"

namespace dash::bench {

struct BenchOptions {
  AttnConfig config;                 // n is taken from ns
  std::vector<std::size_t> ns;
  std::vector<double> sparsity;      // each in [0, 1)
  std::uint64_t seed = 0;
  bool single_precision = true;      // time the f32 kernels
  int warmups = 2;
  int repeats = 9;
};

struct BenchRow {
  std::size_t n = 0;
  std::size_t chunk = 0;
  double alpha = 0.0;
  double gamma = 0.0;
  double sigma = 0.0;
  std::string mode;
  double target_sparsity = 0.0;
  double measured_sparsity = 0.0;
  std::size_t blocks_visited = 0;
  std::size_t routable_blocks = 0;
  double time_dense_ms = 0.0;
  double time_sparse_ms = 0.0;
  double max_abs_err = 0.0;
};

// Exactly round((1 - s) * cells) of the (row, routable chunk) cells active,
// placed by shuffling the fixed multiset of bits.
BlockMask random_mask(const AttnConfig& config, double sparsity, Rng& rng,
                      std::size_t* routable_cells = nullptr);

std::vector<BenchRow> run_bench(const BenchOptions& options);

// Header n,B,alpha,gamma,sigma,mode,target_sparsity,measured_sparsity,
// blocks_visited,time_dense_ms,time_sparse_ms,max_abs_err.
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace dash::bench
