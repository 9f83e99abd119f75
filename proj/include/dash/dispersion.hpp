// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dash/rng.hpp"

namespace dash {

// -sum p log p (natural log, 0 log 0 = 0). Throws DomainError on a negative
// or non-finite entry.
double shannon_entropy(std::span<const double> p);

// H(p) / log n. Throws DomainError for n < 2.
double dispersion_ratio(std::span<const double> p, std::size_t n);

enum class MappingKind { kSoftmax, kEntmax, kTopkSoftmax };

struct Mapping {
  MappingKind kind = MappingKind::kSoftmax;
  double alpha = 1.5;  // entmax only
  std::size_t k = 8;   // top-k only
};

// "softmax", "entmax", "topk"; alpha and k are filled by the caller.
MappingKind parse_mapping(std::string_view name);
std::string_view mapping_name(MappingKind kind);

// Probability vector f(z).
std::vector<double> apply_mapping(std::span<const double> z, const Mapping& f);

struct AggregationSpec {
  std::size_t heads = 1;
  std::vector<double> theta;  // empty means uniform
  Mapping f;

  // Throws DomainError unless heads >= 1 and theta is on the simplex.
  std::vector<double> weights() const;
};

// sum_h theta_h p_h. Throws ShapeError on unequal lengths or a theta of the
// wrong size and DomainError when theta is off the simplex.
std::vector<double> head_aggregate(const std::vector<std::vector<double>>& dists,
                                   std::span<const double> theta);

enum class LogitFamily { kUniform01, kClippedGaussian, kSpike };

LogitFamily parse_family(std::string_view name);
std::string_view family_name(LogitFamily family);

// Bounded iid logits: U[0,1]; N(0,1) clipped to [-3,3]; or U[0,1] with one
// random coordinate raised to 2, which sparsemax keeps alone.
std::vector<double> draw_logits(LogitFamily family, std::size_t n, Rng& rng);

// Expected softmax entropy ratio for U[0,1] logits at large n:
// (log n + log(e-1) - 1/(e-1)) / log n.
double softmax_uniform_ratio(std::size_t n);

struct DispersionPoint {
  std::size_t n = 0;
  std::string family;
  std::string mapping;
  double alpha = 0.0;
  std::size_t k = 0;
  double mean_ratio = 0.0;
  double std_ratio = 0.0;
  std::size_t seeds = 0;
};

// For each n: `seeds` independent draws of aggregation.heads logit vectors,
// mapped by aggregation.f and aggregated with its theta, entropy ratio
// averaged over seeds. Cells run in parallel and are deterministic.
std::vector<DispersionPoint> dispersion_sweep(LogitFamily family,
                                              std::span<const std::size_t> ns,
                                              const AggregationSpec& aggregation,
                                              std::size_t seeds,
                                              std::uint64_t base_seed = 0);

// Header n,family,mapping,alpha,k,mean_ratio,std_ratio,seeds.
void write_dispersion_csv(std::ostream& os,
                          const std::vector<DispersionPoint>& points);

}  // namespace dash
