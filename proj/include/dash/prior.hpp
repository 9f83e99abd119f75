// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dash {

// Per-query Stage-2 prior built from merged chunk weights w (length = number
// of routable chunks, zero off the support). Routed tokens are laid out
// chunk-major: token j of the routable region belongs to chunk j / B.

// Guard applied before every log of a weight.
inline constexpr double kLogFloor = 1e-300;

// Strength-reduced per-token prior
//   w'_j = (1/B) w_{c(j)}^(1/sigma) / sum_c w_c^(1/sigma)
// over all w.size() * B routable tokens (zero on unrouted chunks).
// nullopt when w has no positive entry (diagonal-only query).
std::optional<std::vector<double>> prior_weights(std::span<const double> w,
                                                 double sigma,
                                                 std::size_t chunk);

// lambda = sigmoid(KL(u_R || w'_R) + log(|R| / |D|)), with w'_R the prior
// restricted to the routed tokens as-is (not renormalized).
double prior_lambda(std::span<const double> w_prime_routed,
                    std::size_t routed_count, std::size_t diag_count);

struct PriorSplit {
  std::vector<double> routed;  // g over the routable tokens, chunk-major
  double diag = 0.0;           // g on each diagonal token: (1-lambda)/|D|
  double lambda = 0.0;
};

// Three-branch prior g: lambda * w' on routed tokens, (1 - lambda)/|D| on the
// diagonal window, zero elsewhere. nullopt for a diagonal-only query.
std::optional<PriorSplit> prior_g(std::span<const double> w, double sigma,
                                  std::size_t chunk, std::size_t diag_count);

// Additive-logit form of the same prior, per chunk (every token of chunk c
// gets bias[c]): (log w_c - mu) / sigma on the support with mu the mean of
// log w over routed tokens, zero elsewhere. nullopt for a diagonal-only
// query. Diagonal tokens always carry zero bias.
std::optional<std::vector<double>> routing_bias(std::span<const double> w,
                                                double sigma);

// Expands a per-chunk vector to per-token values, chunk-major.
std::vector<double> expand_to_tokens(std::span<const double> per_chunk,
                                     std::size_t chunk);

}  // namespace dash
