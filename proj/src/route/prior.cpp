// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dash/errors.hpp"
#include "dash/softmax.hpp"

namespace dash {

namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("prior: sigma must be a finite value > 0");
  }
}

bool has_support(std::span<const double> w) {
  return std::any_of(w.begin(), w.end(), [](double v) { return v > 0.0; });
}

}  // namespace

std::vector<double> expand_to_tokens(std::span<const double> per_chunk,
                                     std::size_t chunk) {
  std::vector<double> out(per_chunk.size() * chunk);
  for (std::size_t c = 0; c < per_chunk.size(); ++c) {
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(c * chunk), chunk,
                per_chunk[c]);
  }
  return out;
}

std::optional<std::vector<double>> prior_weights(std::span<const double> w,
                                                 double sigma,
                                                 std::size_t chunk) {
  check_sigma(sigma);
  if (chunk == 0) throw DomainError("prior_weights: B must be >= 1");
  if (!has_support(w)) return std::nullopt;
  // w_c^(1/sigma) / sum w^(1/sigma) evaluated in the log domain, so large
  // sigma does not lose the ratio to rounding of values near 1.
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> a(w.size(), neg_inf);
  double amax = neg_inf;
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (w[c] > 0.0) {
      a[c] = std::log(std::max(w[c], kLogFloor)) / sigma;
      amax = std::max(amax, a[c]);
    }
  }
  double z = 0.0;
  for (double v : a) {
    if (v != neg_inf) z += std::exp(v - amax);
  }
  std::vector<double> per_chunk(w.size(), 0.0);
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (a[c] != neg_inf) {
      per_chunk[c] = std::exp(a[c] - amax) / z / static_cast<double>(chunk);
    }
  }
  return expand_to_tokens(per_chunk, chunk);
}

double prior_lambda(std::span<const double> w_prime_routed,
                    std::size_t routed_count, std::size_t diag_count) {
  if (routed_count == 0 || diag_count == 0) {
    throw DomainError("prior_lambda: |R| and |D| must both be >= 1");
  }
  if (w_prime_routed.size() != routed_count) {
    throw ShapeError("prior_lambda: w' length != |R|");
  }
  const double r = static_cast<double>(routed_count);
  double kl = 0.0;
  for (double v : w_prime_routed) {
    kl += std::log((1.0 / r) / std::max(v, kLogFloor)) / r;
  }
  return sigmoid(kl + std::log(r / static_cast<double>(diag_count)));
}

std::optional<PriorSplit> prior_g(std::span<const double> w, double sigma,
                                  std::size_t chunk, std::size_t diag_count) {
  auto wp = prior_weights(w, sigma, chunk);
  if (!wp) return std::nullopt;
  std::vector<double> routed_values;
  for (double v : *wp) {
    if (v > 0.0) routed_values.push_back(v);
  }
  PriorSplit split;
  split.lambda = prior_lambda(routed_values, routed_values.size(), diag_count);
  split.routed = std::move(*wp);
  for (double& v : split.routed) v *= split.lambda;
  split.diag = (1.0 - split.lambda) / static_cast<double>(diag_count);
  return split;
}

std::optional<std::vector<double>> routing_bias(std::span<const double> w,
                                                double sigma) {
  check_sigma(sigma);
  if (!has_support(w)) return std::nullopt;
  // Every routed chunk contributes B identical tokens, so the token mean of
  // log w equals the mean over support chunks.
  // Mean taken relative to the first routed log so equal weights give an
  // exactly zero bias.
  double anchor = 0.0;
  double mu = 0.0;
  std::size_t count = 0;
  for (double v : w) {
    if (v > 0.0) {
      const double l = std::log(std::max(v, kLogFloor));
      if (count == 0) anchor = l;
      mu += l - anchor;
      ++count;
    }
  }
  mu = anchor + mu / static_cast<double>(count);
  std::vector<double> d(w.size(), 0.0);
  for (std::size_t c = 0; c < w.size(); ++c) {
    if (w[c] > 0.0) d[c] = (std::log(std::max(w[c], kLogFloor)) - mu) / sigma;
  }
  return d;
}

}  // namespace dash
