// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dash {

// Output of alpha-entmax: p_i = [(alpha-1) z_i - tau]_+^(1/(alpha-1)).
// Invariants: p on the simplex, support = {i : p_i > 0} sorted ascending and
// never empty. A coordinate exactly at the threshold is excluded.
struct EntmaxResult {
  std::vector<double> p;
  double tau = 0.0;
  std::vector<std::size_t> support;
  double alpha = 1.5;
};

enum class EntmaxSolver {
  kAuto,       // exact sort at alpha == 2, bisection otherwise
  kBisection,  // always bisection, any alpha > 1
};

// Bisection stops once |sum p - 1| < this, or after kMaxHalvings.
inline constexpr double kEntmaxSumTol = 1e-12;
inline constexpr int kMaxHalvings = 100;

double entmax_threshold(std::span<const double> z, double alpha,
                        EntmaxSolver solver = EntmaxSolver::kAuto);

EntmaxResult entmax(std::span<const double> z, double alpha,
                    EntmaxSolver solver = EntmaxSolver::kAuto);

// Same map on pre-scaled scores u = (alpha-1) z. The router folds the
// (alpha-1) factor into its logits and calls this directly.
EntmaxResult entmax_prescaled(std::span<const double> u, double alpha,
                              EntmaxSolver solver = EntmaxSolver::kAuto);

// Euclidean projection onto the simplex by the sorted-threshold rule.
std::vector<double> sparsemax_exact(std::span<const double> z);

// J^T * upstream with the support of `result` held fixed:
//   J = diag(s) - s s^T / (1^T s),  s_i = p_i^(2-alpha) on the support.
// Zero off the support.
std::vector<double> entmax_vjp(std::span<const double> z, double alpha,
                               const EntmaxResult& result,
                               std::span<const double> upstream);

// min_i |(alpha-1) z_i - tau|: distance of the input from the nearest point
// where the support changes.
double support_margin(std::span<const double> z, const EntmaxResult& result);

// Tsallis alpha-entropy; Shannon entropy (natural log) at alpha == 1.
double tsallis_entropy(std::span<const double> p, double alpha);

}  // namespace dash
