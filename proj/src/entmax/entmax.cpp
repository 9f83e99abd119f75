// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/entmax.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dash/errors.hpp"

namespace dash {

namespace {

void check_inputs(std::span<const double> z, double alpha) {
  if (z.empty()) throw DomainError("entmax: empty score vector");
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw DomainError("entmax: alpha must be a finite value > 1");
  }
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("entmax: non-finite score");
  }
}

// x^(1/(alpha-1)) for x >= 0, with exact fast paths at alpha = 2 and 1.5.
double pow_inv(double x, double alpha) {
  if (alpha == 2.0) return x;
  if (alpha == 1.5) return x * x;
  return std::pow(x, 1.0 / (alpha - 1.0));
}

// Sparsemax threshold on already-scaled scores (alpha = 2, so u = z).
double sort_threshold(std::span<const double> u) {
  std::vector<double> sorted(u.begin(), u.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = sorted[0] - 1.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumsum += sorted[k];
    const double candidate = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] > candidate) {
      tau = candidate;
    } else {
      break;
    }
  }
  return tau;
}

// Bisection stops at a sum tolerance, which leaves tau jittering at the 1e-12
// level between nearby inputs. A few Newton steps on the fixed support pin it
// to rounding precision so finite differences see a smooth map.
double newton_polish(std::span<const double> u, double alpha, double tau) {
  double floor_u = -INFINITY;  // largest score outside the support
  double ceil_u = INFINITY;    // smallest score inside it
  for (double v : u) {
    if (v > tau) {
      ceil_u = std::min(ceil_u, v);
    } else {
      floor_u = std::max(floor_u, v);
    }
  }
  const double e = 1.0 / (alpha - 1.0);
  for (int it = 0; it < 8; ++it) {
    double f = -1.0;
    double df = 0.0;
    for (double v : u) {
      if (v > tau) {
        const double gap = v - tau;
        const double pw = pow_inv(gap, alpha);
        f += pw;
        df -= e * pw / gap;
      }
    }
    if (df == 0.0) break;
    const double next = tau - f / df;
    if (!(next >= floor_u && next < ceil_u)) break;
    const double step = std::abs(next - tau);
    tau = next;
    if (step <= 4e-16 * std::max(1.0, std::abs(tau))) break;
  }
  return tau;
}

double bisect_threshold(std::span<const double> u, double alpha) {
  const double umax = *std::max_element(u.begin(), u.end());
  double lo = umax - 1.0;
  double hi = umax;
  double tau = 0.5 * (lo + hi);
  for (int it = 0; it < kMaxHalvings; ++it) {
    tau = 0.5 * (lo + hi);
    double sum = 0.0;
    for (double v : u) {
      if (v > tau) sum += pow_inv(v - tau, alpha);
    }
    const double f = sum - 1.0;
    if (std::abs(f) < kEntmaxSumTol) break;
    if (f > 0.0) {
      lo = tau;
    } else {
      hi = tau;
    }
  }
  return newton_polish(u, alpha, tau);
}

double threshold_prescaled(std::span<const double> u, double alpha,
                           EntmaxSolver solver) {
  if (alpha == 2.0 && solver == EntmaxSolver::kAuto) return sort_threshold(u);
  return bisect_threshold(u, alpha);
}

std::vector<double> scale(std::span<const double> z, double alpha) {
  std::vector<double> u(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) u[i] = (alpha - 1.0) * z[i];
  return u;
}

}  // namespace

double entmax_threshold(std::span<const double> z, double alpha,
                        EntmaxSolver solver) {
  check_inputs(z, alpha);
  const auto u = scale(z, alpha);
  return threshold_prescaled(u, alpha, solver);
}

EntmaxResult entmax_prescaled(std::span<const double> u, double alpha,
                              EntmaxSolver solver) {
  check_inputs(u, alpha);
  EntmaxResult r;
  r.alpha = alpha;
  r.tau = threshold_prescaled(u, alpha, solver);
  r.p.assign(u.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double gap = u[i] - r.tau;
    if (gap > 0.0) {
      r.p[i] = pow_inv(gap, alpha);
      sum += r.p[i];
    }
  }
  if (!(sum > 0.0)) {
    // Only reachable if rounding pushed tau past the max; the argmax is
    // always in the support.
    const auto top = static_cast<std::size_t>(
        std::max_element(u.begin(), u.end()) - u.begin());
    r.p[top] = 1.0;
    sum = 1.0;
  }
  for (std::size_t i = 0; i < r.p.size(); ++i) {
    if (r.p[i] > 0.0) {
      r.p[i] /= sum;
      r.support.push_back(i);
    }
  }
  return r;
}

EntmaxResult entmax(std::span<const double> z, double alpha,
                    EntmaxSolver solver) {
  check_inputs(z, alpha);
  const auto u = scale(z, alpha);
  return entmax_prescaled(u, alpha, solver);
}

std::vector<double> sparsemax_exact(std::span<const double> z) {
  if (z.empty()) throw DomainError("sparsemax: empty score vector");
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("sparsemax: non-finite score");
  }
  // Support size k(z) = max{k : 1 + k z_(k) > sum_{j<=k} z_(j)} over the
  // descending order statistics; tau = (sum_{j<=k(z)} z_(j) - 1) / k(z).
  std::vector<double> zs(z.begin(), z.end());
  std::sort(zs.begin(), zs.end(), std::greater<>());
  std::vector<double> prefix(zs.size());
  std::partial_sum(zs.begin(), zs.end(), prefix.begin());
  std::size_t k = 1;
  for (std::size_t j = 1; j <= zs.size(); ++j) {
    if (1.0 + static_cast<double>(j) * zs[j - 1] > prefix[j - 1]) k = j;
  }
  const double tau = (prefix[k - 1] - 1.0) / static_cast<double>(k);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
  return p;
}

std::vector<double> entmax_vjp(std::span<const double> z, double alpha,
                               const EntmaxResult& result,
                               std::span<const double> upstream) {
  if (z.size() != result.p.size() || upstream.size() != result.p.size()) {
    throw ShapeError("entmax_vjp: z, result and upstream lengths differ");
  }
  std::vector<double> grad(z.size(), 0.0);
  double s_sum = 0.0;
  double s_dot = 0.0;
  for (std::size_t i : result.support) {
    const double s = alpha == 2.0 ? 1.0 : std::pow(result.p[i], 2.0 - alpha);
    grad[i] = s;
    s_sum += s;
    s_dot += s * upstream[i];
  }
  const double mean = s_dot / s_sum;
  for (std::size_t i : result.support) grad[i] *= upstream[i] - mean;
  return grad;
}

double support_margin(std::span<const double> z, const EntmaxResult& result) {
  double m = INFINITY;
  for (std::size_t i = 0; i < z.size(); ++i) {
    m = std::min(m, std::abs((result.alpha - 1.0) * z[i] - result.tau));
  }
  return m;
}

double tsallis_entropy(std::span<const double> p, double alpha) {
  for (double v : p) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw DomainError("tsallis_entropy: negative or non-finite probability");
    }
  }
  if (alpha == 1.0) {
    double h = 0.0;
    for (double v : p) {
      if (v > 0.0) h -= v * std::log(v);
    }
    return h;
  }
  double acc = 0.0;
  for (double v : p) acc += v - std::pow(v, alpha);
  return acc / (alpha * (alpha - 1.0));
}

}  // namespace dash
