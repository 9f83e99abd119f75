// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "dash/backward.hpp"
#include "dash/entmax.hpp"
#include "dash/errors.hpp"
#include "dash/rng.hpp"

namespace dash {
namespace {

std::vector<double> draw(Rng& rng, std::size_t n, double scale) {
  std::vector<double> z(n);
  for (double& v : z) v = scale * rng.normal();
  return z;
}

// Sorted-threshold sparsemax written out independently of the library.
std::vector<double> sparsemax_oracle(std::vector<double> z) {
  std::vector<double> s = z;
  std::sort(s.rbegin(), s.rend());
  double cum = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cum += s[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (s[k] > t) tau = t;
  }
  for (double& v : z) v = std::max(v - tau, 0.0);
  return z;
}

TEST(EntmaxThreshold, TwoPointExamples) {
  const std::vector<double> z0 = {0.0, 0.0};
  EXPECT_NEAR(entmax_threshold(z0, 2.0), -0.5, 1e-12);
  const std::vector<double> z1 = {0.4, 0.0};
  EXPECT_NEAR(entmax_threshold(z1, 2.0), -0.3, 1e-12);
  EXPECT_NEAR(entmax_threshold(z1, 2.0, EntmaxSolver::kBisection), -0.3, 1e-12);
  const std::vector<double> z2 = {1.0, 0.0};
  EXPECT_NEAR(entmax_threshold(z2, 1.5), (1.0 - std::sqrt(7.0)) / 4.0, 1e-12);
}

TEST(EntmaxThreshold, RejectsBadInput) {
  const std::vector<double> z = {1.0, std::nan("")};
  EXPECT_THROW(entmax(z, 1.5), DomainError);
  const std::vector<double> ok = {1.0, 0.0};
  EXPECT_THROW(entmax(ok, 1.0), DomainError);
}

TEST(Entmax, HandExamples) {
  for (double alpha : {1.1, 1.5, 2.0, 3.0}) {
    for (double c : {-7.0, 0.0, 2.5}) {
      const std::vector<double> z = {c, c, c};
      const auto r = entmax(z, alpha);
      for (double p : r.p) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
      EXPECT_EQ(r.support.size(), 3u);
    }
  }
  const std::vector<double> sat = {10.0, 0.0, 0.0};
  const auto r2 = entmax(sat, 2.0);
  EXPECT_EQ(r2.p, (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_EQ(r2.support, (std::vector<std::size_t>{0}));

  const std::vector<double> z = {1.0, 0.0};
  const double tau = (1.0 - std::sqrt(7.0)) / 4.0;
  const auto r = entmax(z, 1.5);
  // Substitute the closed-form threshold into p = [(a-1) z - tau]^(1/(a-1)).
  EXPECT_NEAR(r.p[0], std::pow(0.5 - tau, 2.0), 1e-12);
  EXPECT_NEAR(r.p[1], std::pow(-tau, 2.0), 1e-12);
  EXPECT_NEAR(r.p[0], 0.83071891, 1e-8);
  EXPECT_NEAR(r.p[1], 0.16928109, 1e-8);
}

TEST(Entmax, ShiftInvariantOnSimplex) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto z = draw(rng, 12, 2.0);
    const double alpha = 1.05 + 2.0 * rng.uniform();
    const auto r = entmax(z, alpha);
    double s = 0.0;
    for (double p : r.p) {
      EXPECT_GE(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    ASSERT_FALSE(r.support.empty());
    auto shifted = z;
    for (double& v : shifted) v += 3.7;
    const auto rs = entmax(shifted, alpha);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(rs.p[i], r.p[i], 1e-12);
  }
}

TEST(Sparsemax, ExamplesAndOracle) {
  const std::vector<double> z = {0.4, 0.0};
  const auto p = sparsemax_exact(z);
  EXPECT_NEAR(p[0], 0.7, 1e-15);
  EXPECT_NEAR(p[1], 0.3, 1e-15);

  const std::vector<double> simplex = {0.2, 0.3, 0.5};
  const auto same = sparsemax_exact(simplex);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(same[i], simplex[i], 1e-15);

  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto x = draw(rng, 6, 1.0);
    const auto a = sparsemax_exact(x);
    const auto b = entmax(x, 2.0, EntmaxSolver::kBisection).p;
    const auto o = sparsemax_oracle(x);
    for (int i = 0; i < 6; ++i) {
      EXPECT_NEAR(a[i], o[i], 1e-12);
      EXPECT_NEAR(b[i], o[i], 1e-12);
    }
  }
}

TEST(EntmaxVjp, SingletonSupportHasZeroGradient) {
  const std::vector<double> z = {10.0, 0.0, 0.0};
  const auto r = entmax(z, 2.0);
  const std::vector<double> u = {0.3, -1.0, 2.0};
  for (double g : entmax_vjp(z, 2.0, r, u)) EXPECT_EQ(g, 0.0);
  const std::vector<double> shortu = {1.0};
  EXPECT_THROW(entmax_vjp(z, 2.0, r, shortu), ShapeError);
}

TEST(EntmaxVjp, MatchesFiniteDifferences) {
  const auto check = [](const std::vector<double>& z, double alpha,
                        const std::vector<double>& u, double tol) {
    const auto r = entmax(z, alpha);
    const auto analytic = entmax_vjp(z, alpha, r, u);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> x) {
          const auto p = entmax(x, alpha).p;
          return std::inner_product(p.begin(), p.end(), u.begin(), 0.0);
        },
        z, 1e-5);
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_NEAR(analytic[i], numeric[i], tol) << "alpha " << alpha << " i " << i;
    }
  };
  check({0.3, 0.1, -0.2}, 2.0, {1.0, 0.0, 0.0}, 1e-6);
  Rng rng(17);
  check({1.0, 0.0}, 1.5, draw(rng, 2, 1.0), 1e-5);
  for (int t = 0; t < 20; ++t) {
    const auto z = draw(rng, 8, 1.0);
    const double alpha = 1.2 + rng.uniform();
    const auto r = entmax(z, alpha);
    if (support_margin(z, r) < 1e-3) continue;
    check(z, alpha, draw(rng, 8, 1.0), 1e-5);
  }
}

TEST(EntmaxSupport, MonotoneInAlphaAndScale) {
  Rng rng(23);
  for (int t = 0; t < 300; ++t) {
    const auto z = draw(rng, 16, 1.0);
    std::size_t prev = z.size() + 1;
    for (double alpha : {1.25, 1.5, 2.0, 3.0}) {
      const std::size_t k = entmax(z, alpha).support.size();
      EXPECT_LE(k, prev);
      prev = k;
    }
    prev = z.size() + 1;
    for (double scale : {0.5, 1.0, 2.0, 4.0}) {
      auto zs = z;
      for (double& v : zs) v *= scale;
      const std::size_t k = entmax(zs, 1.5).support.size();
      EXPECT_LE(k, prev);
      prev = k;
    }
  }
}

TEST(EntmaxSupport, MarginAndPrescaledAgree) {
  const std::vector<double> z = {1.0, 0.0};
  const auto r = entmax(z, 1.5);
  const double tau = (1.0 - std::sqrt(7.0)) / 4.0;
  EXPECT_NEAR(support_margin(z, r), -tau, 1e-12);
  const std::vector<double> u = {0.5, 0.0};
  const auto q = entmax_prescaled(u, 1.5);
  EXPECT_NEAR(q.p[0], r.p[0], 1e-15);
}

TEST(TsallisEntropy, Examples) {
  const std::vector<double> uni(5, 0.2);
  EXPECT_NEAR(tsallis_entropy(uni, 1.0), std::log(5.0), 1e-14);
  const std::vector<double> one = {0.0, 1.0, 0.0};
  for (double a : {1.0, 1.5, 2.0}) EXPECT_NEAR(tsallis_entropy(one, a), 0.0, 1e-15);
  const std::vector<double> half = {0.5, 0.5};
  EXPECT_NEAR(tsallis_entropy(half, 2.0), 0.25, 1e-15);
  const std::vector<double> neg = {1.5, -0.5};
  EXPECT_THROW(tsallis_entropy(neg, 1.5), DomainError);
}

}  // namespace
}  // namespace dash
