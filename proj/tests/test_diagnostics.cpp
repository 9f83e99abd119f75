// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "dash/dispersion.hpp"
#include "dash/entmax.hpp"
#include "dash/errors.hpp"
#include "dash/pipeline.hpp"
#include "dash/route.hpp"
#include "dash/sparsity.hpp"

namespace dash {
namespace {

TEST(ShannonEntropy, Examples) {
  const std::vector<double> u(8, 0.125);
  EXPECT_NEAR(shannon_entropy(u), std::log(8.0), 1e-15);
  const std::vector<double> one = {0, 1, 0};
  EXPECT_EQ(shannon_entropy(one), 0.0);
  const std::vector<double> p = {0.75, 0.25};
  EXPECT_NEAR(shannon_entropy(p), 0.5623, 1e-4);
  EXPECT_NEAR(shannon_entropy(p), 0.75 * std::log(4.0 / 3.0) + 0.25 * std::log(4.0), 1e-15);
  const std::vector<double> bad = {1.2, -0.2};
  EXPECT_THROW(shannon_entropy(bad), DomainError);
}

TEST(DispersionRatio, Examples) {
  const std::vector<double> u(50, 0.02);
  EXPECT_NEAR(dispersion_ratio(u, 50), 1.0, 1e-15);
  const std::vector<double> one = {0, 1};
  EXPECT_EQ(dispersion_ratio(one, 2), 0.0);
  const std::vector<double> single = {1.0};
  EXPECT_THROW(dispersion_ratio(single, 1), DomainError);

  Rng rng(1);
  const Mapping topk{MappingKind::kTopkSoftmax, 1.5, 8};
  for (int t = 0; t < 20; ++t) {
    const auto z = draw_logits(LogitFamily::kClippedGaussian, 4096, rng);
    EXPECT_LE(dispersion_ratio(apply_mapping(z, topk), 4096),
              std::log(8.0) / std::log(4096.0));
  }
}

TEST(HeadAggregate, Examples) {
  const std::vector<std::vector<double>> one = {{0.2, 0.3, 0.5}};
  const std::vector<double> t1 = {1.0};
  EXPECT_EQ(head_aggregate(one, t1), one[0]);
  const std::vector<std::vector<double>> two = {{1, 0}, {0, 1}};
  const std::vector<double> half = {0.5, 0.5};
  const auto agg = head_aggregate(two, half);
  EXPECT_EQ(agg, (std::vector<double>{0.5, 0.5}));
  EXPECT_NEAR(shannon_entropy(agg), std::log(2.0), 1e-15);
  const std::vector<double> bad = {0.7, 0.7};
  EXPECT_THROW(head_aggregate(two, bad), DomainError);
  const std::vector<double> wrong = {1.0};
  EXPECT_THROW(head_aggregate(two, wrong), ShapeError);
}

TEST(HeadAggregate, EntmaxAggregateBoundedByUnionSupport) {
  // Heads with supports of size 3 and 5 over 20 coordinates.
  std::vector<double> z1(20, -10.0);
  std::vector<double> z2(20, -10.0);
  for (int i = 0; i < 3; ++i) z1[i] = 1.0 + 0.1 * i;
  for (int i = 0; i < 5; ++i) z2[10 + i] = 0.5 + 0.2 * i;
  const auto p1 = entmax(z1, 1.5);
  const auto p2 = entmax(z2, 1.5);
  ASSERT_EQ(p1.support.size(), 3u);
  ASSERT_EQ(p2.support.size(), 5u);
  const std::vector<double> theta = {0.3, 0.7};
  const auto agg = head_aggregate({p1.p, p2.p}, theta);
  EXPECT_LE(shannon_entropy(agg), std::log(8.0));
}

TEST(DispersionSweep, SoftmaxRatioGrowsAndMatchesAnalytic) {
  const std::vector<std::size_t> ns = {256, 2048, 16384};
  AggregationSpec agg;
  const auto pts = dispersion_sweep(LogitFamily::kUniform01, ns, agg, 4, 1);
  ASSERT_EQ(pts.size(), 3u);
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_GT(pts[i].mean_ratio, pts[i - 1].mean_ratio);
  EXPECT_NEAR(pts[2].mean_ratio, softmax_uniform_ratio(16384), 0.005);
  // Deterministic for a fixed seed.
  const auto again = dispersion_sweep(LogitFamily::kUniform01, ns, agg, 4, 1);
  EXPECT_EQ(again[2].mean_ratio, pts[2].mean_ratio);
  std::ostringstream os;
  write_dispersion_csv(os, pts);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "n,family,mapping,alpha,k,mean_ratio,std_ratio,seeds");
}

TEST(DispersionSweep, SparsemaxWithDominantLogitCollapses) {
  const std::vector<std::size_t> ns = {64, 1024, 16384};
  AggregationSpec agg;
  agg.f = Mapping{MappingKind::kEntmax, 2.0, 0};
  for (const auto& p : dispersion_sweep(LogitFamily::kSpike, ns, agg, 3, 2)) {
    EXPECT_EQ(p.mean_ratio, 0.0);
  }
}

TEST(DispersionSweep, TopkNeverExceedsLogK) {
  const std::vector<std::size_t> ns = {64, 1024, 8192};
  AggregationSpec agg;
  agg.f = Mapping{MappingKind::kTopkSoftmax, 1.5, 8};
  for (const auto& p : dispersion_sweep(LogitFamily::kUniform01, ns, agg, 5, 3)) {
    EXPECT_LE(p.mean_ratio, std::log(8.0) / std::log(static_cast<double>(p.n)));
  }
}

AttnConfig sparsity_config() {
  AttnConfig c;
  c.n = 512;
  c.chunk = 32;
  c.head_dim = 8;
  c.h_q = 4;
  c.h_kv = 2;
  c.gamma = 8.0;
  return c;
}

TEST(SparsityStats, CountingOracle) {
  std::vector<Trace> layers;
  layers.push_back(run_forward(random_inputs(sparsity_config(), 1, 1.0)));
  layers.push_back(run_forward(random_inputs(sparsity_config(), 2, 1.0)));
  const SparsityTable table = sparsity_stats(layers);
  ASSERT_EQ(table.rows.size(), 2u * 4u);
  double total = 0.0;
  for (const SparsityRow& row : table.rows) {
    const Trace& t = layers[row.layer];
    const AttnConfig& c = t.config();
    std::size_t attended = 0;
    std::size_t visible = 0;
    for (std::size_t i = 0; i < c.n; ++i) {
      const RouteResult& rr = t.route.at(i, row.kv_head);
      // Token-level count over the mask bits and the window.
      for (std::size_t j = 0; j <= i; ++j) {
        const bool routed = j / c.chunk < c.num_chunks() &&
                            t.route.mask.test(i * c.h_kv + row.kv_head, j / c.chunk) &&
                            !rr.diag.contains(j);
        attended += (routed || rr.diag.contains(j)) ? 1 : 0;
      }
      visible += i + 1;
    }
    EXPECT_EQ(row.attended_tokens, attended);
    EXPECT_EQ(row.causal_tokens, visible);
    EXPECT_DOUBLE_EQ(row.sparsity, 1.0 - static_cast<double>(attended) / visible);
    total += row.sparsity;
  }
  EXPECT_NEAR(table.mean, total / table.rows.size(), 1e-15);
  EXPECT_GT(table.mean, 0.0);
}

TEST(SparsityStats, FullRoutingIsZeroAndEmptyRejected) {
  AttnConfig c = sparsity_config();
  c.gamma = 1e-9;
  std::vector<Trace> layers;
  layers.push_back(run_forward(random_inputs(c, 3)));
  EXPECT_EQ(sparsity_stats(layers).mean, 0.0);
  EXPECT_THROW(sparsity_stats(std::span<const Trace>{}), TraceError);
}

TEST(SparsityStats, SingletonRoutingMatchesCount) {
  AttnConfig c = sparsity_config();
  PipelineInputs in = random_inputs(c, 4);
  in.mode = Mode::kTopk;
  in.topk = 1;
  std::vector<Trace> layers;
  layers.push_back(run_forward(in));
  const auto table = sparsity_stats(layers);
  std::size_t attended = 0;
  std::size_t visible = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    const TokenRange w = diagonal_window(i, c);
    attended += w.size() + (routable_chunks(i, c) > 0 ? c.chunk : 0);
    visible += i + 1;
  }
  EXPECT_NEAR(table.mean, 1.0 - static_cast<double>(attended) / visible, 1e-15);
}

}  // namespace
}  // namespace dash
