// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "dash/attend.hpp"
#include "dash/errors.hpp"
#include "dash/format.hpp"
#include "dash/parallel.hpp"
#include "dash/route.hpp"

namespace dash::bench {

BlockMask random_mask(const AttnConfig& config, double sparsity, Rng& rng,
                      std::size_t* routable_cells) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw ConfigError("sparsity must lie in [0, 1)");
  }
  struct Cell {
    std::uint32_t row;
    std::uint32_t chunk;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < config.n; ++i) {
    const std::size_t v = routable_chunks(i, config);
    for (std::size_t r = 0; r < config.h_kv; ++r) {
      for (std::size_t c = 0; c < v; ++c) {
        cells.push_back({static_cast<std::uint32_t>(i * config.h_kv + r),
                         static_cast<std::uint32_t>(c)});
      }
    }
  }
  const auto active = static_cast<std::size_t>(
      std::llround((1.0 - sparsity) * static_cast<double>(cells.size())));
  // Partial Fisher-Yates: the first `active` slots are a uniform draw.
  for (std::size_t i = 0; i < active; ++i) {
    const std::size_t j = i + rng.uniform_index(cells.size() - i);
    std::swap(cells[i], cells[j]);
  }
  BlockMask mask(config.n * config.h_kv, config.num_chunks());
  for (std::size_t i = 0; i < active; ++i) mask.set(cells[i].row, cells[i].chunk);
  if (routable_cells) *routable_cells = cells.size();
  return mask;
}

namespace {

// Median wall time of `repeats` runs after `warmups` unmeasured ones.
template <typename Fn>
double median_ms(Fn&& fn, int warmups, int repeats) {
  for (int i = 0; i < warmups; ++i) fn();
  std::vector<double> ms;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t m = ms.size() / 2;
  return ms.size() % 2 == 1 ? ms[m] : 0.5 * (ms[m - 1] + ms[m]);
}

// Softmax over the active and diagonal tokens of every row in f64, written
// independently of the streaming kernel.
DenseMatrix masked_reference(const DenseMatrix& q, const DenseMatrix& k,
                             const DenseMatrix& v, const BlockMask& mask,
                             const AttnConfig& c) {
  const std::size_t d = c.head_dim;
  const std::size_t g = c.group_size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  DenseMatrix out(c.n, c.h_q * d);
  parallel_for(c.n, [&](std::size_t i) {
    std::vector<std::size_t> tokens;
    std::vector<double> p;
    for (std::size_t r = 0; r < c.h_kv; ++r) {
      tokens.clear();
      mask.for_each_active(i * c.h_kv + r, [&](std::size_t ch) {
        for (std::size_t t = ch * c.chunk; t < (ch + 1) * c.chunk; ++t) {
          tokens.push_back(t);
        }
      });
      const TokenRange diag = diagonal_window(i, c);
      for (std::size_t t = diag.begin; t < diag.end; ++t) tokens.push_back(t);
      p.resize(tokens.size());
      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        auto qi = q.slice(i, h * d, d);
        double m = -INFINITY;
        for (std::size_t j = 0; j < tokens.size(); ++j) {
          p[j] = dot(qi, k.slice(tokens[j], r * d, d)) * scale;
          m = std::max(m, p[j]);
        }
        double z = 0.0;
        for (double& x : p) {
          x = std::exp(x - m);
          z += x;
        }
        auto o = out.slice(i, h * d, d);
        for (std::size_t j = 0; j < tokens.size(); ++j) {
          auto vt = v.slice(tokens[j], r * d, d);
          for (std::size_t e = 0; e < d; ++e) o[e] += p[j] / z * vt[e];
        }
      }
    }
  });
  return out;
}

template <typename T>
void time_pair(const AttnConfig& c, const DenseMatrix& q, const DenseMatrix& k,
               const DenseMatrix& v, const BlockMask& mask,
               const DenseMatrix& bias, const BenchOptions& o, BenchRow& row,
               double* dense_ms, DenseMatrix* sparse_out, AttendStats* stats) {
  const auto qt = cast<T>(q);
  const auto kt = cast<T>(k);
  const auto vt = cast<T>(v);
  if (*dense_ms < 0.0) {
    *dense_ms = median_ms([&] { (void)dense_attention(qt, kt, vt, c); },
                          o.warmups, o.repeats);
  }
  row.time_dense_ms = *dense_ms;
  row.time_sparse_ms = median_ms(
      [&] { (void)sparse_attention(qt, kt, vt, mask, bias, c); }, o.warmups,
      o.repeats);
  *sparse_out = cast<double>(sparse_attention(qt, kt, vt, mask, bias, c, stats));
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchOptions& o) {
  if (o.ns.empty() || o.sparsity.empty()) {
    throw ConfigError("bench needs at least one n and one sparsity value");
  }
  if (o.repeats < 1 || o.warmups < 0) {
    throw ConfigError("bench needs repeats >= 1 and warmups >= 0");
  }
  for (double s : o.sparsity) {
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity must lie in [0, 1)");
  }
  std::vector<BenchRow> rows;
  for (std::size_t n : o.ns) {
    AttnConfig c = o.config;
    c.n = n;
    c.validate();
    Rng rng(o.seed);
    const std::size_t d = c.head_dim;
    const DenseMatrix q = random_normal(n, c.h_q * d, rng);
    const DenseMatrix k = random_normal(n, c.h_kv * d, rng);
    const DenseMatrix v = random_normal(n, c.h_kv * d, rng);
    const DenseMatrix bias(n * c.h_kv, c.num_chunks());
    double dense_ms = -1.0;
    for (std::size_t si = 0; si < o.sparsity.size(); ++si) {
      Rng mask_rng = Rng(o.seed).fork(1000 + si);
      std::size_t cells = 0;
      const BlockMask mask = random_mask(c, o.sparsity[si], mask_rng, &cells);
      BenchRow row;
      row.n = n;
      row.chunk = c.chunk;
      row.alpha = c.alpha;
      row.gamma = c.gamma;
      row.sigma = c.sigma;
      row.mode = "dash";
      row.target_sparsity = o.sparsity[si];
      row.routable_blocks = cells;
      const std::size_t active = mask.total_popcount();
      row.measured_sparsity =
          cells == 0 ? 0.0
                     : 1.0 - static_cast<double>(active) /
                                 static_cast<double>(cells);
      DenseMatrix sparse_out;
      AttendStats stats;
      if (o.single_precision) {
        time_pair<float>(c, q, k, v, mask, bias, o, row, &dense_ms, &sparse_out,
                         &stats);
      } else {
        time_pair<double>(c, q, k, v, mask, bias, o, row, &dense_ms,
                          &sparse_out, &stats);
      }
      row.blocks_visited = stats.blocks_visited();
      row.max_abs_err =
          max_abs_diff(sparse_out, masked_reference(q, k, v, mask, c));
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "n,B,alpha,gamma,sigma,mode,target_sparsity,measured_sparsity,"
        "blocks_visited,time_dense_ms,time_sparse_ms,max_abs_err\n";
  for (const auto& r : rows) {
    os << r.n << ',' << r.chunk << ',' << format_double(r.alpha) << ','
       << format_double(r.gamma) << ',' << format_double(r.sigma) << ','
       << r.mode << ',' << format_double(r.target_sparsity) << ','
       << format_double(r.measured_sparsity) << ',' << r.blocks_visited << ','
       << format_double(r.time_dense_ms) << ','
       << format_double(r.time_sparse_ms) << ','
       << format_double(r.max_abs_err) << '\n';
  }
}

}  // namespace dash::bench
