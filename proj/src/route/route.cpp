// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/route.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dash/errors.hpp"
#include "dash/parallel.hpp"
#include "dash/prior.hpp"

namespace dash {

TokenRange diagonal_window(std::size_t query, const AttnConfig& config) {
  const std::size_t own = query / config.chunk;
  std::size_t first = own;
  if (config.include_prev_chunk && own >= 1) first = own - 1;
  return {first * config.chunk, query + 1};
}

std::size_t routable_chunks(std::size_t query, const AttnConfig& config) {
  return diagonal_window(query, config).begin / config.chunk;
}

std::vector<double> chunk_logits(std::span<const double> q,
                                 const ChunkSummaries& summaries,
                                 std::size_t kv_head, std::size_t visible,
                                 double gamma) {
  if (q.size() != summaries.head_dim()) {
    throw ShapeError("chunk_logits: query length != head_dim");
  }
  if (visible > summaries.num_chunks()) {
    throw ShapeError("chunk_logits: more visible chunks than summaries");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size()));
  std::vector<double> z(visible);
  for (std::size_t c = 0; c < visible; ++c) {
    z[c] = gamma * (dot(q, summaries.summary(c, kv_head)) * scale);
  }
  return z;
}

std::vector<double> chunk_logits_folded(std::span<const double> q,
                                        const ChunkSummaries& summaries,
                                        std::size_t kv_head,
                                        std::size_t visible, double gamma,
                                        double alpha) {
  const double scale =
      gamma * (alpha - 1.0) / std::sqrt(static_cast<double>(q.size()));
  std::vector<double> u(visible);
  for (std::size_t c = 0; c < visible; ++c) {
    u[c] = scale * dot(q, summaries.summary(c, kv_head));
  }
  return u;
}

std::optional<EntmaxResult> route_entmax(std::span<const double> logits,
                                         double alpha) {
  if (logits.empty()) return std::nullopt;
  return entmax(logits, alpha);
}

MergedWeights gqa_merge(std::span<const std::vector<double>> heads) {
  if (heads.empty()) throw ShapeError("gqa_merge: no heads");
  const std::size_t len = heads.front().size();
  MergedWeights m;
  m.w.assign(len, 0.0);
  for (const auto& p : heads) {
    if (p.size() != len) throw ShapeError("gqa_merge: inconsistent lengths");
    for (std::size_t c = 0; c < len; ++c) m.w[c] += p[c];
  }
  const double g = static_cast<double>(heads.size());
  for (std::size_t c = 0; c < len; ++c) {
    m.w[c] /= g;
    if (m.w[c] > 0.0) m.support.push_back(c);
  }
  return m;
}

MergedWeights gqa_merge(std::span<const EntmaxResult> heads) {
  std::vector<std::vector<double>> ps;
  ps.reserve(heads.size());
  for (const auto& h : heads) ps.push_back(h.p);
  return gqa_merge(ps);
}

std::vector<std::size_t> RouteResult::routed_set() const {
  std::vector<std::size_t> out;
  out.reserve(routed_token_count());
  for (std::size_t c : support) {
    for (std::size_t t = c * chunk; t < (c + 1) * chunk; ++t) out.push_back(t);
  }
  return out;
}

std::vector<std::size_t> RouteResult::diag_set() const {
  std::vector<std::size_t> out;
  for (std::size_t t = diag.begin; t < diag.end; ++t) out.push_back(t);
  return out;
}

double RouteResult::token_bias(std::size_t t) const {
  const std::size_t c = t / chunk;
  if (c >= visible_chunks) return 0.0;
  return chunk_bias[c];
}

std::vector<double> RouteResult::prior_row(double sigma) const {
  std::vector<double> g(query + 1, 0.0);
  const double dsize = static_cast<double>(diag.size());
  auto split = prior_g(w, sigma, chunk, diag.size());
  if (!split) {
    for (std::size_t t = diag.begin; t < diag.end; ++t) g[t] = 1.0 / dsize;
    return g;
  }
  std::copy(split->routed.begin(), split->routed.end(), g.begin());
  for (std::size_t t = diag.begin; t < diag.end; ++t) g[t] = split->diag;
  return g;
}

void finalize_route_table(RouteTable& table) {
  const auto& cfg = table.config;
  const std::size_t rows = cfg.n * cfg.h_kv;
  table.mask = BlockMask(rows, cfg.num_chunks());
  table.bias = DenseMatrix(rows, cfg.num_chunks());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& rr = table.rows[r];
    table.mask.assign_row(r, rr.support);
    for (std::size_t c : rr.support) table.bias(r, c) = rr.chunk_bias[c];
  }
}

namespace {

RouteResult make_row(std::size_t query, std::size_t kv_head,
                     const AttnConfig& config) {
  RouteResult rr;
  rr.query = query;
  rr.kv_head = kv_head;
  rr.chunk = config.chunk;
  rr.diag = diagonal_window(query, config);
  rr.visible_chunks = rr.diag.begin / config.chunk;
  rr.lambda = std::numeric_limits<double>::quiet_NaN();
  return rr;
}

void finish_row(RouteResult& rr, MergedWeights merged, double sigma) {
  rr.w = std::move(merged.w);
  rr.support = std::move(merged.support);
  rr.chunk_bias = *routing_bias(rr.w, sigma);
  rr.lambda = prior_g(rr.w, sigma, rr.chunk, rr.diag.size())->lambda;
}

}  // namespace

RouteTable route_all(const DenseMatrix& q, const ChunkSummaries& summaries,
                     const AttnConfig& config) {
  config.validate();
  if (q.rows() != config.n || q.cols() != config.h_q * config.head_dim) {
    throw ShapeError("route_all: Q must be n x (h_q * head_dim)");
  }
  if (summaries.num_chunks() < config.num_chunks() ||
      summaries.h_kv() != config.h_kv) {
    throw ShapeError("route_all: summaries do not cover the sequence");
  }
  RouteTable table;
  table.config = config;
  table.rows.resize(config.n * config.h_kv);
  table.heads.resize(config.n * config.h_q);
  const std::size_t g = config.group_size();
  const std::size_t d = config.head_dim;

  parallel_for(config.n, [&](std::size_t i) {
    for (std::size_t r = 0; r < config.h_kv; ++r) {
      RouteResult rr = make_row(i, r, config);
      std::vector<EntmaxResult> group;
      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        HeadRoute& hr = table.heads[i * config.h_q + h];
        hr.logits = chunk_logits(q.slice(i, h * d, d), summaries, r,
                                 rr.visible_chunks, config.gamma);
        hr.result = route_entmax(hr.logits, config.alpha);
        if (hr.result) group.push_back(*hr.result);
      }
      if (!group.empty()) finish_row(rr, gqa_merge(group), config.sigma);
      table.rows[i * config.h_kv + r] = std::move(rr);
    }
  });
  finalize_route_table(table);
  return table;
}

RouteTable full_route(const AttnConfig& config) {
  config.validate();
  RouteTable table;
  table.config = config;
  table.rows.resize(config.n * config.h_kv);
  table.heads.resize(config.n * config.h_q);
  for (std::size_t i = 0; i < config.n; ++i) {
    for (std::size_t r = 0; r < config.h_kv; ++r) {
      RouteResult rr = make_row(i, r, config);
      if (rr.visible_chunks > 0) {
        MergedWeights m;
        m.w.assign(rr.visible_chunks,
                   1.0 / static_cast<double>(rr.visible_chunks));
        for (std::size_t c = 0; c < rr.visible_chunks; ++c) {
          m.support.push_back(c);
        }
        finish_row(rr, std::move(m), config.sigma);
      }
      table.rows[i * config.h_kv + r] = std::move(rr);
    }
  }
  finalize_route_table(table);
  return table;
}

}  // namespace dash
