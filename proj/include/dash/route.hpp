// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dash/block_mask.hpp"
#include "dash/config.hpp"
#include "dash/entmax.hpp"
#include "dash/matrix.hpp"
#include "dash/summarize.hpp"

namespace dash {

// Diagonal window of query i: its own (possibly partial) chunk up to i, plus
// the preceding full chunk when config.include_prev_chunk is set. Always a
// contiguous range ending at i + 1.
TokenRange diagonal_window(std::size_t query, const AttnConfig& config);

// Full chunks strictly before the diagonal window; these are the only chunks
// Stage 1 can route to.
std::size_t routable_chunks(std::size_t query, const AttnConfig& config);

// gamma * <q, k_bar_c> / sqrt(d_h) for c in [0, visible).
std::vector<double> chunk_logits(std::span<const double> q,
                                 const ChunkSummaries& summaries,
                                 std::size_t kv_head, std::size_t visible,
                                 double gamma);

// gamma * (alpha - 1) * <q, k_bar_c> / sqrt(d_h): the router's folded
// pre-scaled logits, consumable by entmax_prescaled.
std::vector<double> chunk_logits_folded(std::span<const double> q,
                                        const ChunkSummaries& summaries,
                                        std::size_t kv_head,
                                        std::size_t visible, double gamma,
                                        double alpha);

// Entmax over chunk logits. nullopt when there is no routable chunk: the
// query runs diagonal-only.
std::optional<EntmaxResult> route_entmax(std::span<const double> logits,
                                         double alpha);

struct MergedWeights {
  std::vector<double> w;               // mean of the group's head weights
  std::vector<std::size_t> support;    // union of head supports, ascending
};

// Averages the group's per-head routing distributions.
MergedWeights gqa_merge(std::span<const EntmaxResult> heads);
MergedWeights gqa_merge(std::span<const std::vector<double>> heads);

// Routing outcome for one (query, kv head) row.
struct RouteResult {
  std::size_t query = 0;
  std::size_t kv_head = 0;
  std::size_t chunk = 1;               // B
  std::size_t visible_chunks = 0;      // routable chunks
  TokenRange diag;                     // D_i
  std::vector<double> w;               // merged weights, length visible_chunks
  std::vector<std::size_t> support;    // routed chunks, ascending
  std::vector<double> chunk_bias;      // length visible_chunks, 0 off support
  double lambda = 0.0;                 // NaN when diagonal-only

  bool diagonal_only() const { return support.empty(); }
  std::size_t routed_token_count() const { return support.size() * chunk; }
  std::vector<std::size_t> routed_set() const;
  std::vector<std::size_t> diag_set() const;
  // Additive logit bias for token t (0 on D_i and on unrouted tokens).
  double token_bias(std::size_t t) const;
  // The prior g over positions [0, query], zero off R_i and D_i; uniform over
  // D_i for a diagonal-only query.
  std::vector<double> prior_row(double sigma) const;
};

// Stage-1 record for one (query, query head).
struct HeadRoute {
  std::vector<double> logits;          // gamma-scaled chunk logits
  std::optional<EntmaxResult> result;  // nullopt when diagonal-only
};

// Routing for a whole sequence. Row (i, r) is rows[i * h_kv + r]; head record
// (i, h) is heads[i * h_q + h]. bias holds the per-chunk bias of each row in
// a (n * h_kv) x T_c matrix, zero on inactive chunks.
struct RouteTable {
  AttnConfig config;
  BlockMask mask;
  DenseMatrix bias;
  std::vector<RouteResult> rows;
  std::vector<HeadRoute> heads;

  const RouteResult& at(std::size_t query, std::size_t kv_head) const {
    return rows[query * config.h_kv + kv_head];
  }
  const HeadRoute& head(std::size_t query, std::size_t h) const {
    return heads[query * config.h_q + h];
  }
};

// Stage 1 for every query and kv head.
RouteTable route_all(const DenseMatrix& q, const ChunkSummaries& summaries,
                     const AttnConfig& config);

// Mask with every routable chunk active and zero bias: reduces Stage 2 to
// plain causal attention.
RouteTable full_route(const AttnConfig& config);

// Fills mask and bias of `table` from rows; shared by all route builders.
void finalize_route_table(RouteTable& table);

}  // namespace dash
