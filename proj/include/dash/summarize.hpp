// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dash/config.hpp"
#include "dash/matrix.hpp"

namespace dash {

// Half-open token range [begin, end).
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end == begin; }
  bool contains(std::size_t t) const { return t >= begin && t < end; }
  bool operator==(const TokenRange&) const = default;
};

struct ChunkPartition {
  std::vector<TokenRange> chunks;  // floor(n/B) full chunks
  TokenRange residual;             // trailing n mod B tokens, may be empty
};

ChunkPartition chunk_partition(std::size_t n, std::size_t chunk);

// Learned-query summary of one chunk for one kv head:
//   k_bar = sum_t softmax_t(<q_bar, k_t> / sqrt(d_h)) k_t
// computed in a single online-softmax pass; keys double as values.
std::vector<double> summarize_chunk(const DenseMatrix& keys,
                                    std::span<const double> q_bar);

// Same, reading rows [range) and columns [offset, offset + d) of a packed key
// matrix without copying.
std::vector<double> summarize_chunk(const DenseMatrix& keys, TokenRange range,
                                    std::size_t offset,
                                    std::span<const double> q_bar);

// Append-only per-kv-head cache of chunk summaries. Row c of head(r) is the
// summary of chunk c; it depends only on keys in that chunk, so it never
// changes once written.
class ChunkSummaries {
 public:
  ChunkSummaries() = default;
  ChunkSummaries(std::size_t h_kv, std::size_t head_dim, DenseMatrix q_bar);

  std::size_t num_chunks() const { return num_chunks_; }
  std::size_t h_kv() const { return heads_.size(); }
  std::size_t head_dim() const { return head_dim_; }
  const DenseMatrix& q_bar() const { return q_bar_; }

  std::span<const double> summary(std::size_t chunk, std::size_t kv_head) const;
  const std::vector<double>& head(std::size_t kv_head) const {
    return heads_[kv_head];
  }

  // Summarizes every chunk completed by `keys` (the whole key sequence seen
  // so far, n_total x h_kv*d_h) that is not yet cached.
  void append(const DenseMatrix& keys, std::size_t chunk);

  // T_c x (h_kv * d_h) matrix, chunk-major, for persistence.
  DenseMatrix to_matrix() const;

 private:
  std::size_t head_dim_ = 0;
  std::size_t num_chunks_ = 0;
  DenseMatrix q_bar_;
  std::vector<std::vector<double>> heads_;  // per kv head: T_c * d_h, row-major
};

ChunkSummaries summarize_all(const DenseMatrix& keys, const DenseMatrix& q_bar,
                             const AttnConfig& config);

}  // namespace dash
