// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "dash/block_mask.hpp"
#include "dash/config.hpp"
#include "dash/matrix.hpp"

namespace dash {

// Streaming softmax-weighted sum: running max m, normalizer ell and an
// unnormalized output accumulator. Blocks may arrive in any order.
template <typename T>
class OnlineAccumulator {
 public:
  explicit OnlineAccumulator(std::size_t dim) : acc_(dim, T(0)) {}

  // Folds in one block: scores[t] weights value row values[t].
  template <typename RowFn>
  void push_block(std::span<const T> scores, RowFn&& value_row) {
    if (scores.empty()) return;
    T block_max = scores[0];
    for (T s : scores) block_max = std::max(block_max, s);
    const T m_new = std::max(m_, block_max);
    const T rescale = std::exp(m_ - m_new);
    ell_ *= rescale;
    for (T& a : acc_) a *= rescale;
    for (std::size_t t = 0; t < scores.size(); ++t) {
      const T w = std::exp(scores[t] - m_new);
      ell_ += w;
      std::span<const T> v = value_row(t);
      for (std::size_t x = 0; x < acc_.size(); ++x) acc_[x] += w * v[x];
    }
    m_ = m_new;
  }

  void push(T score, std::span<const T> value) {
    const T s[1] = {score};
    push_block(std::span<const T>(s, 1), [&](std::size_t) { return value; });
  }

  T max() const { return m_; }
  T normalizer() const { return ell_; }
  // acc / ell into out.
  void finish(std::span<T> out) const {
    for (std::size_t x = 0; x < acc_.size(); ++x) out[x] = acc_[x] / ell_;
  }
  std::vector<T> result() const {
    std::vector<T> out(acc_.size());
    finish(out);
    return out;
  }

 private:
  T m_ = -std::numeric_limits<T>::infinity();
  T ell_ = T(0);
  std::vector<T> acc_;
};

// Work and coverage counters of a Stage-2 pass, summed over (query, kv head)
// rows. A "block" is one chunk of K/V rows loaded for a whole query group.
struct AttendStats {
  std::size_t routed_blocks = 0;    // sum of mask popcounts
  std::size_t diag_blocks = 0;      // chunks touched by the diagonal windows
  std::size_t routable_blocks = 0;  // sum of routable chunks per row
  std::size_t attended_tokens = 0;  // sum |R_i| + |D_i|
  std::size_t causal_tokens = 0;    // sum (i + 1)

  std::size_t blocks_visited() const { return routed_blocks + diag_blocks; }
  // 1 - attended / causally visible tokens.
  double token_sparsity() const;
  // 1 - routed / routable chunks (0 when nothing is routable).
  double chunk_sparsity() const;
};

// Exact softmax attention, one query row at a time (no n x n buffer).
// Q: n x (h_q*d), K/V: n x (h_kv*d); query head h reads kv head h/g_q.
template <typename T>
BasicMatrix<T> dense_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                               const BasicMatrix<T>& v,
                               const AttnConfig& config, bool causal = true);

// Block-sparse attention with one online-softmax pass per (query, kv head)
// over the active routed chunks (ascending) followed by the diagonal window,
// causally masked. Logits of routed chunk c get bias(row, c) added. K/V rows
// outside active blocks are never read.
template <typename T>
BasicMatrix<T> sparse_attention(const BasicMatrix<T>& q,
                                const BasicMatrix<T>& k,
                                const BasicMatrix<T>& v, const BlockMask& mask,
                                const DenseMatrix& bias,
                                const AttnConfig& config,
                                AttendStats* stats = nullptr);

// Direct (non-streaming) prior-weighted attention for one query row:
//   p_j = g_j exp(z_j) / sum_t g_t exp(z_t),  o = sum_j p_j v_j
// with v_j = values.slice(j, offset, dim). Throws DegenerateRowError when g
// has no positive entry.
std::vector<double> prior_attention_reference(std::span<const double> z,
                                              std::span<const double> g,
                                              const DenseMatrix& values,
                                              std::size_t offset,
                                              std::size_t dim);

// Indices of the k largest logits, ascending; ties go to the lower index.
// Returns every index when k >= logits.size().
std::vector<std::size_t> topk_route(std::span<const double> logits,
                                    std::size_t k);

}  // namespace dash
