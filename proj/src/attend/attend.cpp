// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/attend.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <string>

#include "dash/errors.hpp"
#include "dash/parallel.hpp"
#include "dash/route.hpp"
#include "dash/softmax.hpp"

namespace dash {

double AttendStats::token_sparsity() const {
  if (causal_tokens == 0) return 0.0;
  return 1.0 - static_cast<double>(attended_tokens) /
                   static_cast<double>(causal_tokens);
}

double AttendStats::chunk_sparsity() const {
  if (routable_blocks == 0) return 0.0;
  return 1.0 - static_cast<double>(routed_blocks) /
                   static_cast<double>(routable_blocks);
}

namespace {

template <typename T>
void check_qkv(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
               const BasicMatrix<T>& v, const AttnConfig& config) {
  config.validate();
  const std::size_t d = config.head_dim;
  if (q.rows() != config.n || q.cols() != config.h_q * d) {
    throw ShapeError("attention: Q must be n x (h_q * head_dim)");
  }
  if (k.rows() != config.n || k.cols() != config.h_kv * d ||
      v.rows() != config.n || v.cols() != config.h_kv * d) {
    throw ShapeError("attention: K and V must be n x (h_kv * head_dim)");
  }
}

}  // namespace

template <typename T>
BasicMatrix<T> dense_attention(const BasicMatrix<T>& q, const BasicMatrix<T>& k,
                               const BasicMatrix<T>& v,
                               const AttnConfig& config, bool causal) {
  check_qkv(q, k, v, config);
  const std::size_t d = config.head_dim;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  BasicMatrix<T> out(config.n, config.h_q * d);
  parallel_for(config.n, [&](std::size_t i) {
    const std::size_t len = causal ? i + 1 : config.n;
    std::vector<T> p(len);
    for (std::size_t h = 0; h < config.h_q; ++h) {
      const std::size_t kv = config.kv_head_of(h) * d;
      auto qi = q.slice(i, h * d, d);
      for (std::size_t j = 0; j < len; ++j) {
        p[j] = dot(qi, k.slice(j, kv, d)) * scale;
      }
      softmax_inplace(std::span<T>(p));
      auto o = out.slice(i, h * d, d);
      for (std::size_t j = 0; j < len; ++j) {
        auto vj = v.slice(j, kv, d);
        for (std::size_t x = 0; x < d; ++x) o[x] += p[j] * vj[x];
      }
    }
  });
  return out;
}

template <typename T>
BasicMatrix<T> sparse_attention(const BasicMatrix<T>& q,
                                const BasicMatrix<T>& k,
                                const BasicMatrix<T>& v, const BlockMask& mask,
                                const DenseMatrix& bias,
                                const AttnConfig& config, AttendStats* stats) {
  check_qkv(q, k, v, config);
  const std::size_t rows = config.n * config.h_kv;
  if (mask.num_chunks() != config.num_chunks() || mask.rows() != rows) {
    throw ShapeError("sparse_attention: mask is " + std::to_string(mask.rows()) +
                     " rows x " + std::to_string(mask.num_chunks()) +
                     " chunks, expected " + std::to_string(rows) + " x " +
                     std::to_string(config.num_chunks()));
  }
  if (bias.rows() != rows || bias.cols() != config.num_chunks()) {
    throw ShapeError("sparse_attention: bias must be (n*h_kv) x T_c");
  }
  const std::size_t d = config.head_dim;
  const std::size_t B = config.chunk;
  const std::size_t g = config.group_size();
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  BasicMatrix<T> out(config.n, config.h_q * d);

  std::mutex stats_mu;
  parallel_for(config.n, [&](std::size_t i) {
    AttendStats local;
    const TokenRange diag = diagonal_window(i, config);
    const std::size_t routable = diag.begin / B;
    std::vector<T> scores(B);
    for (std::size_t r = 0; r < config.h_kv; ++r) {
      const std::size_t row = i * config.h_kv + r;
      const std::size_t kv = r * d;
      std::vector<OnlineAccumulator<T>> accs(g, OnlineAccumulator<T>(d));
      auto value_row = [&](std::size_t first) {
        return [&, first](std::size_t t) { return v.slice(first + t, kv, d); };
      };
      auto visit = [&](std::size_t first, std::size_t last, T block_bias) {
        const std::size_t len = last - first;
        for (std::size_t hh = 0; hh < g; ++hh) {
          auto qi = q.slice(i, (r * g + hh) * d, d);
          for (std::size_t t = 0; t < len; ++t) {
            scores[t] = dot(qi, k.slice(first + t, kv, d)) * scale + block_bias;
          }
          accs[hh].push_block(std::span<const T>(scores.data(), len),
                              value_row(first));
        }
      };

      std::size_t routed = 0;
      mask.for_each_active(row, [&](std::size_t c) {
        if (c >= routable) {
          throw ShapeError("sparse_attention: active chunk " +
                           std::to_string(c) + " overlaps the diagonal of query " +
                           std::to_string(i));
        }
        visit(c * B, (c + 1) * B, static_cast<T>(bias(row, c)));
        ++routed;
      });
      std::size_t diag_blocks = 0;
      for (std::size_t first = diag.begin; first < diag.end; first += B) {
        visit(first, std::min(first + B, diag.end), T(0));
        ++diag_blocks;
      }
      for (std::size_t hh = 0; hh < g; ++hh) {
        accs[hh].finish(out.slice(i, (r * g + hh) * d, d));
      }
      local.routed_blocks += routed;
      local.diag_blocks += diag_blocks;
      local.routable_blocks += routable;
      local.attended_tokens += routed * B + diag.size();
      local.causal_tokens += i + 1;
    }
    if (stats) {
      std::lock_guard lock(stats_mu);
      stats->routed_blocks += local.routed_blocks;
      stats->diag_blocks += local.diag_blocks;
      stats->routable_blocks += local.routable_blocks;
      stats->attended_tokens += local.attended_tokens;
      stats->causal_tokens += local.causal_tokens;
    }
  });
  return out;
}

std::vector<double> prior_attention_reference(std::span<const double> z,
                                              std::span<const double> g,
                                              const DenseMatrix& values,
                                              std::size_t offset,
                                              std::size_t dim) {
  if (z.size() != g.size() || values.rows() < z.size() ||
      offset + dim > values.cols()) {
    throw ShapeError("prior_attention_reference: inconsistent shapes");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (g[j] > 0.0) m = std::max(m, z[j]);
  }
  if (m == -std::numeric_limits<double>::infinity()) {
    throw DegenerateRowError("prior_attention_reference: prior is all zero");
  }
  std::vector<double> p(z.size(), 0.0);
  double denom = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (g[j] > 0.0) {
      p[j] = g[j] * std::exp(z[j] - m);
      denom += p[j];
    }
  }
  std::vector<double> o(dim, 0.0);
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (p[j] == 0.0) continue;
    auto vj = values.slice(j, offset, dim);
    for (std::size_t x = 0; x < dim; ++x) o[x] += (p[j] / denom) * vj[x];
  }
  return o;
}

std::vector<std::size_t> topk_route(std::span<const double> logits,
                                    std::size_t k) {
  std::vector<std::size_t> idx(logits.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k >= idx.size()) return idx;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return logits[a] > logits[b];
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template BasicMatrix<double> dense_attention(const BasicMatrix<double>&,
                                             const BasicMatrix<double>&,
                                             const BasicMatrix<double>&,
                                             const AttnConfig&, bool);
template BasicMatrix<float> dense_attention(const BasicMatrix<float>&,
                                            const BasicMatrix<float>&,
                                            const BasicMatrix<float>&,
                                            const AttnConfig&, bool);
template BasicMatrix<double> sparse_attention(
    const BasicMatrix<double>&, const BasicMatrix<double>&,
    const BasicMatrix<double>&, const BlockMask&, const DenseMatrix&,
    const AttnConfig&, AttendStats*);
template BasicMatrix<float> sparse_attention(const BasicMatrix<float>&,
                                             const BasicMatrix<float>&,
                                             const BasicMatrix<float>&,
                                             const BlockMask&,
                                             const DenseMatrix&,
                                             const AttnConfig&, AttendStats*);

}  // namespace dash
