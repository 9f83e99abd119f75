// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dash/errors.hpp"

namespace dash {

void AttnConfig::validate() const {
  if (n < 1) throw ConfigError("n must be >= 1");
  if (chunk < 1) throw ConfigError("chunk size B must be >= 1");
  if (head_dim < 1) throw ConfigError("head_dim must be >= 1");
  if (h_q < 1 || h_kv < 1) throw ConfigError("head counts must be >= 1");
  if (h_q % h_kv != 0) throw ConfigError("h_q must be divisible by h_kv");
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha must be > 1");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ConfigError("gamma must be > 0");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("sigma must be > 0");
  }
}

ChunkPartition chunk_partition(std::size_t n, std::size_t chunk) {
  if (chunk == 0) throw ConfigError("chunk_partition: B must be >= 1");
  ChunkPartition p;
  const std::size_t full = n / chunk;
  p.chunks.reserve(full);
  for (std::size_t c = 0; c < full; ++c) {
    p.chunks.push_back({c * chunk, (c + 1) * chunk});
  }
  p.residual = {full * chunk, n};
  return p;
}

std::vector<double> summarize_chunk(const DenseMatrix& keys, TokenRange range,
                                    std::size_t offset,
                                    std::span<const double> q_bar) {
  const std::size_t d = q_bar.size();
  if (range.empty() || range.end > keys.rows() || offset + d > keys.cols()) {
    throw ShapeError("summarize_chunk: chunk slice outside key matrix");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  double m = -std::numeric_limits<double>::infinity();
  double ell = 0.0;
  std::vector<double> acc(d, 0.0);
  for (std::size_t t = range.begin; t < range.end; ++t) {
    auto k = keys.slice(t, offset, d);
    const double s = dot(q_bar, k) * scale;
    const double m_new = std::max(m, s);
    const double rescale = std::exp(m - m_new);
    const double w = std::exp(s - m_new);
    ell = ell * rescale + w;
    for (std::size_t x = 0; x < d; ++x) acc[x] = acc[x] * rescale + w * k[x];
    m = m_new;
  }
  for (double& v : acc) v /= ell;
  return acc;
}

std::vector<double> summarize_chunk(const DenseMatrix& keys,
                                    std::span<const double> q_bar) {
  if (keys.cols() != q_bar.size()) {
    throw ShapeError("summarize_chunk: key width " +
                     std::to_string(keys.cols()) + " != q_bar length " +
                     std::to_string(q_bar.size()));
  }
  return summarize_chunk(keys, TokenRange{0, keys.rows()}, 0, q_bar);
}

ChunkSummaries::ChunkSummaries(std::size_t h_kv, std::size_t head_dim,
                               DenseMatrix q_bar)
    : head_dim_(head_dim), q_bar_(std::move(q_bar)), heads_(h_kv) {
  if (q_bar_.rows() != h_kv || q_bar_.cols() != head_dim) {
    throw ShapeError("ChunkSummaries: q_bar must be h_kv x head_dim");
  }
}

std::span<const double> ChunkSummaries::summary(std::size_t chunk,
                                                std::size_t kv_head) const {
  if (chunk >= num_chunks_ || kv_head >= heads_.size()) {
    throw RangeError("ChunkSummaries: (chunk " + std::to_string(chunk) +
                     ", head " + std::to_string(kv_head) + ") not cached");
  }
  return {heads_[kv_head].data() + chunk * head_dim_, head_dim_};
}

void ChunkSummaries::append(const DenseMatrix& keys, std::size_t chunk) {
  if (keys.cols() != heads_.size() * head_dim_) {
    throw ShapeError("ChunkSummaries::append: key width mismatch");
  }
  const std::size_t complete = keys.rows() / chunk;
  for (std::size_t c = num_chunks_; c < complete; ++c) {
    const TokenRange range{c * chunk, (c + 1) * chunk};
    for (std::size_t r = 0; r < heads_.size(); ++r) {
      auto s = summarize_chunk(keys, range, r * head_dim_, q_bar_.row(r));
      heads_[r].insert(heads_[r].end(), s.begin(), s.end());
    }
  }
  num_chunks_ = std::max(num_chunks_, complete);
}

DenseMatrix ChunkSummaries::to_matrix() const {
  DenseMatrix m(num_chunks_, heads_.size() * head_dim_);
  for (std::size_t c = 0; c < num_chunks_; ++c) {
    for (std::size_t r = 0; r < heads_.size(); ++r) {
      auto s = summary(c, r);
      std::copy(s.begin(), s.end(), m.slice(c, r * head_dim_, head_dim_).begin());
    }
  }
  return m;
}

ChunkSummaries summarize_all(const DenseMatrix& keys, const DenseMatrix& q_bar,
                             const AttnConfig& config) {
  config.validate();
  if (keys.rows() != config.n || keys.cols() != config.h_kv * config.head_dim) {
    throw ShapeError("summarize_all: keys must be n x (h_kv * head_dim)");
  }
  ChunkSummaries s(config.h_kv, config.head_dim, q_bar);
  s.append(keys, config.chunk);
  return s;
}

}  // namespace dash
