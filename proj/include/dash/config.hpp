// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace dash {

// Hyperparameters of the three-stage pipeline.
//
// Packed layouts used throughout:
//   Q      n x (h_q  * head_dim), query head h at columns [h*head_dim, ...)
//   K, V   n x (h_kv * head_dim)
//   q_bar  h_kv x head_dim
// Query head h reads kv head h / group_size().
struct AttnConfig {
  std::size_t n = 1;           // sequence length
  std::size_t head_dim = 16;   // d_h
  std::size_t h_q = 1;
  std::size_t h_kv = 1;
  std::size_t chunk = 16;      // B
  double alpha = 1.5;          // entmax exponent, > 1
  double gamma = 1.0;          // Stage-1 logit scale, > 0
  double sigma = 1.0;          // prior strength, > 0
  bool include_prev_chunk = true;

  std::size_t group_size() const { return h_q / h_kv; }
  // Full chunks; a trailing partial chunk is never summarized.
  std::size_t num_chunks() const { return n / chunk; }
  std::size_t mask_words() const { return (num_chunks() + 31) / 32; }
  std::size_t kv_head_of(std::size_t h) const { return h / group_size(); }

  // Throws ConfigError on any violated invariant.
  void validate() const;
};

}  // namespace dash
