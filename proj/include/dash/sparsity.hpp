// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "dash/pipeline.hpp"

namespace dash {

// Attention sparsity of one query head in one layer: 1 - attended tokens /
// causally visible tokens, summed over all queries. Query heads of a group
// share their kv head's mask, so their rows coincide.
struct SparsityRow {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t kv_head = 0;
  std::size_t routed_blocks = 0;
  std::size_t attended_tokens = 0;
  std::size_t causal_tokens = 0;
  double sparsity = 0.0;
};

struct SparsityTable {
  std::vector<SparsityRow> rows;
  std::vector<double> layer_mean;  // mean over the layer's heads
  double mean = 0.0;               // mean over all rows
};

// One trace per simulated layer. Throws TraceError when `layers` is empty or
// a trace has not been run.
SparsityTable sparsity_stats(std::span<const Trace> layers);

// Header layer,head,kv_head,routed_blocks,attended_tokens,causal_tokens,sparsity.
void write_sparsity_csv(std::ostream& os, const SparsityTable& table);

}  // namespace dash
