// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/sparsity.hpp"

#include <ostream>

#include "dash/errors.hpp"
#include "dash/format.hpp"

namespace dash {

SparsityTable sparsity_stats(std::span<const Trace> layers) {
  if (layers.empty()) throw TraceError("sparsity_stats: no traces");
  SparsityTable table;
  double total = 0.0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Trace& t = layers[l];
    validate_trace(t);
    const AttnConfig& c = t.config();
    std::vector<SparsityRow> per_kv(c.h_kv);
    for (std::size_t i = 0; i < c.n; ++i) {
      for (std::size_t r = 0; r < c.h_kv; ++r) {
        const std::size_t row = i * c.h_kv + r;
        const std::size_t pc = t.route.mask.popcount(row);
        SparsityRow& s = per_kv[r];
        s.routed_blocks += pc;
        s.attended_tokens += pc * c.chunk + t.route.rows[row].diag.size();
        s.causal_tokens += i + 1;
      }
    }
    double layer_sum = 0.0;
    for (std::size_t h = 0; h < c.h_q; ++h) {
      SparsityRow s = per_kv[c.kv_head_of(h)];
      s.layer = l;
      s.head = h;
      s.kv_head = c.kv_head_of(h);
      s.sparsity = 1.0 - static_cast<double>(s.attended_tokens) /
                             static_cast<double>(s.causal_tokens);
      layer_sum += s.sparsity;
      table.rows.push_back(s);
    }
    table.layer_mean.push_back(layer_sum / static_cast<double>(c.h_q));
    total += layer_sum;
  }
  table.mean = total / static_cast<double>(table.rows.size());
  return table;
}

void write_sparsity_csv(std::ostream& os, const SparsityTable& table) {
  os << "layer,head,kv_head,routed_blocks,attended_tokens,causal_tokens,"
        "sparsity\n";
  for (const auto& r : table.rows) {
    os << r.layer << ',' << r.head << ',' << r.kv_head << ','
       << r.routed_blocks << ',' << r.attended_tokens << ','
       << r.causal_tokens << ',' << format_double(r.sparsity) << '\n';
  }
}

}  // namespace dash
