// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "dash/attend.hpp"
#include "dash/config.hpp"
#include "dash/matrix.hpp"
#include "dash/route.hpp"
#include "dash/summarize.hpp"

namespace dash {

enum class Mode { kDense, kDash, kTopk };

std::string_view mode_name(Mode mode);
// Throws ConfigError on an unknown name.
Mode parse_mode(std::string_view name);

// Inputs of one forward pass. Q: n x (h_q*d), K/V: n x (h_kv*d),
// q_bar: h_kv x d.
struct PipelineInputs {
  AttnConfig config;
  Mode mode = Mode::kDash;
  std::size_t topk = 0;  // chunk budget in top-k mode
  DenseMatrix q;
  DenseMatrix k;
  DenseMatrix v;
  DenseMatrix q_bar;
};

// Random inputs: Q, K, V standard normal, q_bar zero unless q_bar_scale > 0.
PipelineInputs random_inputs(const AttnConfig& config, std::uint64_t seed,
                             double q_bar_scale = 0.0);

// Everything a forward pass produced. Immutable once built; backward checks
// the fingerprint against the inputs to reject a trace whose inputs changed.
struct Trace {
  PipelineInputs inputs;
  ChunkSummaries summaries;
  RouteTable route;
  DenseMatrix out;
  AttendStats stats;
  std::uint64_t fingerprint = 0;

  const AttnConfig& config() const { return inputs.config; }
};

// Hash of config, mode and every input value.
std::uint64_t fingerprint(const PipelineInputs& inputs);

// Runs the selected mode: dense causal attention, entmax routing with the
// bias form, or top-k routing with zero bias.
Trace run_forward(PipelineInputs inputs);

// Stage 0 -> Stage 1 -> Stage 2 with entmax routing.
Trace pipeline_forward(const DenseMatrix& q, const DenseMatrix& k,
                       const DenseMatrix& v, const DenseMatrix& q_bar,
                       const AttnConfig& config);

// Baseline: per-head softmax over chunk logits, averaged over the group,
// keep the top `budget` chunks, attend without bias.
Trace topk_forward(const DenseMatrix& q, const DenseMatrix& k,
                   const DenseMatrix& v, const DenseMatrix& q_bar,
                   const AttnConfig& config, std::size_t budget);

// Top-k routing table over precomputed chunk logits (used by topk_forward).
RouteTable topk_route_table(const DenseMatrix& q,
                            const ChunkSummaries& summaries,
                            const AttnConfig& config, std::size_t budget);

// Direct evaluation of every output row as softmax over z + log g, with g the
// routing prior of the trace. Independent of the block-sparse kernel.
DenseMatrix prior_form_forward(const Trace& trace);

// Direct evaluation of plain softmax over the routed and diagonal tokens of
// the trace, ignoring any bias. The reference for dense and top-k traces.
DenseMatrix indicator_form_forward(const Trace& trace);

// Stage 2 over the routed support of the trace with zero bias, i.e. the prior
// taken uniform over routed and diagonal tokens.
DenseMatrix uniform_support_forward(const Trace& trace);

// Throws TraceError when the trace is incomplete or its fingerprint does not
// match its inputs.
void validate_trace(const Trace& trace);

// Binary trace file: config, mode, budget and the four input tensors. The
// forward pass is replayed on load. Corrupt files raise TraceError.
void save_trace(const std::filesystem::path& path, const PipelineInputs& inputs);
PipelineInputs load_trace(const std::filesystem::path& path);

}  // namespace dash
