// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dash/config.hpp"
#include "dash/pipeline.hpp"

namespace dash {

struct Tolerances {
  double rel = 1e-3;    // max relative error for a pass
  double delta = 1e-3;  // minimum distance from any support boundary
  double h = 1e-5;      // finite-difference step
};

enum class GradStatus { kPass, kFail, kSkippedBoundary };

std::string_view status_name(GradStatus s);

struct GradcheckEntry {
  std::string op;
  std::uint64_t seed = 0;
  std::string param;
  double max_rel_err = 0.0;
  GradStatus status = GradStatus::kPass;
  std::string reason;  // set for skipped entries
};

struct GradcheckOptions {
  AttnConfig config;          // pipeline ops; see gradcheck_config()
  std::size_t topk = 2;       // chunk budget of the top-k op
  // Place an input exactly on a support boundary instead of screening it
  // away; the affected entries come back skipped.
  bool engineered_boundary = false;
  // Fresh inputs are drawn from derived sub-seeds until every support margin
  // clears delta; after this many attempts the op is reported skipped.
  int max_attempts = 32;
};

// n=64, B=8, h_q=2, h_kv=1, head_dim=8, alpha=1.5, sigma=10.
AttnConfig gradcheck_config();
GradcheckOptions default_gradcheck_options();

// entmax, summarize, pipeline, pipeline_prior_form, topk_pipeline.
const std::vector<std::string>& registered_ops();

// Compares the analytic gradient of `op` against central differences on
// seeded random inputs, one entry per parameter. Unknown ops throw
// ConfigError; numerical problems are reported as failures.
std::vector<GradcheckEntry> gradcheck(std::string_view op, std::uint64_t seed,
                                      const Tolerances& tol = {},
                                      const GradcheckOptions& opts =
                                          default_gradcheck_options());

// Gradient check of the full pipeline on given inputs (e.g. from a trace
// file). Uses the inputs' mode; boundary inputs are skipped, not resampled.
std::vector<GradcheckEntry> gradcheck_inputs(const PipelineInputs& inputs,
                                             std::uint64_t seed,
                                             const Tolerances& tol = {});

// Smallest distance of any routing decision in the trace from its boundary:
// entmax support margins in dash mode, the k-th/(k+1)-th weight gap in top-k
// mode, +inf otherwise.
double routing_margin(const Trace& trace);

bool all_passed(const std::vector<GradcheckEntry>& entries);

// JSON array of {op, seed, param, max_rel_err, status[, reason]}.
std::string report_json(const std::vector<GradcheckEntry>& entries);

}  // namespace dash
