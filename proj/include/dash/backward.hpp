// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dash/config.hpp"
#include "dash/matrix.hpp"
#include "dash/pipeline.hpp"

namespace dash {

// Which parameterization of the routing prior the backward pass
// differentiates. Both give the same input gradients.
enum class PriorForm {
  kBias,   // additive per-chunk bias d_c = (log w_c - mean log w) / sigma
  kPrior,  // g = lambda * w' on routed tokens, (1 - lambda) / |D| diagonal
};

struct GradBundle {
  DenseMatrix dQ;           // n x (h_q * d)
  DenseMatrix dK;           // n x (h_kv * d)
  DenseMatrix dV;           // n x (h_kv * d)
  DenseMatrix dq_bar;       // h_kv x d
  DenseMatrix d_summaries;  // T_c x (h_kv * d)
  DenseMatrix d_weights;    // (n * h_kv) x T_c, cotangent of merged w
};

// Reverse mode through Stage 2, the routing prior, entmax routing and chunk
// summarization. Supports are held fixed. Routing gets no gradient in dense
// and top-k traces. Throws TraceError on a stale or incomplete trace and
// ShapeError when dO does not match the output.
GradBundle pipeline_backward(const Trace& trace, const DenseMatrix& d_out,
                             PriorForm form = PriorForm::kBias);

struct SummaryGrads {
  DenseMatrix dK;      // n x (h_kv * d)
  DenseMatrix dq_bar;  // h_kv x d
};

// Cotangent of summarize_all: d_summaries is T_c x (h_kv * d).
SummaryGrads summarize_backward(const DenseMatrix& keys,
                                const DenseMatrix& q_bar,
                                const AttnConfig& config,
                                const DenseMatrix& d_summaries);

using ScalarFn = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h. Throws DomainError
// for h <= 0 or any non-finite evaluation.
std::vector<double> finite_diff_grad(const ScalarFn& f,
                                     std::span<const double> x, double h);

// max_i |a_i - f_i| / max(|a_i|, |f_i|, floor).
double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric,
                          double floor = 1e-6);

}  // namespace dash
