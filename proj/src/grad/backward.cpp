// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/backward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dash/entmax.hpp"
#include "dash/errors.hpp"
#include "dash/parallel.hpp"
#include "dash/prior.hpp"
#include "dash/softmax.hpp"

namespace dash {

namespace {

// Per-chunk normalized w^(1/sigma) over the support, in the log domain.
std::vector<double> prior_chunk_weights(const RouteResult& rr, double sigma) {
  std::vector<double> pi(rr.support.size());
  double amax = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < rr.support.size(); ++s) {
    pi[s] = std::log(std::max(rr.w[rr.support[s]], kLogFloor)) / sigma;
    amax = std::max(amax, pi[s]);
  }
  double z = 0.0;
  for (double& v : pi) {
    v = std::exp(v - amax);
    z += v;
  }
  for (double& v : pi) v /= z;
  return pi;
}

// Cotangent of log w on the support from the per-chunk logit cotangents G_c
// (summed over the chunk's tokens and the group's heads) and the diagonal sum.
std::vector<double> log_weight_cotangent(const RouteResult& rr,
                                         std::span<const double> g_chunk,
                                         double g_diag, double sigma,
                                         PriorForm form) {
  const std::size_t m = rr.support.size();
  std::vector<double> dlog(m);
  if (form == PriorForm::kBias) {
    double mean = 0.0;
    for (double v : g_chunk) mean += v;
    mean /= static_cast<double>(m);
    for (std::size_t s = 0; s < m; ++s) dlog[s] = (g_chunk[s] - mean) / sigma;
    return dlog;
  }
  // log g = log lambda + log w'_c on routed tokens and log(1 - lambda) - log|D|
  // on the diagonal; lambda = sigmoid(KL(u || w') + log(|R| / |D|)).
  const double lambda = rr.lambda;
  double g_routed = 0.0;
  for (double v : g_chunk) g_routed += v;
  const double d_kl = g_routed * (1.0 - lambda) - g_diag * lambda;
  std::vector<double> dlp(m);
  double dlp_sum = 0.0;
  for (std::size_t s = 0; s < m; ++s) {
    dlp[s] = g_chunk[s] - d_kl / static_cast<double>(m);
    dlp_sum += dlp[s];
  }
  const auto pi = prior_chunk_weights(rr, sigma);
  for (std::size_t s = 0; s < m; ++s) {
    dlog[s] = (dlp[s] - pi[s] * dlp_sum) / sigma;
  }
  return dlog;
}

}  // namespace

SummaryGrads summarize_backward(const DenseMatrix& keys,
                                const DenseMatrix& q_bar,
                                const AttnConfig& config,
                                const DenseMatrix& d_summaries) {
  config.validate();
  const std::size_t d = config.head_dim;
  const std::size_t B = config.chunk;
  const std::size_t tc = config.num_chunks();
  if (keys.rows() != config.n || keys.cols() != config.h_kv * d ||
      q_bar.rows() != config.h_kv || q_bar.cols() != d ||
      d_summaries.rows() != tc || d_summaries.cols() != config.h_kv * d) {
    throw ShapeError("summarize_backward: inconsistent shapes");
  }
  SummaryGrads g{DenseMatrix(config.n, config.h_kv * d),
                 DenseMatrix(config.h_kv, d)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> a(B);
  std::vector<double> kbar(d);
  for (std::size_t r = 0; r < config.h_kv; ++r) {
    auto qb = q_bar.row(r);
    auto dqb = g.dq_bar.row(r);
    for (std::size_t c = 0; c < tc; ++c) {
      auto dkb = d_summaries.slice(c, r * d, d);
      for (std::size_t t = 0; t < B; ++t) {
        a[t] = dot(qb, keys.slice(c * B + t, r * d, d)) * scale;
      }
      softmax_inplace(std::span<double>(a));
      std::fill(kbar.begin(), kbar.end(), 0.0);
      for (std::size_t t = 0; t < B; ++t) {
        auto kt = keys.slice(c * B + t, r * d, d);
        for (std::size_t x = 0; x < d; ++x) kbar[x] += a[t] * kt[x];
      }
      const double base = dot(dkb, std::span<const double>(kbar));
      for (std::size_t t = 0; t < B; ++t) {
        auto kt = keys.slice(c * B + t, r * d, d);
        auto dkt = g.dK.slice(c * B + t, r * d, d);
        const double ds = a[t] * (dot(dkb, kt) - base);
        for (std::size_t x = 0; x < d; ++x) {
          dqb[x] += ds * kt[x] * scale;
          dkt[x] += a[t] * dkb[x] + ds * qb[x] * scale;
        }
      }
    }
  }
  return g;
}

GradBundle pipeline_backward(const Trace& trace, const DenseMatrix& d_out,
                             PriorForm form) {
  validate_trace(trace);
  const PipelineInputs& in = trace.inputs;
  const AttnConfig& c = in.config;
  if (d_out.rows() != trace.out.rows() || d_out.cols() != trace.out.cols()) {
    throw ShapeError("pipeline_backward: dO must match the output shape");
  }
  const std::size_t d = c.head_dim;
  const std::size_t B = c.chunk;
  const std::size_t g = c.group_size();
  const std::size_t tc = c.num_chunks();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const bool routing_grad = in.mode == Mode::kDash;

  GradBundle out;
  out.dQ = DenseMatrix(c.n, c.h_q * d);
  out.dK = DenseMatrix(c.n, c.h_kv * d);
  out.dV = DenseMatrix(c.n, c.h_kv * d);
  out.d_summaries = DenseMatrix(tc, c.h_kv * d);
  out.d_weights = DenseMatrix(c.n * c.h_kv, tc);

  // Each kv head owns disjoint columns of every output, so heads run in
  // parallel without sharing writes.
  parallel_for(c.h_kv, [&](std::size_t r) {
    const std::size_t kv = r * d;
    std::vector<std::size_t> tokens;
    std::vector<double> x;
    std::vector<double> g_chunk;
    for (std::size_t i = 0; i < c.n; ++i) {
      const std::size_t row = i * c.h_kv + r;
      const RouteResult& rr = trace.route.rows[row];
      const auto active = trace.route.mask.active(row);
      tokens.clear();
      for (std::size_t ch : active) {
        for (std::size_t t = ch * B; t < (ch + 1) * B; ++t) tokens.push_back(t);
      }
      const std::size_t routed = tokens.size();
      for (std::size_t t = rr.diag.begin; t < rr.diag.end; ++t) {
        tokens.push_back(t);
      }
      x.resize(tokens.size());
      g_chunk.assign(active.size(), 0.0);
      double g_diag = 0.0;

      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        auto qi = in.q.slice(i, h * d, d);
        for (std::size_t j = 0; j < tokens.size(); ++j) {
          const std::size_t t = tokens[j];
          x[j] = dot(qi, in.k.slice(t, kv, d)) * scale;
          if (j < routed) x[j] += trace.route.bias(row, t / B);
        }
        softmax_inplace(std::span<double>(x));
        auto dout = d_out.slice(i, h * d, d);
        const double base = dot(dout, trace.out.slice(i, h * d, d));
        auto dqi = out.dQ.slice(i, h * d, d);
        for (std::size_t j = 0; j < tokens.size(); ++j) {
          const std::size_t t = tokens[j];
          auto kt = in.k.slice(t, kv, d);
          auto vt = in.v.slice(t, kv, d);
          auto dk = out.dK.slice(t, kv, d);
          auto dv = out.dV.slice(t, kv, d);
          const double dx = x[j] * (dot(dout, vt) - base);
          for (std::size_t e = 0; e < d; ++e) {
            dv[e] += x[j] * dout[e];
            dqi[e] += dx * kt[e] * scale;
            dk[e] += dx * qi[e] * scale;
          }
          if (j < routed) {
            g_chunk[j / B] += dx;
          } else {
            g_diag += dx;
          }
        }
      }

      if (!routing_grad || rr.support.empty()) continue;
      // The mask holds exactly the routed support, in the same order.
      const auto dlog = log_weight_cotangent(rr, g_chunk, g_diag, c.sigma, form);
      std::vector<double> dw(rr.visible_chunks, 0.0);
      for (std::size_t s = 0; s < rr.support.size(); ++s) {
        const std::size_t ch = rr.support[s];
        dw[ch] = dlog[s] / rr.w[ch];
        out.d_weights(row, ch) = dw[ch];
      }
      for (double& v : dw) v /= static_cast<double>(g);
      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        const HeadRoute& hr = trace.route.heads[i * c.h_q + h];
        const auto dz = entmax_vjp(hr.logits, c.alpha, *hr.result, dw);
        auto qi = in.q.slice(i, h * d, d);
        auto dqi = out.dQ.slice(i, h * d, d);
        for (std::size_t ch = 0; ch < dz.size(); ++ch) {
          if (dz[ch] == 0.0) continue;
          const double f = c.gamma * dz[ch] * scale;
          auto kb = trace.summaries.summary(ch, r);
          auto dkb = out.d_summaries.slice(ch, kv, d);
          for (std::size_t e = 0; e < d; ++e) {
            dqi[e] += f * kb[e];
            dkb[e] += f * qi[e];
          }
        }
      }
    }
  });

  if (routing_grad) {
    auto sg = summarize_backward(in.k, in.q_bar, c, out.d_summaries);
    auto dst = out.dK.flat();
    auto src = sg.dK.flat();
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
    out.dq_bar = std::move(sg.dq_bar);
  } else {
    out.dq_bar = DenseMatrix(c.h_kv, d);
  }
  return out;
}

std::vector<double> finite_diff_grad(const ScalarFn& f,
                                     std::span<const double> x, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw DomainError("finite_diff_grad: step must be a finite value > 0");
  }
  std::vector<double> xv(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double orig = xv[i];
    xv[i] = orig + h;
    const double fp = f(xv);
    xv[i] = orig - h;
    const double fm = f(xv);
    xv[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw DomainError("finite_diff_grad: non-finite evaluation at coordinate " +
                        std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric, double floor) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double f = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(f), floor});
    const double e = std::abs(a - f) / denom;
    if (std::isnan(e)) return e;
    worst = std::max(worst, e);
  }
  return worst;
}

}  // namespace dash
