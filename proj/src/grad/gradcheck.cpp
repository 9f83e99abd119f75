// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <json.hpp>

#include "dash/backward.hpp"
#include "dash/entmax.hpp"
#include "dash/errors.hpp"
#include "dash/format.hpp"
#include "dash/rng.hpp"
#include "dash/summarize.hpp"

namespace dash {

std::string_view status_name(GradStatus s) {
  switch (s) {
    case GradStatus::kPass:
      return "pass";
    case GradStatus::kFail:
      return "fail";
    case GradStatus::kSkippedBoundary:
      return "skipped_boundary";
  }
  return "fail";
}

AttnConfig gradcheck_config() {
  AttnConfig c;
  c.n = 64;
  c.chunk = 8;
  c.h_q = 2;
  c.h_kv = 1;
  c.head_dim = 8;
  c.alpha = 1.5;
  c.sigma = 10.0;
  c.gamma = 1.0;
  return c;
}

GradcheckOptions default_gradcheck_options() {
  GradcheckOptions o;
  o.config = gradcheck_config();
  return o;
}

const std::vector<std::string>& registered_ops() {
  static const std::vector<std::string> ops = {
      "entmax", "summarize", "pipeline", "pipeline_prior_form",
      "topk_pipeline"};
  return ops;
}

bool all_passed(const std::vector<GradcheckEntry>& entries) {
  return std::none_of(entries.begin(), entries.end(), [](const auto& e) {
    return e.status == GradStatus::kFail;
  });
}

std::string report_json(const std::vector<GradcheckEntry>& entries) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["op"] = e.op;
    j["seed"] = e.seed;
    j["param"] = e.param;
    if (std::isfinite(e.max_rel_err)) {
      j["max_rel_err"] = e.max_rel_err;
    } else {
      j["max_rel_err"] = nullptr;
    }
    j["status"] = std::string(status_name(e.status));
    if (!e.reason.empty()) j["reason"] = e.reason;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

double routing_margin(const Trace& trace) {
  double m = std::numeric_limits<double>::infinity();
  const auto& in = trace.inputs;
  if (in.mode == Mode::kDash) {
    for (const HeadRoute& hr : trace.route.heads) {
      if (hr.result) m = std::min(m, support_margin(hr.logits, *hr.result));
    }
  } else if (in.mode == Mode::kTopk) {
    for (const RouteResult& rr : trace.route.rows) {
      if (rr.w.size() <= in.topk) continue;
      std::vector<double> w = rr.w;
      std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(in.topk),
                       w.end(), std::greater<>());
      const double below = w[in.topk];
      const double kth = *std::min_element(
          w.begin(), w.begin() + static_cast<std::ptrdiff_t>(in.topk));
      m = std::min(m, kth - below);
    }
  }
  return m;
}

namespace {

std::uint64_t attempt_seed(std::uint64_t seed, int attempt) {
  if (attempt == 0) return seed;
  return mix64(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt)));
}

GradcheckEntry compare(std::string op, std::uint64_t seed, std::string param,
                       std::span<const double> analytic, const ScalarFn& f,
                       std::span<const double> x, const Tolerances& tol) {
  GradcheckEntry e;
  e.op = std::move(op);
  e.seed = seed;
  e.param = std::move(param);
  try {
    const auto numeric = finite_diff_grad(f, x, tol.h);
    e.max_rel_err = max_relative_error(analytic, numeric);
    e.status = e.max_rel_err < tol.rel ? GradStatus::kPass : GradStatus::kFail;
  } catch (const std::exception& ex) {
    e.max_rel_err = std::numeric_limits<double>::quiet_NaN();
    e.status = GradStatus::kFail;
    e.reason = ex.what();
  }
  return e;
}

GradcheckEntry skipped(std::string op, std::uint64_t seed, std::string param,
                       double margin, const Tolerances& tol) {
  GradcheckEntry e;
  e.op = std::move(op);
  e.seed = seed;
  e.param = std::move(param);
  e.max_rel_err = std::numeric_limits<double>::quiet_NaN();
  e.status = GradStatus::kSkippedBoundary;
  e.reason = "support margin " + format_double(margin) + " < delta " +
             format_double(tol.delta);
  return e;
}

double sum_product(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  auto x = a.flat();
  auto y = b.flat();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

DenseMatrix& param_ref(PipelineInputs& in, std::string_view name) {
  if (name == "Q") return in.q;
  if (name == "K") return in.k;
  if (name == "V") return in.v;
  return in.q_bar;
}

const DenseMatrix& param_ref(const PipelineInputs& in, std::string_view name) {
  if (name == "Q") return in.q;
  if (name == "K") return in.k;
  if (name == "V") return in.v;
  return in.q_bar;
}

const DenseMatrix& grad_ref(const GradBundle& g, std::string_view name) {
  if (name == "Q") return g.dQ;
  if (name == "K") return g.dK;
  if (name == "V") return g.dV;
  return g.dq_bar;
}

std::vector<GradcheckEntry> check_pipeline(const std::string& op,
                                           const PipelineInputs& base,
                                           const DenseMatrix& d_out,
                                           std::uint64_t seed, PriorForm form,
                                           const Tolerances& tol) {
  const Trace trace = run_forward(base);
  const GradBundle grads = pipeline_backward(trace, d_out, form);
  std::vector<GradcheckEntry> out;
  for (const char* name : {"Q", "K", "V", "q_bar"}) {
    ScalarFn f = [&](std::span<const double> x) {
      PipelineInputs in = base;
      DenseMatrix& p = param_ref(in, name);
      std::copy(x.begin(), x.end(), p.flat().begin());
      const Trace t = run_forward(std::move(in));
      return sum_product(
          form == PriorForm::kPrior ? prior_form_forward(t) : t.out, d_out);
    };
    out.push_back(compare(op, seed, name, grad_ref(grads, name).flat(), f,
                          param_ref(base, name).flat(), tol));
  }
  return out;
}

std::vector<GradcheckEntry> check_entmax(std::uint64_t seed,
                                         const Tolerances& tol,
                                         const GradcheckOptions& opts) {
  const double alpha = opts.config.alpha;
  double margin = 0.0;
  for (int a = 0; a < opts.max_attempts; ++a) {
    Rng rng(attempt_seed(seed, a));
    std::vector<double> z(10);
    std::vector<double> u(10);
    for (double& v : z) v = 1.5 * rng.normal();
    for (double& v : u) v = rng.normal();
    EntmaxResult r = entmax(z, alpha);
    if (opts.engineered_boundary) {
      // Put the smallest score exactly on the threshold.
      const auto j = static_cast<std::size_t>(
          std::min_element(z.begin(), z.end()) - z.begin());
      z[j] = r.tau / (alpha - 1.0);
      r = entmax(z, alpha);
    }
    margin = support_margin(z, r);
    if (margin < tol.delta) {
      if (opts.engineered_boundary) break;
      continue;
    }
    const auto analytic = entmax_vjp(z, alpha, r, u);
    ScalarFn f = [&](std::span<const double> x) {
      const auto p = entmax(x, alpha).p;
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * u[i];
      return s;
    };
    return {compare("entmax", seed, "z", analytic, f, z, tol)};
  }
  return {skipped("entmax", seed, "z", margin, tol)};
}

std::vector<GradcheckEntry> check_summarize(std::uint64_t seed,
                                            const Tolerances& tol,
                                            const GradcheckOptions& opts) {
  const AttnConfig& c = opts.config;
  Rng rng(seed);
  const std::size_t d = c.head_dim;
  const DenseMatrix keys = random_normal(c.n, c.h_kv * d, rng);
  const DenseMatrix q_bar = random_normal(c.h_kv, d, rng, 0.5);
  const DenseMatrix up = random_normal(c.num_chunks(), c.h_kv * d, rng);
  const auto g = summarize_backward(keys, q_bar, c, up);
  std::vector<GradcheckEntry> out;
  ScalarFn fk = [&](std::span<const double> x) {
    DenseMatrix k(keys.rows(), keys.cols(), std::vector<double>(x.begin(), x.end()));
    return sum_product(summarize_all(k, q_bar, c).to_matrix(), up);
  };
  out.push_back(compare("summarize", seed, "K", g.dK.flat(), fk, keys.flat(), tol));
  ScalarFn fq = [&](std::span<const double> x) {
    DenseMatrix qb(q_bar.rows(), q_bar.cols(), std::vector<double>(x.begin(), x.end()));
    return sum_product(summarize_all(keys, qb, c).to_matrix(), up);
  };
  out.push_back(
      compare("summarize", seed, "q_bar", g.dq_bar.flat(), fq, q_bar.flat(), tol));
  return out;
}

}  // namespace

std::vector<GradcheckEntry> gradcheck(std::string_view op, std::uint64_t seed,
                                      const Tolerances& tol,
                                      const GradcheckOptions& opts) {
  if (op == "entmax") return check_entmax(seed, tol, opts);
  if (op == "summarize") return check_summarize(seed, tol, opts);

  Mode mode = Mode::kDash;
  PriorForm form = PriorForm::kBias;
  if (op == "pipeline_prior_form") {
    form = PriorForm::kPrior;
  } else if (op == "topk_pipeline") {
    mode = Mode::kTopk;
  } else if (op != "pipeline") {
    throw ConfigError("gradcheck: unknown op '" + std::string(op) + "'");
  }
  double margin = 0.0;
  const int attempts = opts.engineered_boundary ? 1 : opts.max_attempts;
  for (int a = 0; a < attempts; ++a) {
    const std::uint64_t s = attempt_seed(seed, a);
    PipelineInputs in = random_inputs(opts.config, s, 0.5);
    in.mode = mode;
    in.topk = opts.topk;
    margin = routing_margin(run_forward(in));
    if (margin < tol.delta) continue;
    Rng sub = Rng(s).fork(7);
    const DenseMatrix d_out = random_normal(in.q.rows(), in.q.cols(), sub);
    return check_pipeline(std::string(op), in, d_out, seed, form, tol);
  }
  std::vector<GradcheckEntry> out;
  for (const char* name : {"Q", "K", "V", "q_bar"}) {
    out.push_back(skipped(std::string(op), seed, name, margin, tol));
  }
  return out;
}

std::vector<GradcheckEntry> gradcheck_inputs(const PipelineInputs& inputs,
                                             std::uint64_t seed,
                                             const Tolerances& tol) {
  const std::string op = inputs.mode == Mode::kTopk ? "topk_pipeline"
                         : inputs.mode == Mode::kDense ? "dense_pipeline"
                                                        : "pipeline";
  const double margin = routing_margin(run_forward(inputs));
  if (margin < tol.delta) {
    std::vector<GradcheckEntry> out;
    for (const char* name : {"Q", "K", "V", "q_bar"}) {
      out.push_back(skipped(op, seed, name, margin, tol));
    }
    return out;
  }
  Rng sub = Rng(seed).fork(7);
  const DenseMatrix d_out = random_normal(inputs.q.rows(), inputs.q.cols(), sub);
  return check_pipeline(op, inputs, d_out, seed, PriorForm::kBias, tol);
}

}  // namespace dash
