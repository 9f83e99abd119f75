// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "dash/errors.hpp"
#include "dash/parallel.hpp"
#include "dash/rng.hpp"
#include "dash/softmax.hpp"
#include "dash/tensor_io.hpp"

namespace dash {

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kDense:
      return "dense";
    case Mode::kDash:
      return "dash";
    case Mode::kTopk:
      return "topk";
  }
  return "dash";
}

Mode parse_mode(std::string_view name) {
  if (name == "dense") return Mode::kDense;
  if (name == "dash") return Mode::kDash;
  if (name == "topk") return Mode::kTopk;
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected dense, dash or topk)");
}

PipelineInputs random_inputs(const AttnConfig& config, std::uint64_t seed,
                             double q_bar_scale) {
  config.validate();
  Rng rng(seed);
  PipelineInputs in;
  in.config = config;
  const std::size_t d = config.head_dim;
  in.q = random_normal(config.n, config.h_q * d, rng);
  in.k = random_normal(config.n, config.h_kv * d, rng);
  in.v = random_normal(config.n, config.h_kv * d, rng);
  in.q_bar = q_bar_scale > 0.0 ? random_normal(config.h_kv, d, rng, q_bar_scale)
                               : DenseMatrix(config.h_kv, d);
  return in;
}

namespace {

struct Hasher {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  void add(std::uint64_t x) { h = mix64(h ^ x); }
  void add(double x) { add(std::bit_cast<std::uint64_t>(x)); }
  void add(const DenseMatrix& m) {
    add(static_cast<std::uint64_t>(m.rows()));
    add(static_cast<std::uint64_t>(m.cols()));
    for (double x : m.flat()) add(x);
  }
};

void check_inputs(const PipelineInputs& in) {
  const AttnConfig& c = in.config;
  c.validate();
  const std::size_t d = c.head_dim;
  if (in.q.rows() != c.n || in.q.cols() != c.h_q * d) {
    throw ShapeError("pipeline: Q must be n x (h_q * head_dim)");
  }
  if (in.k.rows() != c.n || in.k.cols() != c.h_kv * d || in.v.rows() != c.n ||
      in.v.cols() != c.h_kv * d) {
    throw ShapeError("pipeline: K and V must be n x (h_kv * head_dim)");
  }
  if (in.q_bar.rows() != c.h_kv || in.q_bar.cols() != d) {
    throw ShapeError("pipeline: q_bar must be h_kv x head_dim");
  }
  if (in.mode == Mode::kTopk && in.topk < 1) {
    throw ConfigError("top-k mode needs a budget k >= 1");
  }
}

AttendStats dense_stats(const AttnConfig& c) {
  AttendStats s;
  for (std::size_t i = 0; i < c.n; ++i) {
    const TokenRange diag = diagonal_window(i, c);
    const std::size_t routable = diag.begin / c.chunk;
    s.routed_blocks += routable * c.h_kv;
    s.routable_blocks += routable * c.h_kv;
    s.diag_blocks += (diag.size() + c.chunk - 1) / c.chunk * c.h_kv;
    s.attended_tokens += (i + 1) * c.h_kv;
    s.causal_tokens += (i + 1) * c.h_kv;
  }
  return s;
}

}  // namespace

std::uint64_t fingerprint(const PipelineInputs& in) {
  Hasher h;
  const AttnConfig& c = in.config;
  for (std::size_t x : {c.n, c.head_dim, c.h_q, c.h_kv, c.chunk, in.topk}) {
    h.add(static_cast<std::uint64_t>(x));
  }
  h.add(c.alpha);
  h.add(c.gamma);
  h.add(c.sigma);
  h.add(static_cast<std::uint64_t>(c.include_prev_chunk));
  h.add(static_cast<std::uint64_t>(in.mode));
  h.add(in.q);
  h.add(in.k);
  h.add(in.v);
  h.add(in.q_bar);
  return h.h;
}

RouteTable topk_route_table(const DenseMatrix& q,
                            const ChunkSummaries& summaries,
                            const AttnConfig& config, std::size_t budget) {
  config.validate();
  if (budget < 1) throw ConfigError("top-k mode needs a budget k >= 1");
  RouteTable table;
  table.config = config;
  table.rows.resize(config.n * config.h_kv);
  table.heads.resize(config.n * config.h_q);
  const std::size_t g = config.group_size();
  const std::size_t d = config.head_dim;
  parallel_for(config.n, [&](std::size_t i) {
    for (std::size_t r = 0; r < config.h_kv; ++r) {
      RouteResult rr;
      rr.query = i;
      rr.kv_head = r;
      rr.chunk = config.chunk;
      rr.diag = diagonal_window(i, config);
      rr.visible_chunks = rr.diag.begin / config.chunk;
      rr.lambda = std::numeric_limits<double>::quiet_NaN();
      rr.w.assign(rr.visible_chunks, 0.0);
      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        HeadRoute& hr = table.heads[i * config.h_q + h];
        hr.logits = chunk_logits(q.slice(i, h * d, d), summaries, r,
                                 rr.visible_chunks, config.gamma);
        std::vector<double> p = hr.logits;
        if (!p.empty()) softmax_inplace(std::span<double>(p));
        for (std::size_t c = 0; c < p.size(); ++c) {
          rr.w[c] += p[c] / static_cast<double>(g);
        }
      }
      rr.support = topk_route(rr.w, budget);
      rr.chunk_bias.assign(rr.visible_chunks, 0.0);
      table.rows[i * config.h_kv + r] = std::move(rr);
    }
  });
  finalize_route_table(table);
  return table;
}

Trace run_forward(PipelineInputs inputs) {
  check_inputs(inputs);
  Trace t;
  t.inputs = std::move(inputs);
  const PipelineInputs& in = t.inputs;
  const AttnConfig& c = in.config;
  t.summaries = summarize_all(in.k, in.q_bar, c);
  switch (in.mode) {
    case Mode::kDense:
      t.route = full_route(c);
      t.out = dense_attention(in.q, in.k, in.v, c);
      t.stats = dense_stats(c);
      break;
    case Mode::kDash:
      t.route = route_all(in.q, t.summaries, c);
      t.out = sparse_attention(in.q, in.k, in.v, t.route.mask, t.route.bias, c,
                               &t.stats);
      break;
    case Mode::kTopk:
      t.route = topk_route_table(in.q, t.summaries, c, in.topk);
      t.out = sparse_attention(in.q, in.k, in.v, t.route.mask, t.route.bias, c,
                               &t.stats);
      break;
  }
  t.fingerprint = fingerprint(in);
  return t;
}

Trace pipeline_forward(const DenseMatrix& q, const DenseMatrix& k,
                       const DenseMatrix& v, const DenseMatrix& q_bar,
                       const AttnConfig& config) {
  return run_forward({config, Mode::kDash, 0, q, k, v, q_bar});
}

Trace topk_forward(const DenseMatrix& q, const DenseMatrix& k,
                   const DenseMatrix& v, const DenseMatrix& q_bar,
                   const AttnConfig& config, std::size_t budget) {
  return run_forward({config, Mode::kTopk, budget, q, k, v, q_bar});
}

void validate_trace(const Trace& trace) {
  const AttnConfig& c = trace.config();
  const std::size_t rows = c.n * c.h_kv;
  if (trace.out.rows() != c.n || trace.out.cols() != c.h_q * c.head_dim ||
      trace.route.rows.size() != rows || trace.route.mask.rows() != rows) {
    throw TraceError("trace is incomplete: run the forward pass first");
  }
  if (trace.fingerprint != fingerprint(trace.inputs)) {
    throw TraceError("trace is stale: inputs changed after the forward pass");
  }
}

DenseMatrix prior_form_forward(const Trace& trace) {
  validate_trace(trace);
  const PipelineInputs& in = trace.inputs;
  const AttnConfig& c = in.config;
  if (in.mode != Mode::kDash) {
    throw TraceError("prior form needs a trace from entmax routing");
  }
  const std::size_t d = c.head_dim;
  const std::size_t g = c.group_size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  DenseMatrix out(c.n, c.h_q * d);
  parallel_for(c.n, [&](std::size_t i) {
    std::vector<double> z(i + 1);
    for (std::size_t r = 0; r < c.h_kv; ++r) {
      const std::vector<double> prior = trace.route.at(i, r).prior_row(c.sigma);
      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        auto qi = in.q.slice(i, h * d, d);
        for (std::size_t j = 0; j <= i; ++j) {
          z[j] = dot(qi, in.k.slice(j, r * d, d)) * scale;
        }
        const auto o = prior_attention_reference(z, prior, in.v, r * d, d);
        std::copy(o.begin(), o.end(), out.slice(i, h * d, d).begin());
      }
    }
  });
  return out;
}

DenseMatrix indicator_form_forward(const Trace& trace) {
  validate_trace(trace);
  const PipelineInputs& in = trace.inputs;
  const AttnConfig& c = in.config;
  const std::size_t d = c.head_dim;
  const std::size_t g = c.group_size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  DenseMatrix out(c.n, c.h_q * d);
  parallel_for(c.n, [&](std::size_t i) {
    std::vector<double> z(i + 1);
    std::vector<double> ind(i + 1);
    for (std::size_t r = 0; r < c.h_kv; ++r) {
      const std::size_t row = i * c.h_kv + r;
      std::fill(ind.begin(), ind.end(), 0.0);
      trace.route.mask.for_each_active(row, [&](std::size_t ch) {
        std::fill_n(ind.begin() + static_cast<std::ptrdiff_t>(ch * c.chunk),
                    c.chunk, 1.0);
      });
      const TokenRange diag = trace.route.rows[row].diag;
      for (std::size_t t = diag.begin; t < diag.end; ++t) ind[t] = 1.0;
      for (std::size_t h = r * g; h < (r + 1) * g; ++h) {
        auto qi = in.q.slice(i, h * d, d);
        for (std::size_t j = 0; j <= i; ++j) {
          z[j] = ind[j] > 0.0 ? dot(qi, in.k.slice(j, r * d, d)) * scale : 0.0;
        }
        const auto o = prior_attention_reference(z, ind, in.v, r * d, d);
        std::copy(o.begin(), o.end(), out.slice(i, h * d, d).begin());
      }
    }
  });
  return out;
}

DenseMatrix uniform_support_forward(const Trace& trace) {
  validate_trace(trace);
  const PipelineInputs& in = trace.inputs;
  const DenseMatrix zero(trace.route.bias.rows(), trace.route.bias.cols());
  return sparse_attention(in.q, in.k, in.v, trace.route.mask, zero, in.config);
}

namespace {

constexpr char kTraceMagic[8] = {'D', 'A', 'S', 'H', 'T', 'R', 'C', 'E'};
constexpr std::uint32_t kTraceVersion = 1;

template <typename T>
void put(std::ostream& os, T x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T x{};
  if (!is.read(reinterpret_cast<char*>(&x), sizeof(T))) {
    throw TraceError("trace file is truncated");
  }
  return x;
}

}  // namespace

void save_trace(const std::filesystem::path& path,
                const PipelineInputs& inputs) {
  check_inputs(inputs);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TraceError("cannot open trace file for writing: " + path.string());
  const AttnConfig& c = inputs.config;
  os.write(kTraceMagic, sizeof(kTraceMagic));
  put(os, kTraceVersion);
  for (std::size_t x : {c.n, c.head_dim, c.h_q, c.h_kv, c.chunk, inputs.topk}) {
    put(os, static_cast<std::uint64_t>(x));
  }
  put(os, c.alpha);
  put(os, c.gamma);
  put(os, c.sigma);
  put(os, static_cast<std::uint8_t>(c.include_prev_chunk));
  put(os, static_cast<std::uint8_t>(inputs.mode));
  write_tensor(os, inputs.q);
  write_tensor(os, inputs.k);
  write_tensor(os, inputs.v);
  write_tensor(os, inputs.q_bar);
  put(os, fingerprint(inputs));
  if (!os) throw TraceError("failed writing trace file: " + path.string());
}

PipelineInputs load_trace(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TraceError("cannot open trace file: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kTraceMagic, sizeof(magic)) != 0) {
    throw TraceError("not a trace file: " + path.string());
  }
  if (take<std::uint32_t>(is) != kTraceVersion) {
    throw TraceError("unsupported trace version");
  }
  PipelineInputs in;
  AttnConfig& c = in.config;
  try {
    c.n = take<std::uint64_t>(is);
    c.head_dim = take<std::uint64_t>(is);
    c.h_q = take<std::uint64_t>(is);
    c.h_kv = take<std::uint64_t>(is);
    c.chunk = take<std::uint64_t>(is);
    in.topk = take<std::uint64_t>(is);
    c.alpha = take<double>(is);
    c.gamma = take<double>(is);
    c.sigma = take<double>(is);
    c.include_prev_chunk = take<std::uint8_t>(is) != 0;
    const auto mode = take<std::uint8_t>(is);
    if (mode > static_cast<std::uint8_t>(Mode::kTopk)) {
      throw TraceError("trace file has an unknown mode");
    }
    in.mode = static_cast<Mode>(mode);
    in.q = read_tensor(is);
    in.k = read_tensor(is);
    in.v = read_tensor(is);
    in.q_bar = read_tensor(is);
    check_inputs(in);
  } catch (const TraceError&) {
    throw;
  } catch (const std::exception& e) {
    throw TraceError(std::string("corrupt trace file: ") + e.what());
  }
  if (take<std::uint64_t>(is) != fingerprint(in)) {
    throw TraceError("trace file checksum mismatch");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw TraceError("trace file has trailing bytes");
  }
  return in;
}

}  // namespace dash
