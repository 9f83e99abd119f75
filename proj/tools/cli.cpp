// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bench.hpp"
#include "dash/dispersion.hpp"
#include "dash/errors.hpp"
#include "dash/gradcheck.hpp"
#include "dash/parallel.hpp"
#include "dash/summarize.hpp"
#include "dash/tensor_io.hpp"

namespace dash::cli {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  attn.validate();
  if (mode == Mode::kTopk && k < 1) {
    throw ConfigError("mode=topk requires k >= 1");
  }
}

RunConfig default_run_config() {
  RunConfig rc;
  rc.attn.n = 512;
  rc.attn.head_dim = 32;
  rc.attn.h_q = 4;
  rc.attn.h_kv = 2;
  rc.attn.chunk = 32;
  return rc;
}

namespace {

std::size_t get_count(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

std::string get_text(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, RunConfig rc) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "n") {
      rc.attn.n = get_count(v, key);
    } else if (key == "head_dim") {
      rc.attn.head_dim = get_count(v, key);
    } else if (key == "h_q") {
      rc.attn.h_q = get_count(v, key);
    } else if (key == "h_kv") {
      rc.attn.h_kv = get_count(v, key);
    } else if (key == "chunk") {
      rc.attn.chunk = get_count(v, key);
    } else if (key == "alpha") {
      rc.attn.alpha = get_real(v, key);
    } else if (key == "gamma") {
      rc.attn.gamma = get_real(v, key);
    } else if (key == "sigma") {
      rc.attn.sigma = get_real(v, key);
    } else if (key == "include_prev_chunk") {
      if (!v.is_boolean()) {
        throw ConfigError("config key 'include_prev_chunk' must be a boolean");
      }
      rc.attn.include_prev_chunk = v.get<bool>();
    } else if (key == "seed") {
      rc.seed = get_count(v, key);
    } else if (key == "mode") {
      rc.mode = parse_mode(get_text(v, key));
    } else if (key == "k") {
      rc.k = get_count(v, key);
    } else if (key == "threads") {
      rc.threads = get_count(v, key);
    } else if (key == "out") {
      rc.out = get_text(v, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

namespace {

// Flags shared by every subcommand. A flag overrides the config file only
// when it was given.
struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  std::string mode;
  std::size_t k = 0;
  double gamma = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  std::size_t threads = 0;
  std::string out;
  std::size_t n = 0;
  std::size_t chunk = 0;
  std::size_t head_dim = 0;
  std::size_t h_q = 0;
  std::size_t h_kv = 0;
  std::vector<CLI::Option*> given;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_mode = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_gamma = nullptr;
  CLI::Option* o_alpha = nullptr;
  CLI::Option* o_sigma = nullptr;
  CLI::Option* o_threads = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_n = nullptr;
  CLI::Option* o_chunk = nullptr;
  CLI::Option* o_head_dim = nullptr;
  CLI::Option* o_h_q = nullptr;
  CLI::Option* o_h_kv = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "flat JSON config file");
    o_seed = app->add_option("--seed", seed, "random seed");
    o_mode = app->add_option("--mode", mode, "dense, dash or topk");
    o_k = app->add_option("--k", k, "top-k chunk budget");
    o_gamma = app->add_option("--gamma", gamma, "routing logit scale");
    o_alpha = app->add_option("--alpha", alpha, "entmax alpha");
    o_sigma = app->add_option("--sigma", sigma, "prior strength");
    o_threads = app->add_option("--threads", threads, "worker thread cap");
    o_out = app->add_option("--out", out, "output path");
    o_n = app->add_option("--n", n, "sequence length");
    o_chunk = app->add_option("--chunk", chunk, "chunk size B");
    o_head_dim = app->add_option("--head-dim", head_dim, "head dimension");
    o_h_q = app->add_option("--h-q", h_q, "query heads");
    o_h_kv = app->add_option("--h-kv", h_kv, "kv heads");
  }

  RunConfig resolve(RunConfig rc) const {
    if (!config.empty()) rc = load_run_config(config, rc);
    if (*o_seed) rc.seed = seed;
    if (*o_mode) rc.mode = parse_mode(mode);
    if (*o_k) rc.k = k;
    if (*o_gamma) rc.attn.gamma = gamma;
    if (*o_alpha) rc.attn.alpha = alpha;
    if (*o_sigma) rc.attn.sigma = sigma;
    if (*o_threads) rc.threads = threads;
    if (*o_out) rc.out = out;
    if (*o_n) rc.attn.n = n;
    if (*o_chunk) rc.attn.chunk = chunk;
    if (*o_head_dim) rc.attn.head_dim = head_dim;
    if (*o_h_q) rc.attn.h_q = h_q;
    if (*o_h_kv) rc.attn.h_kv = h_kv;
    rc.validate();
    if (rc.threads > 0) set_max_threads(rc.threads);
    return rc;
  }
};

struct InputFiles {
  std::string query;
  std::string key;
  std::string value;
  std::string qbar;

  void attach(CLI::App* app, bool need_query) {
    if (need_query) app->add_option("--query", query, "Q tensor file");
    app->add_option("--key", key, "K tensor file");
    if (need_query) app->add_option("--value", value, "V tensor file");
    app->add_option("--qbar", qbar, "q_bar tensor file (default zeros)");
  }
};

// Reads whichever tensors were given; the sequence length comes from the key
// file. Missing tensors are drawn from the seed.
PipelineInputs build_inputs(RunConfig& rc, const InputFiles& files) {
  if (files.query.empty() != files.value.empty()) {
    throw ConfigError("--query and --value must be given together");
  }
  if (!files.query.empty() && files.key.empty()) {
    throw ConfigError("--query and --value need --key");
  }
  DenseMatrix k;
  if (!files.key.empty()) {
    k = read_tensor(files.key);
    rc.attn.n = k.rows();
    rc.validate();
  }
  PipelineInputs in = random_inputs(rc.attn, rc.seed);
  in.mode = rc.mode;
  in.topk = rc.k;
  if (!files.key.empty()) in.k = std::move(k);
  if (!files.query.empty()) {
    in.q = read_tensor(files.query);
    in.v = read_tensor(files.value);
  }
  if (!files.qbar.empty()) in.q_bar = read_tensor(files.qbar);
  return in;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << text;
}

json config_json(const RunConfig& rc) {
  json j;
  j["n"] = rc.attn.n;
  j["chunk"] = rc.attn.chunk;
  j["head_dim"] = rc.attn.head_dim;
  j["h_q"] = rc.attn.h_q;
  j["h_kv"] = rc.attn.h_kv;
  j["alpha"] = rc.attn.alpha;
  j["gamma"] = rc.attn.gamma;
  j["sigma"] = rc.attn.sigma;
  j["seed"] = rc.seed;
  j["mode"] = std::string(mode_name(rc.mode));
  if (rc.mode == Mode::kTopk) j["k"] = rc.k;
  return j;
}

json stats_json(const Trace& t) {
  const AttendStats& s = t.stats;
  const AttnConfig& c = t.config();
  json j;
  j["measured_sparsity"] = s.token_sparsity();
  j["chunk_sparsity"] = s.chunk_sparsity();
  j["blocks_visited"] = s.blocks_visited();
  j["routed_blocks"] = s.routed_blocks;
  j["diag_blocks"] = s.diag_blocks;
  j["routable_blocks"] = s.routable_blocks;
  j["attended_tokens"] = s.attended_tokens;
  j["causal_tokens"] = s.causal_tokens;
  j["mean_routed_chunks"] = static_cast<double>(s.routed_blocks) /
                            static_cast<double>(c.n * c.h_kv);
  return j;
}

constexpr double kVerifyTolerance = 1e-9;

int cmd_attend(RunConfig rc, const InputFiles& files, bool verify,
               const std::string& stats_path, const std::string& trace_path,
               std::ostream& out) {
  PipelineInputs in = build_inputs(rc, files);
  if (!trace_path.empty()) save_trace(trace_path, in);
  const Trace t = run_forward(std::move(in));
  const AttnConfig& c = t.config();
  if (!rc.out.empty()) {
    const std::uint64_t dims[] = {c.n, c.h_q, c.head_dim};
    write_tensor(rc.out, t.out, Dtype::f64, dims);
  }
  json j = config_json(rc);
  j["stats"] = stats_json(t);
  int code = kOk;
  if (verify) {
    const DenseMatrix ref = rc.mode == Mode::kDash ? prior_form_forward(t)
                                                   : indicator_form_forward(t);
    const double err = max_abs_diff(t.out, ref);
    j["verify"] = {{"reference", rc.mode == Mode::kDash ? "prior_form"
                                                        : "direct_softmax"},
                   {"max_abs_err", err},
                   {"tolerance", kVerifyTolerance},
                   {"passed", err <= kVerifyTolerance}};
    if (!(err <= kVerifyTolerance)) code = kVerifyFailed;
  }
  emit(j.dump(2) + "\n", stats_path, out);
  return code;
}

int cmd_summarize(RunConfig rc, const InputFiles& files,
                  std::ostream& out) {
  const PipelineInputs in = build_inputs(rc, files);
  const AttnConfig& c = rc.attn;
  const ChunkSummaries s = summarize_all(in.k, in.q_bar, c);
  if (!rc.out.empty()) {
    const std::uint64_t dims[] = {s.num_chunks(), c.h_kv, c.head_dim};
    write_tensor(rc.out, s.to_matrix(), Dtype::f64, dims);
  }
  json j = config_json(rc);
  j["num_chunks"] = s.num_chunks();
  j["residual_tokens"] = c.n - s.num_chunks() * c.chunk;
  if (!rc.out.empty()) j["out"] = rc.out;
  out << j.dump(2) << "\n";
  return kOk;
}

int cmd_route(RunConfig rc, const InputFiles& files,
              const std::string& bias_path, std::ostream& out) {
  PipelineInputs in = build_inputs(rc, files);
  const AttnConfig& c = rc.attn;
  const ChunkSummaries s = summarize_all(in.k, in.q_bar, c);
  RouteTable table;
  switch (rc.mode) {
    case Mode::kDense:
      table = full_route(c);
      break;
    case Mode::kDash:
      table = route_all(in.q, s, c);
      break;
    case Mode::kTopk:
      table = topk_route_table(in.q, s, c, rc.k);
      break;
  }
  if (!rc.out.empty()) table.mask.write(rc.out, c.h_kv);
  if (!bias_path.empty()) {
    const std::uint64_t dims[] = {c.n, c.h_kv, c.num_chunks()};
    write_tensor(bias_path, table.bias, Dtype::f64, dims);
  }
  std::size_t diag_only = 0;
  std::size_t routable = 0;
  for (const RouteResult& rr : table.rows) {
    if (rr.visible_chunks > 0 && rr.support.empty()) ++diag_only;
    routable += rr.visible_chunks;
  }
  const std::size_t active = table.mask.total_popcount();
  json j = config_json(rc);
  j["rows"] = table.rows.size();
  j["num_chunks"] = c.num_chunks();
  j["words_per_row"] = table.mask.words_per_row();
  j["total_popcount"] = active;
  j["routable_blocks"] = routable;
  j["mean_routed_chunks"] =
      static_cast<double>(active) / static_cast<double>(table.rows.size());
  j["chunk_sparsity"] =
      routable == 0 ? 0.0
                    : 1.0 - static_cast<double>(active) /
                                static_cast<double>(routable);
  j["routable_rows_without_routes"] = diag_only;
  out << j.dump(2) << "\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& rc, const std::vector<std::string>& ops,
                  std::size_t seeds, bool boundary,
                  const std::string& trace_path, std::ostream& out) {
  std::vector<GradcheckEntry> entries;
  if (!trace_path.empty()) {
    const PipelineInputs in = load_trace(trace_path);
    entries = gradcheck_inputs(in, rc.seed);
  } else {
    GradcheckOptions opts = default_gradcheck_options();
    opts.config = rc.attn;
    if (rc.k > 0) opts.topk = rc.k;
    opts.engineered_boundary = boundary;
    for (const std::string& op : ops) {
      bool known = false;
      for (const std::string& r : registered_ops()) known = known || r == op;
      if (!known) throw ConfigError("unknown gradcheck op '" + op + "'");
    }
    for (std::size_t s = 0; s < seeds; ++s) {
      for (const std::string& op : ops) {
        auto e = gradcheck(op, rc.seed + s, Tolerances{}, opts);
        entries.insert(entries.end(), e.begin(), e.end());
      }
    }
  }
  emit(report_json(entries) + "\n", rc.out, out);
  return all_passed(entries) ? kOk : kCheckFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Block-sparse attention with entmax routing: reference CLI"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  Overrides attend_o;
  InputFiles attend_in;
  bool verify = false;
  std::string stats_path;
  std::string save_trace_path;
  CLI::App* attend = app.add_subcommand("attend", "run one forward pass");
  attend_o.attach(attend);
  attend_in.attach(attend, true);
  attend->add_flag("--verify", verify, "compare against a direct reference");
  attend->add_option("--stats", stats_path, "stats JSON path (default stdout)");
  attend->add_option("--save-trace", save_trace_path,
                     "write the inputs as a trace file");

  Overrides sum_o;
  InputFiles sum_in;
  CLI::App* summarize = app.add_subcommand("summarize", "dump chunk summaries");
  sum_o.attach(summarize);
  sum_in.attach(summarize, false);

  Overrides route_o;
  InputFiles route_in;
  std::string bias_path;
  CLI::App* route =
      app.add_subcommand("route", "dump the block mask and routing biases");
  route_o.attach(route);
  route_in.attach(route, true);
  route->add_option("--bias-out", bias_path, "bias tensor path");

  Overrides grad_o;
  std::vector<std::string> ops = registered_ops();
  std::size_t grad_seeds = 1;
  bool boundary = false;
  std::string trace_path;
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference checks");
  grad_o.attach(grad);
  grad->add_option("--ops", ops, "ops to check")->delimiter(',');
  grad->add_option("--seeds", grad_seeds, "number of consecutive seeds");
  grad->add_flag("--boundary", boundary,
                 "place inputs on a support boundary (expect skips)");
  grad->add_option("--trace", trace_path, "check the inputs of a trace file");

  Overrides disp_o;
  std::string family = "uniform01";
  std::string mapping = "softmax";
  std::vector<std::size_t> disp_ns = {256, 1024, 4096, 16384, 65536};
  std::size_t disp_seeds = 32;
  std::size_t heads = 1;
  CLI::App* disp = app.add_subcommand("dispersion", "entropy ratio sweep");
  disp_o.attach(disp);
  disp->add_option("--family", family, "uniform01, gaussian or spike");
  disp->add_option("--mapping", mapping, "softmax, entmax or topk");
  disp->add_option("--ns", disp_ns, "sequence lengths")->delimiter(',');
  disp->add_option("--seeds", disp_seeds, "draws per n");
  disp->add_option("--heads", heads, "heads aggregated with uniform weights");

  Overrides bench_o;
  std::vector<std::size_t> bench_ns = {8192};
  std::vector<double> sparsity = {0.0, 0.75, 0.875, 0.9375};
  std::string precision = "f32";
  int repeats = 9;
  int warmups = 2;
  CLI::App* bench = app.add_subcommand("bench", "dense vs block-sparse timing");
  bench_o.attach(bench);
  auto* o_bench_ns = bench->add_option("--ns", bench_ns, "sequence lengths")
                         ->delimiter(',');
  bench->add_option("--sparsity", sparsity, "target sparsities")->delimiter(',');
  bench->add_option("--precision", precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  bench->add_option("--repeats", repeats, "timed runs");
  bench->add_option("--warmups", warmups, "untimed runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (attend->parsed()) {
      const RunConfig rc = attend_o.resolve(default_run_config());
      return cmd_attend(rc, attend_in, verify, stats_path, save_trace_path, out);
    }
    if (summarize->parsed()) {
      return cmd_summarize(sum_o.resolve(default_run_config()), sum_in, out);
    }
    if (route->parsed()) {
      return cmd_route(route_o.resolve(default_run_config()), route_in,
                       bias_path, out);
    }
    if (grad->parsed()) {
      RunConfig base;
      base.attn = gradcheck_config();
      base.seed = 3;
      return cmd_gradcheck(grad_o.resolve(base), ops, grad_seeds, boundary,
                           trace_path, out);
    }
    if (disp->parsed()) {
      const RunConfig rc = disp_o.resolve(default_run_config());
      AggregationSpec spec;
      spec.heads = heads;
      spec.f.kind = parse_mapping(mapping);
      spec.f.alpha = rc.attn.alpha;
      spec.f.k = *disp_o.o_k ? rc.k : 8;
      const auto pts =
          dispersion_sweep(parse_family(family), disp_ns, spec, disp_seeds,
                           rc.seed);
      std::ostringstream csv;
      write_dispersion_csv(csv, pts);
      emit(csv.str(), rc.out, out);
      return kOk;
    }
    if (bench->parsed()) {
      RunConfig base;
      base.attn.chunk = 64;
      base.attn.head_dim = 32;
      base.attn.h_q = 1;
      base.attn.h_kv = 1;
      base.attn.n = bench_ns.front();
      const RunConfig rc = bench_o.resolve(base);
      bench::BenchOptions o;
      o.config = rc.attn;
      o.ns = *o_bench_ns || (!*bench_o.o_n && bench_o.config.empty())
                 ? bench_ns
                 : std::vector<std::size_t>{rc.attn.n};
      o.sparsity = sparsity;
      o.seed = rc.seed;
      o.single_precision = precision == "f32";
      o.repeats = repeats;
      o.warmups = warmups;
      std::ostringstream csv;
      bench::write_bench_csv(csv, bench::run_bench(o));
      emit(csv.str(), rc.out, out);
      return kOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace dash::cli
