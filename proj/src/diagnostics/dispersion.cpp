// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "dash/attend.hpp"
#include "dash/entmax.hpp"
#include "dash/errors.hpp"
#include "dash/format.hpp"
#include "dash/parallel.hpp"
#include "dash/softmax.hpp"

namespace dash {

double shannon_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("shannon_entropy: negative or non-finite probability");
    }
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double dispersion_ratio(std::span<const double> p, std::size_t n) {
  if (n < 2) throw DomainError("dispersion_ratio: n must be >= 2");
  return shannon_entropy(p) / std::log(static_cast<double>(n));
}

MappingKind parse_mapping(std::string_view name) {
  if (name == "softmax") return MappingKind::kSoftmax;
  if (name == "entmax") return MappingKind::kEntmax;
  if (name == "topk") return MappingKind::kTopkSoftmax;
  throw ConfigError("unknown mapping '" + std::string(name) +
                    "' (expected softmax, entmax or topk)");
}

std::string_view mapping_name(MappingKind kind) {
  switch (kind) {
    case MappingKind::kSoftmax:
      return "softmax";
    case MappingKind::kEntmax:
      return "entmax";
    case MappingKind::kTopkSoftmax:
      return "topk";
  }
  return "softmax";
}

std::vector<double> apply_mapping(std::span<const double> z, const Mapping& f) {
  switch (f.kind) {
    case MappingKind::kSoftmax: {
      std::vector<double> p(z.begin(), z.end());
      softmax_inplace(std::span<double>(p));
      return p;
    }
    case MappingKind::kEntmax:
      return entmax(z, f.alpha).p;
    case MappingKind::kTopkSoftmax: {
      if (f.k < 1) throw DomainError("top-k mapping needs k >= 1");
      const auto keep = topk_route(z, f.k);
      std::vector<double> sub(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) sub[i] = z[keep[i]];
      softmax_inplace(std::span<double>(sub));
      std::vector<double> p(z.size(), 0.0);
      for (std::size_t i = 0; i < keep.size(); ++i) p[keep[i]] = sub[i];
      return p;
    }
  }
  return {};
}

namespace {

void check_simplex(std::span<const double> theta) {
  double s = 0.0;
  for (double t : theta) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw DomainError("theta must be non-negative");
    }
    s += t;
  }
  if (std::abs(s - 1.0) > 1e-9) throw DomainError("theta must sum to 1");
}

}  // namespace

std::vector<double> AggregationSpec::weights() const {
  if (heads < 1) throw DomainError("aggregation needs at least one head");
  if (theta.empty()) {
    return std::vector<double>(heads, 1.0 / static_cast<double>(heads));
  }
  if (theta.size() != heads) throw ShapeError("theta length != head count");
  check_simplex(theta);
  return theta;
}

std::vector<double> head_aggregate(const std::vector<std::vector<double>>& dists,
                                   std::span<const double> theta) {
  if (dists.empty()) throw ShapeError("head_aggregate: no heads");
  if (theta.size() != dists.size()) {
    throw ShapeError("head_aggregate: theta length != head count");
  }
  check_simplex(theta);
  const std::size_t len = dists.front().size();
  std::vector<double> out(len, 0.0);
  for (std::size_t h = 0; h < dists.size(); ++h) {
    if (dists[h].size() != len) {
      throw ShapeError("head_aggregate: distributions differ in length");
    }
    for (std::size_t j = 0; j < len; ++j) out[j] += theta[h] * dists[h][j];
  }
  return out;
}

LogitFamily parse_family(std::string_view name) {
  if (name == "uniform01") return LogitFamily::kUniform01;
  if (name == "gaussian") return LogitFamily::kClippedGaussian;
  if (name == "spike") return LogitFamily::kSpike;
  throw ConfigError("unknown logit family '" + std::string(name) +
                    "' (expected uniform01, gaussian or spike)");
}

std::string_view family_name(LogitFamily family) {
  switch (family) {
    case LogitFamily::kUniform01:
      return "uniform01";
    case LogitFamily::kClippedGaussian:
      return "gaussian";
    case LogitFamily::kSpike:
      return "spike";
  }
  return "uniform01";
}

std::vector<double> draw_logits(LogitFamily family, std::size_t n, Rng& rng) {
  std::vector<double> z(n);
  switch (family) {
    case LogitFamily::kUniform01:
      for (double& v : z) v = rng.uniform();
      break;
    case LogitFamily::kClippedGaussian:
      for (double& v : z) v = std::clamp(rng.normal(), -3.0, 3.0);
      break;
    case LogitFamily::kSpike:
      for (double& v : z) v = rng.uniform();
      if (n > 0) z[rng.uniform_index(n)] = 2.0;
      break;
  }
  return z;
}

double softmax_uniform_ratio(std::size_t n) {
  const double e1 = std::numbers::e - 1.0;
  const double ln = std::log(static_cast<double>(n));
  return (ln + std::log(e1) - 1.0 / e1) / ln;
}

std::vector<DispersionPoint> dispersion_sweep(LogitFamily family,
                                              std::span<const std::size_t> ns,
                                              const AggregationSpec& aggregation,
                                              std::size_t seeds,
                                              std::uint64_t base_seed) {
  for (std::size_t n : ns) {
    if (n < 2) throw DomainError("dispersion_sweep: every n must be >= 2");
  }
  if (seeds < 1) throw DomainError("dispersion_sweep: seeds must be >= 1");
  const auto theta = aggregation.weights();
  std::vector<double> ratios(ns.size() * seeds);
  const Rng root(base_seed);
  parallel_for(ratios.size(), [&](std::size_t cell) {
    const std::size_t n = ns[cell / seeds];
    const std::size_t s = cell % seeds;
    Rng rng = root.fork((static_cast<std::uint64_t>(n) << 20) ^ s);
    std::vector<std::vector<double>> heads;
    for (std::size_t h = 0; h < aggregation.heads; ++h) {
      heads.push_back(apply_mapping(draw_logits(family, n, rng), aggregation.f));
    }
    ratios[cell] = dispersion_ratio(head_aggregate(heads, theta), n);
  });
  std::vector<DispersionPoint> out;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    DispersionPoint pt;
    pt.n = ns[i];
    pt.family = family_name(family);
    pt.mapping = mapping_name(aggregation.f.kind);
    pt.alpha = aggregation.f.kind == MappingKind::kEntmax ? aggregation.f.alpha
                                                          : 1.0;
    pt.k = aggregation.f.kind == MappingKind::kTopkSoftmax ? aggregation.f.k : 0;
    pt.seeds = seeds;
    double sum = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) sum += ratios[i * seeds + s];
    pt.mean_ratio = sum / static_cast<double>(seeds);
    double var = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const double dlt = ratios[i * seeds + s] - pt.mean_ratio;
      var += dlt * dlt;
    }
    pt.std_ratio = seeds > 1 ? std::sqrt(var / static_cast<double>(seeds - 1))
                             : 0.0;
    out.push_back(std::move(pt));
  }
  return out;
}

void write_dispersion_csv(std::ostream& os,
                          const std::vector<DispersionPoint>& points) {
  os << "n,family,mapping,alpha,k,mean_ratio,std_ratio,seeds\n";
  for (const auto& p : points) {
    os << p.n << ',' << p.family << ',' << p.mapping << ','
       << format_double(p.alpha) << ',' << p.k << ','
       << format_double(p.mean_ratio) << ',' << format_double(p.std_ratio)
       << ',' << p.seeds << '\n';
  }
}

}  // namespace dash
