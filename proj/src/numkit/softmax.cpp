// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/softmax.hpp"

#include <algorithm>
#include <limits>

namespace dash {

template <typename T>
void softmax_inplace(std::span<T> x) {
  if (x.empty()) throw DegenerateRowError("softmax of an empty row");
  const T m = *std::max_element(x.begin(), x.end());
  T sum = T(0);
  for (T& v : x) {
    v = std::exp(v - m);
    sum += v;
  }
  for (T& v : x) v /= sum;
}

template void softmax_inplace<double>(std::span<double>);
template void softmax_inplace<float>(std::span<float>);

DenseMatrix row_softmax(const DenseMatrix& z,
                        const std::optional<BoolMatrix>& mask) {
  if (mask && (mask->rows() != z.rows() || mask->cols() != z.cols())) {
    throw ShapeError("row_softmax: mask shape differs from logits");
  }
  DenseMatrix p(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto out = p.row(r);
    double m = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < in.size(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      m = std::max(m, in[c]);
      any = true;
    }
    if (!any) {
      throw DegenerateRowError("row_softmax: row " + std::to_string(r) +
                               " is fully masked");
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      out[c] = std::exp(in[c] - m);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return p;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace dash
