// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "dash/matrix.hpp"

namespace dash {

// Nonzero = admissible entry.
using BoolMatrix = BasicMatrix<std::uint8_t>;

// Row-wise max-subtracted softmax. Masked entries come out exactly 0.
// Throws DegenerateRowError when a row has no admissible entry.
DenseMatrix row_softmax(const DenseMatrix& z,
                        const std::optional<BoolMatrix>& mask = std::nullopt);

// In-place softmax of one vector.
template <typename T>
void softmax_inplace(std::span<T> x);

double log_sum_exp(std::span<const double> x);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace dash
