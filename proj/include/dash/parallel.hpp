// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace dash {

// Process-wide cap on worker threads used by row-parallel kernels.
// 0 restores the default (hardware concurrency).
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs fn(i) for i in [0, count), splitting the range into contiguous slabs.
// Each index is visited exactly once; fn must only write state owned by i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace dash
