// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dash/matrix.hpp"

namespace dash {

// On-disk layout (all integers little-endian):
//   "DASHTNSR"            8 bytes magic
//   version               u32, currently 1
//   dtype                 u8  (0 = f64, 1 = f32, 2 = u32)
//   ndim                  u8
//   dims                  ndim x u64
//   payload               row-major elements of dtype
// A DenseMatrix maps to dims[0] rows and prod(dims[1:]) columns.
enum class Dtype : std::uint8_t { f64 = 0, f32 = 1, u32 = 2 };

inline constexpr char kTensorMagic[8] = {'D', 'A', 'S', 'H',
                                         'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

struct TensorHeader {
  Dtype dtype = Dtype::f64;
  std::vector<std::uint64_t> dims;

  std::uint64_t element_count() const;
};

// Stream forms; several records may be concatenated in one stream.
void write_tensor(std::ostream& os, const DenseMatrix& m,
                  Dtype dtype = Dtype::f64,
                  std::span<const std::uint64_t> dims = {});
DenseMatrix read_tensor(std::istream& is, TensorHeader* header = nullptr);

void write_u32_tensor(std::ostream& os, std::span<const std::uint32_t> words,
                      std::span<const std::uint64_t> dims);
std::vector<std::uint32_t> read_u32_tensor(std::istream& is,
                                           TensorHeader* header = nullptr);

// File forms reject trailing bytes after the record.
void write_tensor(const std::filesystem::path& path, const DenseMatrix& m,
                  Dtype dtype = Dtype::f64,
                  std::span<const std::uint64_t> dims = {});
DenseMatrix read_tensor(const std::filesystem::path& path,
                        TensorHeader* header = nullptr);
void write_u32_tensor(const std::filesystem::path& path,
                      std::span<const std::uint32_t> words,
                      std::span<const std::uint64_t> dims);
std::vector<std::uint32_t> read_u32_tensor(const std::filesystem::path& path,
                                           TensorHeader* header = nullptr);

}  // namespace dash
