// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dash {

// Packs a chunk index set into ceil(num_chunks/32) words; bit c of word c/32
// is set iff c is in `support`. Throws RangeError for c >= num_chunks.
std::vector<std::uint32_t> pack_mask(std::span<const std::size_t> support,
                                     std::size_t num_chunks);
std::vector<std::size_t> unpack_mask(std::span<const std::uint32_t> words);

// Bit-packed active-chunk mask, one row per (query, kv head), rows ordered
// query-major / kv-head-minor. Only routed chunks live here; the diagonal
// window is implied by the query position.
class BlockMask {
 public:
  BlockMask() = default;
  BlockMask(std::size_t rows, std::size_t num_chunks);

  std::size_t rows() const { return rows_; }
  std::size_t num_chunks() const { return num_chunks_; }
  std::size_t words_per_row() const { return words_per_row_; }
  const std::vector<std::uint32_t>& words() const { return words_; }

  std::span<std::uint32_t> row(std::size_t r) {
    return {words_.data() + r * words_per_row_, words_per_row_};
  }
  std::span<const std::uint32_t> row(std::size_t r) const {
    return {words_.data() + r * words_per_row_, words_per_row_};
  }

  void set(std::size_t r, std::size_t c);
  bool test(std::size_t r, std::size_t c) const;
  void assign_row(std::size_t r, std::span<const std::size_t> support);

  std::size_t popcount(std::size_t r) const;
  std::size_t total_popcount() const;

  // Calls fn(c) for every set bit of row r in ascending order.
  template <typename Fn>
  void for_each_active(std::size_t r, Fn&& fn) const {
    auto ws = row(r);
    for (std::size_t w = 0; w < ws.size(); ++w) {
      std::uint32_t bits = ws[w];
      while (bits != 0) {
        const int b = std::countr_zero(bits);
        fn(w * 32 + static_cast<std::size_t>(b));
        bits &= bits - 1;
      }
    }
  }
  std::vector<std::size_t> active(std::size_t r) const;

  bool operator==(const BlockMask&) const = default;

  // Tensor-format record, dtype u32, dims {n, h_kv, words_per_row}.
  void write(const std::filesystem::path& path, std::size_t h_kv) const;
  // Rejects a word count inconsistent with num_chunks or bits set past it.
  static BlockMask read(const std::filesystem::path& path,
                        std::size_t num_chunks);

 private:
  std::size_t rows_ = 0;
  std::size_t num_chunks_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint32_t> words_;
};

}  // namespace dash
