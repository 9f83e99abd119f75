// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/block_mask.hpp"

#include <algorithm>
#include <string>

#include "dash/errors.hpp"
#include "dash/tensor_io.hpp"

namespace dash {

std::vector<std::uint32_t> pack_mask(std::span<const std::size_t> support,
                                     std::size_t num_chunks) {
  std::vector<std::uint32_t> words((num_chunks + 31) / 32, 0u);
  for (std::size_t c : support) {
    if (c >= num_chunks) {
      throw RangeError("pack_mask: chunk " + std::to_string(c) +
                       " >= T_c = " + std::to_string(num_chunks));
    }
    words[c / 32] |= 1u << (c % 32);
  }
  return words;
}

std::vector<std::size_t> unpack_mask(std::span<const std::uint32_t> words) {
  std::vector<std::size_t> out;
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::uint32_t bits = words[w];
    while (bits != 0) {
      out.push_back(w * 32 + static_cast<std::size_t>(std::countr_zero(bits)));
      bits &= bits - 1;
    }
  }
  return out;
}

BlockMask::BlockMask(std::size_t rows, std::size_t num_chunks)
    : rows_(rows),
      num_chunks_(num_chunks),
      words_per_row_((num_chunks + 31) / 32),
      words_(rows * words_per_row_, 0u) {}

void BlockMask::set(std::size_t r, std::size_t c) {
  if (r >= rows_ || c >= num_chunks_) {
    throw RangeError("BlockMask::set: (" + std::to_string(r) + ", " +
                     std::to_string(c) + ") out of range");
  }
  words_[r * words_per_row_ + c / 32] |= 1u << (c % 32);
}

bool BlockMask::test(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= num_chunks_) return false;
  return (words_[r * words_per_row_ + c / 32] >> (c % 32)) & 1u;
}

void BlockMask::assign_row(std::size_t r,
                           std::span<const std::size_t> support) {
  if (r >= rows_) throw RangeError("BlockMask::assign_row: row out of range");
  auto packed = pack_mask(support, num_chunks_);
  auto dst = row(r);
  std::copy(packed.begin(), packed.end(), dst.begin());
}

std::size_t BlockMask::popcount(std::size_t r) const {
  std::size_t n = 0;
  for (auto w : row(r)) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t BlockMask::total_popcount() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::size_t> BlockMask::active(std::size_t r) const {
  std::vector<std::size_t> out;
  for_each_active(r, [&](std::size_t c) { out.push_back(c); });
  return out;
}

void BlockMask::write(const std::filesystem::path& path,
                      std::size_t h_kv) const {
  if (h_kv == 0 || rows_ % h_kv != 0) {
    throw ShapeError("BlockMask::write: rows not divisible by h_kv");
  }
  const std::uint64_t dims[3] = {rows_ / h_kv, h_kv, words_per_row_};
  write_u32_tensor(path, words_, dims);
}

BlockMask BlockMask::read(const std::filesystem::path& path,
                          std::size_t num_chunks) {
  TensorHeader h;
  auto words = read_u32_tensor(path, &h);
  const std::size_t wpr = (num_chunks + 31) / 32;
  if (h.dims.empty() || h.dims.back() != wpr) {
    throw FormatError("BlockMask::read: row width does not match T_c");
  }
  BlockMask m(wpr == 0 ? 0 : words.size() / wpr, num_chunks);
  if (wpr == 0) {
    std::uint64_t rows = 1;
    for (std::size_t i = 0; i + 1 < h.dims.size(); ++i) rows *= h.dims[i];
    m = BlockMask(rows, num_chunks);
  }
  m.words_ = std::move(words);
  if (num_chunks % 32 != 0) {
    const std::uint32_t tail_mask = ~((1u << (num_chunks % 32)) - 1u);
    for (std::size_t r = 0; r < m.rows_; ++r) {
      if (m.row(r).back() & tail_mask) {
        throw FormatError("BlockMask::read: bit set at chunk >= T_c");
      }
    }
  }
  return m;
}

}  // namespace dash
