// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include "dash/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace dash {

namespace {

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  os.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(U)> buf;
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw FormatError(std::string("tensor: truncated ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

void write_header(std::ostream& os, Dtype dtype,
                  std::span<const std::uint64_t> dims) {
  if (dims.size() > 255) throw ShapeError("tensor: more than 255 dimensions");
  os.write(kTensorMagic, sizeof(kTensorMagic));
  put_le<std::uint32_t>(os, kTensorVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(os, d);
}

TensorHeader read_header(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic))) {
    throw FormatError("tensor: truncated magic");
  }
  if (std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw FormatError("tensor: bad magic");
  }
  const auto version = get_le<std::uint32_t>(is, "version");
  if (version != kTensorVersion) {
    throw FormatError("tensor: unsupported version " + std::to_string(version));
  }
  const auto dtype = get_le<std::uint8_t>(is, "dtype");
  if (dtype > 2) throw FormatError("tensor: unknown dtype " + std::to_string(dtype));
  const auto ndim = get_le<std::uint8_t>(is, "ndim");
  TensorHeader h;
  h.dtype = static_cast<Dtype>(dtype);
  h.dims.resize(ndim);
  for (auto& d : h.dims) d = get_le<std::uint64_t>(is, "dims");
  h.element_count();  // validates overflow
  return h;
}

std::pair<std::size_t, std::size_t> matrix_shape(
    std::span<const std::uint64_t> dims) {
  if (dims.empty()) return {1, 1};
  if (dims.size() == 1) return {1, static_cast<std::size_t>(dims[0])};
  std::uint64_t cols = 1;
  for (std::size_t i = 1; i < dims.size(); ++i) cols *= dims[i];
  return {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(cols)};
}

void expect_eof(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("tensor: trailing bytes after payload");
  }
}

}  // namespace

std::uint64_t TensorHeader::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / 8 / d) {
      throw FormatError("tensor: dimension product overflows");
    }
    n *= d;
  }
  return n;
}

void write_tensor(std::ostream& os, const DenseMatrix& m, Dtype dtype,
                  std::span<const std::uint64_t> dims) {
  std::vector<std::uint64_t> shape;
  if (dims.empty()) {
    shape = {m.rows(), m.cols()};
  } else {
    shape.assign(dims.begin(), dims.end());
    TensorHeader h{dtype, shape};
    if (h.element_count() != m.size()) {
      throw ShapeError("write_tensor: dims do not match matrix size");
    }
  }
  if (dtype == Dtype::u32) {
    throw ShapeError("write_tensor: use write_u32_tensor for u32 payloads");
  }
  write_header(os, dtype, shape);
  for (double v : m.flat()) {
    if (dtype == Dtype::f64) {
      put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le<std::uint32_t>(os,
                            std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (!os) throw FormatError("write_tensor: stream write failed");
}

DenseMatrix read_tensor(std::istream& is, TensorHeader* header) {
  TensorHeader h = read_header(is);
  if (h.dtype == Dtype::u32) {
    throw FormatError("read_tensor: u32 payload is not a real matrix");
  }
  const auto count = h.element_count();
  auto [rows, cols] = matrix_shape(h.dims);
  std::vector<double> data(count);
  for (auto& v : data) {
    if (h.dtype == Dtype::f64) {
      v = std::bit_cast<double>(get_le<std::uint64_t>(is, "payload"));
    } else {
      v = std::bit_cast<float>(get_le<std::uint32_t>(is, "payload"));
    }
  }
  if (header) *header = h;
  return DenseMatrix(rows, cols, std::move(data));
}

void write_u32_tensor(std::ostream& os, std::span<const std::uint32_t> words,
                      std::span<const std::uint64_t> dims) {
  TensorHeader h{Dtype::u32, {dims.begin(), dims.end()}};
  if (h.element_count() != words.size()) {
    throw ShapeError("write_u32_tensor: dims do not match word count");
  }
  write_header(os, Dtype::u32, dims);
  for (auto w : words) put_le<std::uint32_t>(os, w);
  if (!os) throw FormatError("write_u32_tensor: stream write failed");
}

std::vector<std::uint32_t> read_u32_tensor(std::istream& is,
                                           TensorHeader* header) {
  TensorHeader h = read_header(is);
  if (h.dtype != Dtype::u32) {
    throw FormatError("read_u32_tensor: payload dtype is not u32");
  }
  std::vector<std::uint32_t> words(h.element_count());
  for (auto& w : words) w = get_le<std::uint32_t>(is, "payload");
  if (header) *header = h;
  return words;
}

void write_tensor(const std::filesystem::path& path, const DenseMatrix& m,
                  Dtype dtype, std::span<const std::uint64_t> dims) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, m, dtype, dims);
}

DenseMatrix read_tensor(const std::filesystem::path& path,
                        TensorHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  auto m = read_tensor(is, header);
  expect_eof(is);
  return m;
}

void write_u32_tensor(const std::filesystem::path& path,
                      std::span<const std::uint32_t> words,
                      std::span<const std::uint64_t> dims) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_u32_tensor(os, words, dims);
}

std::vector<std::uint32_t> read_u32_tensor(const std::filesystem::path& path,
                                           TensorHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  auto w = read_u32_tensor(is, header);
  expect_eof(is);
  return w;
}

}  // namespace dash
