// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dash/errors.hpp"

namespace dash {

// Row-major dense matrix. Entries are checked for finiteness when the matrix
// is built from external data; element-wise mutation through at()/row() is
// unchecked so callers can deliberately poison memory in tests.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, T(0)) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
    for (T v : data_) {
      if (!std::isfinite(v)) throw DomainError("matrix entry is not finite");
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  T& at(std::size_t r, std::size_t c) {
    check(r, c);
    return data_[r * cols_ + c];
  }
  T at(std::size_t r, std::size_t c) const {
    check(r, c);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  // Sub-row [r, offset, offset + len): a head slice of a packed
  // (tokens x heads*head_dim) matrix.
  std::span<T> slice(std::size_t r, std::size_t offset, std::size_t len) {
    return {data_.data() + r * cols_ + offset, len};
  }
  std::span<const T> slice(std::size_t r, std::size_t offset,
                           std::size_t len) const {
    return {data_.data() + r * cols_ + offset, len};
  }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const BasicMatrix& o) const = default;

 private:
  void check(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) {
      throw RangeError("matrix index (" + std::to_string(r) + "," +
                       std::to_string(c) + ") out of " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseMatrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

// Standard product; the k-loop accumulates in ascending index order.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a);

template <typename To, typename From>
BasicMatrix<To> cast(const BasicMatrix<From>& m) {
  BasicMatrix<To> out(m.rows(), m.cols());
  auto src = m.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<To>(src[i]);
  return out;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T acc = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace dash
