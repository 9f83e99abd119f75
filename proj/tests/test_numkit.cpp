// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "dash/errors.hpp"
#include "dash/matrix.hpp"
#include "dash/parallel.hpp"
#include "dash/rng.hpp"
#include "dash/softmax.hpp"
#include "dash/tensor_io.hpp"

namespace dash {
namespace {

TEST(Matrix, DataConstructorChecksLengthAndFiniteness) {
  EXPECT_THROW(DenseMatrix(2, 2, {1, 2, 3}), ShapeError);
  EXPECT_THROW(DenseMatrix(1, 2, {1, std::nan("")}), DomainError);
  EXPECT_THROW(DenseMatrix(1, 1, {std::numeric_limits<double>::infinity()}),
               DomainError);
  EXPECT_THROW(DenseMatrix(2, 2).at(2, 0), RangeError);
}

TEST(Matrix, MatmulAgainstHandValues) {
  const DenseMatrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const DenseMatrix b(3, 2, {7, 8, 9, 10, 11, 12});
  const DenseMatrix c = matmul(a, b);
  EXPECT_EQ(c, DenseMatrix(2, 2, {58, 64, 139, 154}));
  EXPECT_EQ(matmul(a, DenseMatrix::identity(3)), a);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Matrix, TransposeAndCast) {
  const DenseMatrix a(2, 3, {1, 2, 3, 4, 5, 6});
  const DenseMatrix t = transpose(a);
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t(2, 1), 6.0);
  EXPECT_EQ(transpose(t), a);
  const MatrixF f = cast<float>(a);
  EXPECT_EQ(f(1, 2), 6.0f);
}

TEST(Matrix, MaxAbsDiffPropagatesNan) {
  DenseMatrix a(1, 2);
  DenseMatrix b(1, 2);
  b(0, 1) = 0.5;
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 0.5);
  b(0, 0) = std::nan("");
  EXPECT_TRUE(std::isnan(max_abs_diff(a, b)));
}

TEST(Rng, DeterministicPerSeedAndSeekable) {
  Rng a(42);
  Rng b(42);
  Rng c(43);
  std::vector<std::uint64_t> xs;
  for (int i = 0; i < 16; ++i) {
    xs.push_back(a.next_u64());
    EXPECT_EQ(xs.back(), b.next_u64());
  }
  EXPECT_NE(xs[0], c.next_u64());
  a.seek(5);
  EXPECT_EQ(a.next_u64(), xs[5]);
  EXPECT_NE(Rng(42).fork(1).next_u64(), Rng(42).fork(2).next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(7);
  const int n = 200000;
  double su = 0.0;
  double sn = 0.0;
  double sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 5e-3);
  EXPECT_NEAR(sn / n, 0.0, 1e-2);
  EXPECT_NEAR(sn2 / n, 1.0, 2e-2);
}

TEST(Rng, UniformIndexCoversRangeWithoutBias) {
  Rng rng(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_index(5)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(9);
  std::vector<int> xs(100);
  for (int i = 0; i < 100; ++i) xs[i] = i;
  rng.shuffle(std::span<int>(xs));
  std::vector<int> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  int fixed = 0;
  for (int i = 0; i < 100; ++i) fixed += xs[i] == i;
  EXPECT_LT(fixed, 10);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(1);
  const DenseMatrix z = random_normal(4, 9, rng, 3.0);
  const DenseMatrix p = row_softmax(z);
  DenseMatrix shifted = z;
  for (double& v : shifted.flat()) v += 123.0;
  const DenseMatrix ps = row_softmax(shifted);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
  EXPECT_LT(max_abs_diff(p, ps), 1e-14);
}

TEST(Softmax, MaskedEntriesAreExactlyZero) {
  const DenseMatrix z(2, 3, {1, 2, 3, 4, 5, 6});
  BoolMatrix mask(2, 3, {1, 0, 1, 0, 0, 1});
  const DenseMatrix p = row_softmax(z, mask);
  EXPECT_EQ(p(0, 1), 0.0);
  EXPECT_EQ(p(1, 0), 0.0);
  EXPECT_EQ(p(1, 2), 1.0);
  EXPECT_NEAR(p(0, 0) + p(0, 2), 1.0, 1e-15);
  BoolMatrix none(2, 3);
  EXPECT_THROW(row_softmax(z, none), DegenerateRowError);
}

TEST(Softmax, LogSumExpIsStable) {
  const std::vector<double> x = {1000.0, 1000.0};
  EXPECT_NEAR(log_sum_exp(x), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
}

TEST(TensorIo, RoundTripsEveryDtype) {
  Rng rng(2);
  const DenseMatrix m = random_normal(3, 4, rng);
  std::stringstream ss;
  const std::uint64_t dims[] = {3, 2, 2};
  write_tensor(ss, m, Dtype::f64, dims);
  write_tensor(ss, m, Dtype::f32);
  const std::uint32_t words[] = {1, 0xFFFFFFFFu, 33};
  const std::uint64_t wdims[] = {3};
  write_u32_tensor(ss, words, wdims);

  TensorHeader h;
  EXPECT_EQ(read_tensor(ss, &h), m);
  EXPECT_EQ(h.dims, (std::vector<std::uint64_t>{3, 2, 2}));
  const DenseMatrix f = read_tensor(ss, &h);
  EXPECT_EQ(h.dtype, Dtype::f32);
  EXPECT_LT(max_abs_diff(f, m), 1e-6);
  EXPECT_EQ(read_u32_tensor(ss), (std::vector<std::uint32_t>{1, 0xFFFFFFFFu, 33}));
}

TEST(TensorIo, RejectsCorruptInput) {
  std::stringstream bad("NOTATENSOR");
  EXPECT_THROW(read_tensor(bad), FormatError);

  std::stringstream ss;
  write_tensor(ss, DenseMatrix(2, 2, {1, 2, 3, 4}));
  const std::string full = ss.str();
  std::stringstream truncated(full.substr(0, full.size() - 3));
  EXPECT_THROW(read_tensor(truncated), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "dash_trailing.t";
  {
    std::ofstream os(path, std::ios::binary);
    os << full << "x";
  }
  EXPECT_THROW(read_tensor(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Parallel, VisitsEveryIndexOnceAndRethrows) {
  const std::size_t saved = max_threads();
  set_max_threads(4);
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(100,
                            [](std::size_t i) {
                              if (i == 57) throw DomainError("boom");
                            }),
               DomainError);
  set_max_threads(saved);
}

}  // namespace
}  // namespace dash
