// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "qrep/error.hpp"
#include "qrep/tensor.hpp"

namespace qrep {
namespace {

TEST(TensorTest, ConstructionChecksElementCount) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(t.reshaped({3, 2}).at(2, 0), 5.0);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(TensorTest, RequireFiniteRejectsNanAndInf) {
  Tensor ok({2}, {1.0, -2.0});
  EXPECT_NO_THROW(require_finite(ok, "ok"));
  Tensor bad({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(require_finite(bad, "bad"), DomainError);
  Tensor inf({1}, {std::numeric_limits<double>::infinity()});
  EXPECT_THROW(require_finite(inf, "inf"), DomainError);
}

TEST(MatmulTest, IdentityTimesIdentity) { EXPECT_EQ(matmul(identity(2), identity(2)), identity(2)); }

TEST(MatmulTest, HandEvaluatedProduct) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {0, 1});
  EXPECT_EQ(matmul(a, b), Tensor({2, 1}, {2, 4}));
}

TEST(MatmulTest, ZeroAnnihilates) {
  std::mt19937_64 rng(7);
  Tensor a = oracle::random_tensor({3, 4}, rng);
  EXPECT_EQ(matmul(a, Tensor({4, 5})), Tensor({3, 5}));
}

TEST(MatmulTest, IdentityIsExactOnRandomInput) {
  std::mt19937_64 rng(8);
  Tensor a = oracle::random_tensor({6, 9}, rng);
  EXPECT_EQ(matmul(identity(6), a), a);
  EXPECT_EQ(matmul(a, identity(9)), a);
}

TEST(MatmulTest, MatchesReferenceBitwise) {
  // Same summation order as the reference, so results agree exactly.
  std::mt19937_64 rng(9);
  Tensor a = oracle::random_tensor({5, 7}, rng), b = oracle::random_tensor({7, 3}, rng);
  EXPECT_EQ(oracle::max_abs_diff(oracle::matmul(oracle::to_mat(a), oracle::to_mat(b)), matmul(a, b)), 0.0);
}

TEST(MatmulTest, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  EXPECT_THROW(matmul(Tensor({6}), Tensor({6, 1})), DimensionError);
}

TEST(SoftmaxTest, SymmetricRow) {
  Tensor y = rowwise_softmax(Tensor({1, 2}, {0, 0}));
  EXPECT_EQ(y[0], 0.5);
  EXPECT_EQ(y[1], 0.5);
}

TEST(SoftmaxTest, ClosedFormRow) {
  Tensor y = rowwise_softmax(Tensor({1, 2}, {std::log(1.0), std::log(3.0)}));
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(SoftmaxTest, LargeLogitDoesNotOverflow) {
  Tensor y = rowwise_softmax(Tensor({1, 2}, {1000, 0}));
  EXPECT_TRUE(std::isfinite(y[0]));
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
}

TEST(SoftmaxTest, RowsSumToOneAndAreShiftInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = oracle::random_tensor({4, 13}, rng, 5.0);
    Tensor shifted = x;
    for (std::size_t r = 0; r < 4; ++r) {
      double c = shift(rng);
      for (std::size_t j = 0; j < 13; ++j) shifted.at(r, j) += c;
    }
    Tensor y = rowwise_softmax(x), ys = rowwise_softmax(shifted);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 13; ++j) {
        EXPECT_GE(y.at(r, j), 0.0);
        sum += y.at(r, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    EXPECT_LE(max_abs_diff(y, ys), 1e-12);
  }
}

TEST(GeluTest, Examples) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-12);
  EXPECT_NEAR(gelu(-10.0), 0.0, 1e-12);
}

TEST(GeluTest, AgreesWithErfForm) {
  for (double x = -8.0; x <= 8.0; x += 0.03125) EXPECT_NEAR(gelu(x), oracle::gelu(x), 1e-15) << x;
}

TEST(TensorOpsTest, ColumnSliceAndConcatRoundTrip) {
  std::mt19937_64 rng(12);
  Tensor a = oracle::random_tensor({3, 8}, rng);
  std::vector<Tensor> parts = {slice_columns(a, 0, 3), slice_columns(a, 3, 5)};
  EXPECT_EQ(concat_columns(parts), a);
  EXPECT_THROW(slice_columns(a, 6, 3), DimensionError);
}

TEST(TensorOpsTest, ConcatRowsAndBatchItem) {
  Tensor a({1, 2, 2}, {1, 2, 3, 4}), b({1, 2, 2}, {5, 6, 7, 8});
  std::vector<Tensor> parts = {a, b};
  Tensor c = concat_rows(parts);
  EXPECT_EQ(c.shape(), (Shape{2, 2, 2}));
  EXPECT_EQ(batch_item(c, 1), Tensor({2, 2}, {5, 6, 7, 8}));
}

TEST(TensorOpsTest, Metrics) {
  Tensor a({3}, {1, 2, 3}), b({3}, {1, 2, 5});
  EXPECT_DOUBLE_EQ(mean_squared_error(a, b), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 2.0);
  EXPECT_DOUBLE_EQ(max_abs(b), 5.0);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_THROW(mean_squared_error(a, Tensor({2})), DimensionError);
}

}  // namespace
}  // namespace qrep
