#include <gtest/gtest.h>

#include "dissipic/affine_expr.hpp"
#include "dissipic/matrix_core.hpp"
#include "support/random.hpp"

using namespace dissipic;
using testing_support::rand_psd;
using testing_support::rand_sym;
using testing_support::randn;

TEST(EigSym, DiagonalAndSwap) {
  SymEig e = eig_sym(Eigen::Vector2d(2, 1).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(e.values(0), 1.0, 1e-15);
  EXPECT_NEAR(e.values(1), 2.0, 1e-15);
  Mat swap(2, 2);
  swap << 0, 1, 1, 0;
  e = eig_sym(swap);
  EXPECT_NEAR(e.values(0), -1.0, 1e-15);
  EXPECT_NEAR(e.values(1), 1.0, 1e-15);
}

TEST(EigSym, RecompositionOnRandomSymmetric) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Mat m = rand_sym(rng, 5);
    const SymEig e = eig_sym(m);
    const Mat back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LE(max_abs(back - m), 1e-9 * m.norm());
    for (int i = 1; i < 5; ++i) EXPECT_LE(e.values(i - 1), e.values(i));
  }
}

TEST(EigSym, RejectsBadInput) {
  EXPECT_THROW(eig_sym(Mat::Zero(2, 3)), Error);
  Mat a(2, 2);
  a << 1, 2, 0, 1;
  try {
    eig_sym(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSymmetric);
  }
}

TEST(IsPsd, Examples) {
  EXPECT_TRUE(is_psd(Mat::Zero(3, 3), 1e-8));
  EXPECT_TRUE(is_psd(Eigen::Vector2d(1, -1e-12).asDiagonal().toDenseMatrix(), 1e-8));
  EXPECT_FALSE(is_psd(Eigen::Vector2d(1, -1).asDiagonal().toDenseMatrix(), 1e-8));
}

TEST(SymBlock, MaterializeIsExactlySymmetric) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    SymBlock b({2, 3, 1});
    b.set(0, 0, rand_sym(rng, 2));
    b.set(0, 1, randn(rng, 2, 3));
    b.set(0, 2, randn(rng, 2, 1));
    b.set(1, 1, rand_sym(rng, 3));
    b.set(2, 2, rand_sym(rng, 1));
    const Mat m = b.materialize();
    EXPECT_TRUE((m.array() == m.transpose().array()).all());
    EXPECT_EQ(max_abs(b.get(1, 0) - b.get(0, 1).transpose()), 0.0);
  }
  SymBlock b({2, 2});
  EXPECT_THROW(b.set(1, 0, Mat::Zero(2, 2)), Error);
  EXPECT_THROW(b.set(0, 1, Mat::Zero(2, 3)), Error);
}

TEST(SchurComplement, Examples) {
  Mat m = schur_complement_nsd(-eye(2), Mat::Zero(1, 2)).materialize();
  Mat expect = Mat::Zero(3, 3);
  expect.diagonal() << -1, -1, -1;
  EXPECT_EQ(max_abs(m - expect), 0.0);

  m = schur_complement_nsd(Mat::Constant(1, 1, -2.0), Mat::Constant(1, 1, 1.0)).materialize();
  EXPECT_LE(lambda_max(m), 0.0);
  m = schur_complement_nsd(Mat::Constant(1, 1, 0.0), Mat::Constant(1, 1, 1.0)).materialize();
  EXPECT_GT(lambda_max(m), 0.0);

  try {
    schur_complement_nsd(eye(2), Mat::Zero(1, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(SchurComplement, VerdictMatchesReducedForm) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const Mat f = rand_sym(rng, 4) - 1.5 * eye(4);
    const Mat l = randn(rng, 2, 4, 0.5);
    const bool full = lambda_max(schur_complement_nsd(f, l).materialize()) <= 0.0;
    const bool reduced = lambda_max(f + l.transpose() * l) <= 0.0;
    EXPECT_EQ(full, reduced);
  }
}

TEST(FactorGram, Examples) {
  Mat l = factor_gram(eye(3));
  EXPECT_LE(max_abs(l.transpose() * l - eye(3)), 1e-12);
  EXPECT_EQ(factor_gram(Mat::Zero(2, 2)).rows(), 0);
  Mat m(2, 2);
  m << 4, 2, 2, 1;
  l = factor_gram(m);
  ASSERT_EQ(l.rows(), 1);
  EXPECT_LE(max_abs(l.transpose() * l - m), 1e-12);
  EXPECT_NEAR(std::abs(l(0, 0)), 2.0, 1e-12);
  EXPECT_NEAR(std::abs(l(0, 1)), 1.0, 1e-12);
  try {
    factor_gram(-eye(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPsd);
  }
}

TEST(FactorGram, RoundTripOnRandomPsd) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 1000; ++k) {
    const int n = 1 + k % 6;
    const int rank = k % (n + 1);
    const Mat m = rand_psd(rng, n, rank);
    const Mat l = factor_gram(m);
    EXPECT_LE((l.transpose() * l - m).norm(), 1e-9 * std::max(1.0, m.norm()));
    EXPECT_LE(l.rows(), n);
  }
}

TEST(AffineExpr, EvaluateAndAlgebra) {
  std::mt19937_64 rng(5);
  const Mat c0 = randn(rng, 2, 3);
  const Mat a1 = randn(rng, 2, 3);
  const Mat a2 = randn(rng, 2, 3);
  AffineExpr e = AffineExpr::from_terms(c0, {{1, a2}, {0, a1}});
  Vec y(2);
  y << 0.3, -1.2;
  EXPECT_LE(max_abs(e.evaluate(y) - (c0 + 0.3 * a1 - 1.2 * a2)), 1e-14);

  const Mat k = randn(rng, 4, 2);
  const Mat r = randn(rng, 3, 3);
  const AffineExpr prod = k * e * r + k * c0 * r;
  EXPECT_LE(max_abs(prod.evaluate(y) - (k * e.evaluate(y) * r + k * c0 * r)), 1e-12);
  EXPECT_LE(max_abs(transpose(e).evaluate(y) - e.evaluate(y).transpose()), 0.0);

  const AffineExpr big = affine_block_matrix({{e, AffineExpr(Mat::Zero(2, 1))}, {e.block(1, 0, 1, 3), c0.block(0, 0, 1, 1)}});
  const Mat bigv = big.evaluate(y);
  EXPECT_EQ(bigv.rows(), 3);
  EXPECT_EQ(bigv.cols(), 4);
  EXPECT_LE(max_abs(bigv.block(0, 0, 2, 3) - e.evaluate(y)), 0.0);
  EXPECT_THROW(e + AffineExpr(Mat::Zero(3, 3)), Error);
}
