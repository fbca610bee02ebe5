#include <gtest/gtest.h>

#include "dissipic/matrix_core.hpp"
#include "dissipic/sdp.hpp"
#include "support/random.hpp"

using namespace dissipic;
using testing_support::randn;

namespace {

// Lyapunov feasibility: P >= I, A^T P + P A + 2 shift P <= -eps I.
SdpSolution lyapunov(const Mat& a, double shift, double eps) {
  SdpProblem p;
  const Variable pv = p.add_variable(a.rows(), a.rows(), VarKind::Symmetric, "P");
  const AffineExpr pe = p.expr(pv);
  p.add_psd(pe - AffineExpr(eye(a.rows())), 0.0, "P >= I");
  p.add_nsd(transpose(a) * pe + pe * a + 2.0 * shift * pe, eps, "lyap");
  return solve_sdp(p);
}

}  // namespace

TEST(SolveSdp, MinimizeScalarOnPsdCone) {
  SdpProblem p;
  const Variable x = p.add_scalar("x");
  p.add_psd(p.expr(x));
  p.minimize(p.expr(x));
  const SdpSolution s = solve_sdp(p);
  ASSERT_TRUE(s.feasible());
  EXPECT_NEAR(s.scalar(x), 0.0, 1e-7);
}

TEST(SolveSdp, LyapunovStableAndUnstable) {
  SdpProblem p;
  const Variable pv = p.add_variable(2, 2, VarKind::Symmetric, "P");
  const AffineExpr pe = p.expr(pv);
  Mat a(2, 2);
  a << -1, 0, 0, -2;
  p.add_psd(pe, tol::kStrict);
  p.add_nsd(transpose(a) * pe + pe * a, tol::kStrict);
  const SdpSolution s = solve_sdp(p);
  ASSERT_TRUE(s.feasible());
  const Mat pval = s.value(pv);
  EXPECT_GE(lambda_min(pval), tol::kStrict - tol::kFeas);
  EXPECT_LE(lambda_max(a.transpose() * pval + pval * a), -tol::kStrict + tol::kFeas);

  SdpProblem q;
  const Variable qv = q.add_variable(1, 1, VarKind::Symmetric, "P");
  const AffineExpr qe = q.expr(qv);
  const Mat one = Mat::Constant(1, 1, 1.0);
  q.add_psd(qe, tol::kStrict);
  q.add_nsd(one * qe + qe * one, tol::kStrict);
  EXPECT_FALSE(solve_sdp(q).feasible());
}

TEST(SolveSdp, LyapunovAgreesWithEigenvaluesOnRandomMatrices) {
  std::mt19937_64 rng(11);
  const double margin = 1e-4;
  int checked = 0;
  for (int k = 0; k < 200; ++k) {
    Mat a = randn(rng, 4, 4);
    a -= testing_support::uniform(rng, 0.0, 3.0) * eye(4);
    const double abscissa = a.eigenvalues().real().maxCoeff();
    if (std::abs(abscissa + margin) < 1e-3) continue;  // too close to call at solver precision
    ++checked;
    const bool stable = abscissa < -margin;
    EXPECT_EQ(lyapunov(a, margin, 0.0).feasible(), stable) << "abscissa " << abscissa;
  }
  EXPECT_GT(checked, 190);
}

TEST(SolveSdp, FrobeniusProjectionOntoPsdCone) {
  // Nearest PSD matrix to a symmetric target clips negative eigenvalues.
  std::mt19937_64 rng(12);
  for (int k = 0; k < 10; ++k) {
    const Mat target = testing_support::rand_sym(rng, 4);
    SdpProblem p;
    const Variable x = p.add_variable(4, 4, VarKind::Symmetric, "X");
    p.add_psd(p.expr(x));
    const Variable tau = add_frobenius_epigraph(p, p.expr(x) - AffineExpr(target));
    p.minimize(p.expr(tau));
    const SdpSolution s = solve_sdp(p);
    ASSERT_TRUE(s.feasible());
    const SymEig e = eig_sym(target);
    const Mat clipped = e.vectors * e.values.cwiseMax(0.0).asDiagonal() * e.vectors.transpose();
    // The minimizer is only determined to about sqrt(gap); the optimal value is sharp.
    EXPECT_LE(max_abs(s.value(x) - clipped), 1e-4);
    EXPECT_NEAR(s.objective, (clipped - target).norm(), 1e-7);
  }
}

TEST(SolveSdp, LinearProgramWithNonnegAndSoc) {
  // min x + y s.t. x >= 1, y >= 2, ||(x, y)|| <= 10.
  SdpProblem p;
  const Variable v = p.add_variable(2, 1, VarKind::Full, "v");
  Vec lo(2);
  lo << 1, 2;
  p.add_nonneg(p.expr(v) - AffineExpr(Mat(lo)));
  p.add_soc(AffineExpr(Mat::Constant(1, 1, 10.0)), p.expr(v));
  p.minimize(Mat(Mat::Ones(1, 2)) * p.expr(v));
  const SdpSolution s = solve_sdp(p);
  ASSERT_TRUE(s.feasible());
  EXPECT_NEAR(s.objective, 3.0, 1e-7);

  SdpProblem q;
  const Variable w = q.add_variable(2, 1, VarKind::Full, "w");
  q.add_nonneg(q.expr(w) - AffineExpr(Mat(Vec::Constant(2, 8.0))));
  q.add_soc(AffineExpr(Mat::Constant(1, 1, 10.0)), q.expr(w));
  EXPECT_FALSE(solve_sdp(q).feasible());
}
