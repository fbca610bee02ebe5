#include <gtest/gtest.h>

#include <cmath>

#include "dissipic/certify.hpp"
#include "dissipic/matrix_core.hpp"
#include "support/oracles.hpp"

using namespace dissipic;
using namespace testing_support;

namespace {

IqcSpec no_uncertainty() { return IqcSpec::quadratic(Mat::Zero(0, 0), 0); }

UncertainLtiSystem lti(const Mat& a, const Mat& b, const Mat& c, const Mat& d) {
  const Eigen::Index n = a.rows();
  return {a, zeros(n, 0), b, zeros(0, n), zeros(0, 0), zeros(0, b.cols()), c, zeros(c.rows(), 0), d};
}

UncertainLtiSystem first_order() {
  return lti(Mat::Constant(1, 1, -1.0), Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Zero(1, 1));
}

// Peak singular value of C (jwI - A)^-1 B + D over a dense grid (a lower
// bound on the H-infinity norm that is tight for smooth responses).
double hinf_on_grid(const UncertainLtiSystem& s) {
  const StateSpace g{s.A, s.B_d, s.C_e, s.D_ed};
  double peak = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double w = i == 0 ? 0.0 : std::pow(10.0, -3.0 + 6.0 * i / 4000.0);
    peak = std::max(peak, Eigen::JacobiSVD<Eigen::MatrixXcd>(g.freq_matrix(w)).singularValues()(0));
  }
  return peak;
}

// Quadratic form of the dissipation inequality evaluated from its definition:
// 2 x'P(Ax + B_w w + B_d d) + [v; w]'M[v; w] - [d; e]'X[d; e].
double dissipation_form(const UncertainLtiSystem& s, const Mat& M, const Mat& X, const Mat& P, const Vec& x,
                        const Vec& w, const Vec& d) {
  const Vec xdot = s.A * x + s.B_w * w + s.B_d * d;
  const Vec v = s.C_v * x + s.D_vw * w + s.D_vd * d;
  const Vec e = s.C_e * x + s.D_ew * w + s.D_ed * d;
  Vec vw(v.size() + w.size()), de(d.size() + e.size());
  vw << v, w;
  de << d, e;
  return 2.0 * x.dot(P * xdot) + vw.dot(M * vw) - de.dot(X * de);
}

// Random system whose uncertainty coupling varies from weak to strong, so
// sector-uncertain instances land on both sides of certifiability.
UncertainLtiSystem mixed_system(std::mt19937_64& rng, Eigen::Index n, Eigen::Index nv) {
  UncertainLtiSystem s = random_system(rng, n, nv, 1, 1);
  s.B_w *= std::pow(10.0, uniform(rng, -1.5, 0.5));
  return s;
}

}  // namespace

TEST(Lemma1Lhs, ZeroSystemGivesZeroMatrix) {
  UncertainLtiSystem s{zeros(2, 2), zeros(2, 1), zeros(2, 1), zeros(1, 2), zeros(1, 1),
                       zeros(1, 1), zeros(1, 2), zeros(1, 1), zeros(1, 1)};
  const Mat lhs = lemma1_lhs(s, Mat::Zero(2, 2), SupplyRate::zero(1, 1), eye(2), 0.0);
  EXPECT_EQ(lhs, Mat::Zero(4, 4));
}

TEST(Lemma1Lhs, FirstOrderL2Example) {
  const UncertainLtiSystem s = first_order();
  for (double p : {0.5, 1.0, 2.0}) {
    const Mat lhs = lemma1_lhs(s, Mat::Zero(0, 0), SupplyRate::l2_gain(1.0, 1, 1), Mat::Constant(1, 1, p));
    // 2 p x(-x + d) - d^2 + x^2
    const Mat expected = (Mat(2, 2) << 1.0 - 2.0 * p, p, p, -1.0).finished();
    EXPECT_LE(max_abs(lhs - expected), 1e-15);
  }
  const Mat at_one = lemma1_lhs(s, Mat::Zero(0, 0), SupplyRate::l2_gain(1.0, 1, 1), eye(1));
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Mat>(at_one).eigenvalues();
  EXPECT_NEAR(ev(0), -2.0, 1e-14);
  EXPECT_NEAR(ev(1), 0.0, 1e-14);
}

TEST(Lemma1Lhs, QuadraticFormMatchesDefinition) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const UncertainLtiSystem s = random_system(rng, 3, 2, 2, 2);
    const Mat M = rand_sym(rng, 4), X = rand_sym(rng, 4), P = rand_sym(rng, 3);
    const double lambda = uniform(rng, 0.0, 3.0);
    const Mat lhs = lemma1_lhs(s, M, SupplyRate::from_matrix(X, 2), P, lambda);
    const Vec x = randn_vec(rng, 3), w = randn_vec(rng, 2), d = randn_vec(rng, 2);
    Vec z(7);
    z << x, w, d;
    EXPECT_NEAR(z.dot(lhs * z), dissipation_form(s, lambda * M, X, P, x, w, d), 1e-10);
  }
}

TEST(Verify, LyapunovStabilityAndInstability) {
  std::mt19937_64 rng(3);
  const Mat a = rand_hurwitz(rng, 3, 0.2);
  // No disturbance: with a zero supply any d entering the state is refuted.
  const UncertainLtiSystem stable = lti(a, zeros(3, 0), randn(rng, 1, 3), zeros(1, 0));
  const VerifyResult ok = verify(stable, no_uncertainty(), 0, SupplyRate::zero(0, 1));
  ASSERT_TRUE(ok.feasible());
  EXPECT_LE(ok.cert->feasibility_residual, tol::kFeas);
  EXPECT_GE(lambda_min(ok.cert->P), tol::kStrict - tol::kFeas);

  const UncertainLtiSystem unstable = lti(Mat::Ones(1, 1), zeros(1, 0), Mat::Ones(1, 1), zeros(1, 0));
  EXPECT_FALSE(verify(unstable, no_uncertainty(), 0, SupplyRate::zero(0, 1)).feasible());
  const UncertainLtiSystem disturbed = lti(a, randn(rng, 3, 1), randn(rng, 1, 3), zeros(1, 1));
  EXPECT_FALSE(verify(disturbed, no_uncertainty(), 0, SupplyRate::zero(1, 1)).feasible());
}

TEST(Verify, FirstOrderGainOfOne) {
  const UncertainLtiSystem s = first_order();
  const VerifyResult above = verify(s, no_uncertainty(), 0, SupplyRate::l2_gain(1.1, 1, 1));
  ASSERT_TRUE(above.feasible());
  EXPECT_LE(above.cert->feasibility_residual, tol::kFeas);
  EXPECT_FALSE(verify(s, no_uncertainty(), 0, SupplyRate::l2_gain(0.9, 1, 1)).feasible());
}

TEST(Verify, GainBracketsAndMonotonicityOnRandomStableSystems) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 3;
    const UncertainLtiSystem s = lti(rand_hurwitz(rng, n, 0.3), randn(rng, n, 1), randn(rng, 1, n), randn(rng, 1, 1, 0.5));
    const double g2 = std::pow(hinf_on_grid(s), 2);
    bool seen_feasible = false;
    for (double factor : {0.8, 0.95, 1.05, 1.3, 2.0}) {
      const bool feasible = verify(s, no_uncertainty(), 0, SupplyRate::l2_gain(factor * g2, 1, 1)).feasible();
      if (factor < 1.0) EXPECT_FALSE(feasible) << "trial " << trial << " factor " << factor;
      if (factor > 1.0) EXPECT_TRUE(feasible) << "trial " << trial << " factor " << factor;
      if (seen_feasible) EXPECT_TRUE(feasible);
      seen_feasible = seen_feasible || feasible;
    }
  }
}

TEST(Verify, MonotoneInGammaWithSectorUncertainty) {
  std::mt19937_64 rng(6);
  const IqcSpec sector = IqcSpec::quadratic(sector_multiplier(eye(1)), 1);
  int transitions = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const UncertainLtiSystem s = mixed_system(rng, 3, 1);
    bool seen_feasible = false, seen_before = false;
    for (double g2 : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
      const bool feasible = verify(s, sector, 0, SupplyRate::l2_gain(g2, 1, 1)).feasible();
      if (seen_feasible) EXPECT_TRUE(feasible) << "trial " << trial << " gamma^2 " << g2;
      seen_feasible = seen_feasible || feasible;
      transitions += feasible && g2 > 0.1 && !seen_before;
      seen_before = feasible;
    }
  }
  EXPECT_GT(transitions, 0);
}

TEST(Verify, LambdaCanBeAbsorbedIntoMultiplier) {
  std::mt19937_64 rng(7);
  const Mat m_sector = sector_multiplier(eye(2));
  int feasible_cases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const UncertainLtiSystem s = mixed_system(rng, 3, 2);
    const SupplyRate X = SupplyRate::l2_gain(std::pow(10.0, uniform(rng, -1.0, 2.0)), 1, 1);
    const VerifyResult free = verify(s, IqcSpec::quadratic(m_sector, 2), 0, X);
    const double scale = free.feasible() ? free.cert->lambda_p : 1.0;
    VerifyOptions fixed;
    fixed.fix_lambda = true;
    const VerifyResult absorbed = verify(s, IqcSpec::quadratic(scale * m_sector, 2), 0, X, fixed);
    EXPECT_EQ(free.feasible(), absorbed.feasible()) << "trial " << trial;
    feasible_cases += free.feasible();
  }
  EXPECT_GT(feasible_cases, 0);
  EXPECT_LT(feasible_cases, 20);
}

TEST(Verify, ControllerChannelsUseSectorMultiplier) {
  // x' = -x - 2 w with w = phi(x): the cross term 2 x P w can only be
  // dominated through the sector constraint on w.
  UncertainLtiSystem s{Mat::Constant(1, 1, -1.0), Mat::Constant(1, 1, -2.0), zeros(1, 0),
                       Mat::Ones(1, 1),          Mat::Zero(1, 1),           zeros(1, 0),
                       Mat::Ones(1, 1),          Mat::Zero(1, 1),           zeros(1, 0)};
  const VerifyResult with_sector = verify(s, no_uncertainty(), 1, SupplyRate::zero(0, 1));
  ASSERT_TRUE(with_sector.feasible());
  EXPECT_GT(with_sector.cert->Lambda(0, 0), 0.0);
  EXPECT_LE(with_sector.cert->feasibility_residual, tol::kFeas);
  EXPECT_THROW(verify(s, no_uncertainty(), 0, SupplyRate::zero(0, 1)), Error);
}

TEST(Verify, DynamicNormBoundAgreesWithStaticMultiplier) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 8; ++trial) {
    const UncertainLtiSystem s = random_system(rng, 2, 1, 1, 1);
    const double gain = uniform(rng, 0.05, 1.5);
    const IqcSpec dyn = IqcSpec::dynamic(StateSpace::gain(gain * eye(1)), StateSpace::gain(eye(1)));
    const IqcSpec stat = IqcSpec::quadratic(norm_bound_multiplier(gain, 1.0, 1, 1), 1, IqcKind::StaticIqc);
    for (double g2 : {0.5, 5.0, 50.0}) {
      const SupplyRate X = SupplyRate::l2_gain(g2, 1, 1);
      const VerifyResult a = verify(s, dyn, 0, X);
      const VerifyResult b = verify(s, stat, 0, X);
      EXPECT_TRUE(a.problem.extended);
      EXPECT_EQ(a.feasible(), b.feasible()) << "trial " << trial << " gamma^2 " << g2;
    }
  }
}

TEST(Verify, DynamicFilterCertificateIsOnExtendedState) {
  std::mt19937_64 rng(9);
  UncertainLtiSystem s = random_system(rng, 2, 1, 1, 1);
  s.B_w *= 0.1;
  const StateSpace psi1{Mat::Constant(1, 1, -2.0), Mat::Ones(1, 1), Mat::Constant(1, 1, 0.1), Mat::Constant(1, 1, 0.2)};
  const VerifyResult r = verify(s, IqcSpec::dynamic(psi1, StateSpace::gain(eye(1))), 0, SupplyRate::l2_gain(1e4, 1, 1));
  ASSERT_TRUE(r.feasible());
  EXPECT_EQ(r.cert->P.rows(), 3);
  EXPECT_LE(certificate_residual(r.problem, SupplyRate::l2_gain(1e4, 1, 1), *r.cert), tol::kFeas);
}

TEST(TrajectoryResidual, ZeroTrajectory) {
  std::mt19937_64 rng(10);
  const UncertainLtiSystem s = random_system(rng, 2, 1, 1, 1);
  const StaticNonlinearity tanh_loop = StaticNonlinearity::from_activations({Activation::Tanh});
  const Trajectory tr = simulate_uncertain(s, tanh_loop, Vec::Zero(2), Mat::Zero(1, 100), 0.01);
  StorageCertificate c;
  c.P = eye(2);
  EXPECT_EQ(trajectory_dissipation_residual(s, tanh_loop, c, SupplyRate::l2_gain(1.0, 1, 1), tr), 0.0);
}

TEST(TrajectoryResidual, CertifiedSystemsDissipateAndFlippedStorageFails) {
  std::mt19937_64 rng(11);
  const IqcSpec sector = IqcSpec::quadratic(sector_multiplier(eye(1)), 1);
  const StaticNonlinearity tanh_loop = StaticNonlinearity::from_activations({Activation::Tanh});
  int certified = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const UncertainLtiSystem s = random_system(rng, 3, 1, 1, 1);
    const SupplyRate X = SupplyRate::l2_gain(200.0, 1, 1);
    const VerifyResult r = verify(s, sector, 0, X);
    if (!r.feasible()) continue;
    ++certified;
    const StorageCertificate& c = *r.cert;
    const double dt = 0.005;
    for (int k = 0; k < 10; ++k) {
      const Vec x0 = randn_vec(rng, 3);
      const Mat d = smooth_disturbance(rng, 1, 1000, dt);
      const Trajectory tr = simulate_uncertain(s, tanh_loop, x0, d, dt);
      double supplied = 0.0;
      for (Eigen::Index i = 0; i < d.cols(); ++i) supplied += 200.0 * d.col(i).squaredNorm() * dt;
      const double scale = x0.dot(c.P * x0) + supplied;
      EXPECT_LE(trajectory_dissipation_residual(s, tanh_loop, c, X, tr), 1e-4 * scale);
    }
    const Vec x0 = randn_vec(rng, 3);
    const Trajectory free = simulate_uncertain(s, tanh_loop, x0, Mat::Zero(1, 400), 0.005);
    StorageCertificate flipped = c;
    flipped.P = -c.P;
    EXPECT_LT(trajectory_dissipation_residual(s, tanh_loop, c, SupplyRate::zero(1, 1), free), 0.0);
    EXPECT_GT(trajectory_dissipation_residual(s, tanh_loop, flipped, SupplyRate::zero(1, 1), free), 0.0);
  }
  EXPECT_GE(certified, 5);
}
