#include <gtest/gtest.h>

#include <cmath>

#include "dissipic/interconnect.hpp"
#include "dissipic/simulate.hpp"
#include "support/oracles.hpp"

using namespace dissipic;
using namespace testing_support;

namespace {

double max_dev(const UncertainLtiSystem& a, const UncertainLtiSystem& b) {
  return max_abs(stacked(a) - stacked(b));
}

// Bisection on g(w) = w - tanh(a w + b), which is increasing for a < 1.
double bisect_scalar_layer(double a, double b) {
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid - std::tanh(a * mid + b) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(EvalController, ZeroFeedthroughTanhIsExact) {
  RinnController k = RinnController::zeros(1, 2, 2, 1);
  k.D_kvy = eye(2);
  const ControllerOutput out = eval_controller(k, Vec::Zero(1), Vec::Zero(2));
  EXPECT_EQ(out.w_k, Vec::Zero(2));
  EXPECT_LE(out.iterations, 1);
}

TEST(EvalController, ScalarImplicitLayerMatchesBisection) {
  RinnController k = RinnController::zeros(0, 1, 1, 1);
  k.D_kvw(0, 0) = 0.5;
  k.D_kvy(0, 0) = 1.0;
  const ControllerOutput out = eval_controller(k, Vec(0), Vec::Ones(1));
  const double ref = bisect_scalar_layer(0.5, 1.0);
  EXPECT_NEAR(ref - std::tanh(0.5 * ref + 1.0), 0.0, 1e-12);
  EXPECT_NEAR(out.w_k(0), ref, 1e-10);
  EXPECT_LE(out.residual, 1e-10);
}

TEST(EvalController, LinearCaseIgnoresNonlinearity) {
  std::mt19937_64 rng(3);
  RinnController k = random_controller(rng, 3, 4, 2, 2, 0.3, Activation::Zero);
  const Vec xk = randn_vec(rng, 3), y = randn_vec(rng, 2);
  const ControllerOutput out = eval_controller(k, xk, y);
  EXPECT_EQ(out.u, Vec(k.C_ku * xk + k.D_kuy * y));
  EXPECT_EQ(out.dx_k, Vec(k.A_k * xk + k.B_ky * y));
}

TEST(EvalController, RandomWellPosedControllersConverge) {
  std::mt19937_64 rng(17);
  int tested = 0;
  while (tested < 100) {
    const Eigen::Index nphi = 1 + static_cast<Eigen::Index>(uniform(rng, 0, 8));
    RinnController k = random_controller(rng, 2, nphi, 2, 1, 1.5);
    const Mat lambda = Vec(randn_vec(rng, nphi).cwiseAbs().array() + 0.1).asDiagonal();
    if (!check_wellposed(k, lambda)) continue;
    ++tested;
    for (int j = 0; j < 100; ++j) {
      const Vec xk = randn_vec(rng, 2, 3.0), y = randn_vec(rng, 2, 3.0);
      const ControllerOutput out = eval_controller(k, xk, y);
      ASSERT_LE(out.residual, 1e-10);
      for (Eigen::Index i = 0; i < nphi; ++i) EXPECT_GE(out.w_k(i) * (out.v_k(i) - out.w_k(i)), -1e-12);
    }
  }
}

TEST(EvalController, DivergenceIsReported) {
  // w = relu(2 w + 1) has no fixed point.
  RinnController k = RinnController::zeros(0, 1, 1, 1, Activation::Relu);
  k.D_kvw(0, 0) = 2.0;
  k.D_kvy(0, 0) = 1.0;
  FixedPointCfg fp;
  fp.max_iter = 100;
  try {
    eval_controller(k, Vec(0), Vec::Ones(1), fp);
    FAIL() << "expected FixedPointDiverged";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FixedPointDiverged);
  }
}

TEST(CheckWellposed, Examples) {
  RinnController k = RinnController::zeros(1, 3, 1, 1);
  EXPECT_TRUE(check_wellposed(k, eye(3)));
  k.D_kvw = eye(3);
  EXPECT_FALSE(check_wellposed(k, eye(3)));
  k.D_kvw = 0.5 * eye(3);
  EXPECT_TRUE(check_wellposed(k, Vec::LinSpaced(3, 1, 3).asDiagonal().toDenseMatrix()));
  EXPECT_THROW(check_wellposed(k, Mat::Ones(3, 3)), Error);
}

TEST(Theta, FlattenRoundTrip) {
  std::mt19937_64 rng(5);
  const RinnController k = random_controller(rng, 3, 4, 2, 1);
  const Vec v = flatten(k);
  EXPECT_EQ(v.size(), theta_size(k));
  const RinnController back = unflatten(v, k);
  EXPECT_EQ(flatten(back), v);
  EXPECT_EQ(theta_distance(k, back), 0.0);
  // Column-major, declaration order: the first entries are A_k.
  EXPECT_EQ(v(1), k.A_k(1, 0));
}

TEST(PlantToSystem, PendulumWithoutController) {
  const PendulumSetup s = pendulum_env();
  const UncertainLtiSystem sys = plant_to_system(s.plant);
  EXPECT_EQ(sys.n(), 2);
  EXPECT_EQ(sys.n_v(), 1);
  EXPECT_EQ(sys.n_w(), 1);
  EXPECT_NEAR(sys.B_w(1, 0), 19.62, 1e-12);
}

TEST(PlantToSystem, ZeroControllerMatchesOpenLoopSimulation) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    UncertainLtiPlant p = random_plant(rng, 3, 2, 2, 1, 2, 1, 1, 0.1);
    p.A_p = rand_hurwitz(rng, 3, 0.2);
    const RinnController k = RinnController::zeros(2, 3, 1, 1);
    const UncertainLtiSystem open = plant_to_system(p);
    const UncertainLtiSystem closed = plant_to_system(p, k);
    const StaticNonlinearity sat = StaticNonlinearity::from_activations({Activation::Tanh, Activation::Tanh});
    const StaticNonlinearity sat_all = StaticNonlinearity::from_activations(
        {Activation::Tanh, Activation::Tanh, Activation::Tanh, Activation::Tanh, Activation::Tanh});
    const Vec x0 = randn_vec(rng, 3);
    Vec x0c = Vec::Zero(5);
    x0c.head(3) = x0;
    const Mat d = smooth_disturbance(rng, 1, 500, 0.01);
    const Trajectory a = simulate_uncertain(open, sat, x0, d, 0.01);
    const Trajectory b = simulate_uncertain(closed, sat_all, x0c, d, 0.01);
    EXPECT_LE(max_abs(a.e - b.e), 1e-9);
  }
}

TEST(CloseLoop, ZeroControllerStructure) {
  std::mt19937_64 rng(1);
  const UncertainLtiPlant p = random_plant(rng, 3, 2, 2, 1, 2, 1, 2);
  const RinnController k = RinnController::zeros(2, 3, 2, 1);
  const UncertainLtiSystem s = close_loop(p, k);
  EXPECT_EQ(s.A, block_diag({p.A_p, zeros(2, 2)}));
  EXPECT_EQ(s.B_w, block_diag({p.B_pw, zeros(2, 3)}));
  EXPECT_EQ(s.C_e, block_matrix({{p.C_pe, zeros(2, 2)}}));
  EXPECT_LE(max_dev(s, close_loop_oracle(p, k)), 0.0);
}

TEST(CloseLoop, StaticOutputFeedback) {
  std::mt19937_64 rng(2);
  const UncertainLtiPlant p = random_plant(rng, 4, 1, 1, 1, 1, 2, 3);
  RinnController k = RinnController::zeros(0, 0, 3, 2);
  k.D_kuy = randn(rng, 2, 3);
  const UncertainLtiSystem s = close_loop(p, k);
  EXPECT_LE(max_abs(s.A - (p.A_p + p.B_pu * k.D_kuy * p.C_py)), 1e-14);
}

TEST(CloseLoop, MatchesEliminationOracleOnRandomPairs) {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto dim = [&](int lo, int hi) { return static_cast<Eigen::Index>(lo + (rng() % (hi - lo + 1))); };
    const UncertainLtiPlant p = random_plant(rng, dim(1, 5), dim(1, 3), dim(1, 3), dim(1, 3), dim(1, 3), dim(1, 3),
                                             dim(1, 3), 1.0);
    const RinnController k = random_controller(rng, dim(1, 5), dim(0, 8), p.n_y(), p.n_u(), 1.0);
    worst = std::max(worst, max_dev(close_loop(p, k), close_loop_oracle(p, k)));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(CloseLoop, DimensionMismatchIsRejected) {
  std::mt19937_64 rng(4);
  const UncertainLtiPlant p = random_plant(rng, 2, 1, 1, 1, 1, 1, 1);
  const RinnController k = RinnController::zeros(1, 1, 2, 1);
  EXPECT_THROW(close_loop(p, k), Error);
}

TEST(CloseLoop, AffineMapAgreesWithFormula) {
  std::mt19937_64 rng(8);
  const UncertainLtiPlant p = random_plant(rng, 3, 2, 2, 1, 2, 2, 2);
  const RinnController shape = RinnController::zeros(2, 3, 2, 2);
  const ClosedLoopAffineMap map = closed_loop_affine_map(p, shape);
  EXPECT_LE(max_dev(map.constant(), close_loop(p, shape)), 0.0);
  const RinnController k1 = random_controller(rng, 2, 3, 2, 2), k2 = random_controller(rng, 2, 3, 2, 2);
  EXPECT_LE(max_dev(map.evaluate(k1), close_loop(p, k1)), 1e-12);
  const RinnController sum = unflatten(flatten(k1) + flatten(k2), shape);
  const Mat affinity = stacked(map.evaluate(sum)) - stacked(map.evaluate(k1)) - stacked(map.evaluate(k2)) +
                       stacked(map.evaluate(shape));
  EXPECT_LE(max_abs(affinity), 1e-12);
}

TEST(CloseLoop, SimulationMatchesComponentCosimulation) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    UncertainLtiPlant p = random_plant(rng, 3, 1, 1, 1, 2, 1, 1, 0.2);
    p.A_p = rand_hurwitz(rng, 3, 0.5);
    RinnController k = random_controller(rng, 2, 3, 1, 1, 0.2);
    k.A_k = rand_hurwitz(rng, 2, 0.5);
    const double dt = 0.005;
    const Mat d = smooth_disturbance(rng, 1, 1000, dt);
    const Vec x0 = randn_vec(rng, 5, 0.5);
    const Mat ref = cosimulate_loop(p, k, [](double v) { return std::tanh(v); }, x0, d, dt);
    const StaticNonlinearity all_tanh = StaticNonlinearity::from_activations(std::vector<Activation>(4, Activation::Tanh));
    const Trajectory tr = simulate_uncertain(close_loop(p, k), all_tanh, x0, d, dt);
    EXPECT_LE(max_abs(tr.x - ref), 1e-8);
  }
}
