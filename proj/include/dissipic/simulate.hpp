#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dissipic/system_models.hpp"

namespace dissipic {

using Dynamics = std::function<Vec(const Vec& x, const Vec& input)>;

/// Classical RK4 step with the input held over [t, t + dt].
Vec rk4_zoh_step(const Dynamics& f, const Vec& x, const Vec& held_input, double dt);

struct LtiResponse {
  Mat states;   // n x (N + 1)
  Mat outputs;  // p x N, output at the start of each step
};

/// Simulates x' = A x + B u, y = C x + D u with u sampled per column of `inputs`.
LtiResponse simulate_lti(const StateSpace& s, const Vec& x0, const Mat& inputs, double dt);

/// Elementwise static nonlinearity closing the w = Delta(v) channel.
struct StaticNonlinearity {
  std::function<double(Eigen::Index channel, double v)> f;
  std::function<double(Eigen::Index channel, double v)> slope;

  static StaticNonlinearity from_activations(std::vector<Activation> per_channel);
  static StaticNonlinearity from_functions(std::vector<std::function<double(double)>> f,
                                           std::vector<std::function<double(double)>> slope);
};

/// Solves w = Delta(C v-row) for the loop v = c + D_vw w.
Vec solve_static_loop(const Mat& D_vw, const Vec& c, const StaticNonlinearity& delta, const FixedPointCfg& fp = {});

/// States live on the N + 1 grid points; u, y, d, e and reward are sampled at
/// the start of each of the N steps. After termination states are frozen and
/// the per-step signals are zero.
struct Trajectory {
  double dt = 0.0;
  Vec t;       // N + 1
  Mat x;       // n_x x (N + 1)
  Mat x_k;     // n_k x (N + 1)
  Mat u;       // n_u x N
  Mat y;       // n_y x N
  Mat d;       // n_d x N
  Mat e;       // n_e x N
  Vec reward;  // N
  bool terminated = false;
  int steps_alive = 0;

  double total_reward() const { return reward.sum(); }
};

/// Simulates an uncertain system with a static nonlinearity in the loop,
/// inputs d held per step.
Trajectory simulate_uncertain(const UncertainLtiSystem& sys, const StaticNonlinearity& delta, const Vec& x0,
                              const Mat& d, double dt, const FixedPointCfg& fp = {});

struct Environment {
  std::string name;
  Eigen::Index n_x = 0, n_y = 0, n_u = 0, n_d = 0, n_e = 0;
  Dynamics dynamics;  // input = (u, d)
  std::function<Vec(const Vec& x)> measure;
  std::function<Vec(const Vec& x)> performance;
  std::function<double(const Vec& x, const Vec& u)> reward;
  std::function<Vec(std::mt19937_64& rng)> sample_init;
  std::function<bool(const Vec& x)> terminated;
  Vec u_min, u_max;
  double dt = 0.01;
  int steps = 0;

  void validate() const;
};

struct RolloutOptions {
  std::optional<Vec> x0;       // otherwise sampled from the environment
  std::optional<Mat> d;        // n_d x steps; zero when absent
  FixedPointCfg fp;
};

/// Alternates controller and plant RK4 steps with the other's output held.
Trajectory rollout(const Environment& env, const RinnController& k, std::uint64_t seed, const RolloutOptions& opts = {});

struct PendulumParams {
  double m = 0.15;
  double l = 0.5;
  double mu = 0.05;
  double g = 9.81;
  double u_limit = 2.0;
  double dt = 0.01;
  int steps = 201;
  double x1_init = 0.6 * 3.14159265358979323846;
  double x2_init = 2.0;
  double x1_limit = 3.14159265358979323846;
  double x2_limit = 8.0;
};

struct PendulumSetup {
  Environment env;
  UncertainLtiPlant plant;  // w_p = sin(v_p), v_p = x_1
  Mat M_dp;                 // sector [0, 1]
};

PendulumSetup pendulum_env(const PendulumParams& p = {});

struct FlexrodParams {
  double m_b = 1.0;
  double m_t = 0.1;
  double m_r = 0.0;
  double L = 1.0;
  double rho = 0.1;
  double r = 0.01;
  double E = 200e9;  // Pa
  double damping = 0.9;
  double u_limit = 20.0;
  double dt = 0.001;
  double horizon = 2.0;
  double delta_gain = 0.1;
  double lambda_scale = 5.0;
  Vec init_range = (Vec(4) << 1.0, 0.44, 0.25, 2.0).finished();
};

struct FlexrodSetup {
  Environment env;          // flexible four-state model
  StateSpace flexible;      // u -> y
  StateSpace rigid;         // nominal rigid model u -> y
  UncertainLtiPlant plant;  // rigid design model, w = Delta(u + d)
  Mat M_dp;                 // scale * diag(gain^2, -1)
  Mat flexible_A, flexible_B;  // full-state realization
};

FlexrodSetup flexrod_env(const FlexrodParams& p = {});

/// Flexible-rod closed loop with a linear controller (activation ignored) as
/// one LTI system driven by d entering with u; state (x_f, x_k).
StateSpace flexrod_closed_loop(const FlexrodSetup& s, const RinnController& k);

/// Closes w = Delta v with an LTI Delta, giving the LTI map d -> e.
StateSpace close_uncertainty(const UncertainLtiSystem& sys, const StateSpace& delta);

/// max over signals of sqrt(int |e|^2 / int |d|^2) with zero initial state (trapezoidal rule).
double empirical_l2_gain(const StateSpace& sys, const std::vector<Mat>& d_signals, double dt);

/// Energy of a sampled signal by the trapezoidal rule.
double signal_energy(const Mat& samples, double dt);

struct BodeCheck {
  bool ok = true;
  double worst_ratio = 0.0;  // max |G_f - G_r| * omega / gain
  std::vector<double> omega, mag_rigid, mag_flexible, bound;
};

BodeCheck bode_bound_check(const StateSpace& rigid, const StateSpace& flexible, double gain,
                           const std::vector<double>& omega);

std::vector<double> log_grid(double lo, double hi, int n);

/// Band-limited burst and sinusoid test signals for gain estimation.
std::vector<Mat> test_disturbances(Eigen::Index n_d, int steps, double dt, int count, std::uint64_t seed);

/// Columns t, x..., x_k..., u..., y..., d..., e..., reward; one row per step.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace dissipic
