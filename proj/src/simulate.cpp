#include "dissipic/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dissipic/interconnect.hpp"
#include "dissipic/iqc.hpp"

namespace dissipic {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_finite(const Vec& x, const char* where) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, std::string("non-finite state in ") + where);
}

}  // namespace

Vec rk4_zoh_step(const Dynamics& f, const Vec& x, const Vec& held_input, double dt) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "rk4_zoh_step: dt must be positive");
  const Vec k1 = f(x, held_input);
  const Vec k2 = f(x + 0.5 * dt * k1, held_input);
  const Vec k3 = f(x + 0.5 * dt * k2, held_input);
  const Vec k4 = f(x + dt * k3, held_input);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  require_finite(next, "rk4_zoh_step");
  return next;
}

LtiResponse simulate_lti(const StateSpace& s, const Vec& x0, const Mat& inputs, double dt) {
  s.validate();
  require(x0.size() == s.n(), ErrorCode::DimensionMismatch, "simulate_lti: initial state size");
  require(inputs.rows() == s.inputs(), ErrorCode::DimensionMismatch, "simulate_lti: input rows");
  const Eigen::Index steps = inputs.cols();
  LtiResponse r;
  r.states.resize(s.n(), steps + 1);
  r.outputs.resize(s.outputs(), steps);
  r.states.col(0) = x0;
  const Dynamics f = [&s](const Vec& x, const Vec& u) -> Vec { return s.A * x + s.B * u; };
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Vec x = r.states.col(k);
    const Vec u = inputs.col(k);
    r.outputs.col(k) = s.C * x + s.D * u;
    r.states.col(k + 1) = s.n() > 0 ? rk4_zoh_step(f, x, u, dt) : Vec(0);
  }
  return r;
}

StaticNonlinearity StaticNonlinearity::from_activations(std::vector<Activation> per_channel) {
  StaticNonlinearity s;
  s.f = [per_channel](Eigen::Index i, double v) { return activate(per_channel.at(i), v); };
  s.slope = [per_channel](Eigen::Index i, double v) { return activate_slope(per_channel.at(i), v); };
  return s;
}

StaticNonlinearity StaticNonlinearity::from_functions(std::vector<std::function<double(double)>> f,
                                                      std::vector<std::function<double(double)>> slope) {
  StaticNonlinearity s;
  s.f = [f](Eigen::Index i, double v) { return f.at(i)(v); };
  s.slope = [slope](Eigen::Index i, double v) { return slope.at(i)(v); };
  return s;
}

Vec solve_static_loop(const Mat& D_vw, const Vec& c, const StaticNonlinearity& delta, const FixedPointCfg& fp) {
  const Eigen::Index n = c.size();
  require(D_vw.rows() == n && D_vw.cols() == n, ErrorCode::DimensionMismatch, "solve_static_loop: D_vw");
  auto apply = [&](const Vec& v) {
    Vec w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = delta.f(i, v(i));
    return w;
  };
  if (n == 0) return Vec(0);
  if (max_abs(D_vw) == 0.0) return apply(c);

  // Newton on F(w) = w - Delta(c + D w) with a backtracking line search.
  Vec w = apply(c);
  auto residual = [&](const Vec& ww) -> Vec { return ww - apply(c + D_vw * ww); };
  Vec r = residual(w);
  for (int it = 0; it < fp.max_iter; ++it) {
    const double rn = r.norm();
    if (rn <= fp.tol) return w;
    const Vec v = c + D_vw * w;
    Mat J = Mat::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) J.row(i) -= delta.slope(i, v(i)) * D_vw.row(i);
    const Vec step = J.partialPivLu().solve(-r);
    double t = 1.0;
    Vec w_new = w + step;
    Vec r_new = residual(w_new);
    while (!(r_new.norm() < (1.0 - 1e-4 * t) * rn) && t > 1e-8) {
      t *= 0.5;
      w_new = w + t * step;
      r_new = residual(w_new);
    }
    if (!(r_new.norm() < rn)) {
      // Damped Picard fallback.
      w_new = (1.0 - fp.alpha) * w + fp.alpha * apply(c + D_vw * w);
      r_new = residual(w_new);
    }
    w = w_new;
    r = r_new;
  }
  if (r.norm() <= fp.tol) return w;
  throw Error(ErrorCode::FixedPointDiverged, "solve_static_loop: residual " + std::to_string(r.norm()));
}

Trajectory simulate_uncertain(const UncertainLtiSystem& sys, const StaticNonlinearity& delta, const Vec& x0,
                              const Mat& d, double dt, const FixedPointCfg& fp) {
  validate(sys);
  require(x0.size() == sys.n(), ErrorCode::DimensionMismatch, "simulate_uncertain: x0");
  require(d.rows() == sys.n_d(), ErrorCode::DimensionMismatch, "simulate_uncertain: d rows");
  const Eigen::Index steps = d.cols();
  auto loop_w = [&](const Vec& x, const Vec& dd) {
    return solve_static_loop(sys.D_vw, sys.C_v * x + sys.D_vd * dd, delta, fp);
  };
  const Dynamics f = [&](const Vec& x, const Vec& dd) -> Vec {
    return sys.A * x + sys.B_w * loop_w(x, dd) + sys.B_d * dd;
  };

  Trajectory tr;
  tr.dt = dt;
  tr.t = Vec::LinSpaced(steps + 1, 0.0, dt * static_cast<double>(steps));
  tr.x.resize(sys.n(), steps + 1);
  tr.x.col(0) = x0;
  tr.x_k.resize(0, steps + 1);
  tr.u.resize(0, steps);
  tr.y.resize(0, steps);
  tr.d = d;
  tr.e.resize(sys.n_e(), steps);
  tr.reward = Vec::Zero(steps);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Vec x = tr.x.col(k);
    const Vec dk = d.col(k);
    tr.e.col(k) = sys.C_e * x + sys.D_ew * loop_w(x, dk) + sys.D_ed * dk;
    tr.x.col(k + 1) = rk4_zoh_step(f, x, dk, dt);
  }
  tr.steps_alive = static_cast<int>(steps);
  return tr;
}

void Environment::validate() const {
  require(dt > 0.0, ErrorCode::InvalidArgument, "environment dt must be positive");
  require(steps >= 0, ErrorCode::InvalidArgument, "environment steps must be nonnegative");
  require(u_min.size() == n_u && u_max.size() == n_u, ErrorCode::DimensionMismatch, "saturation bounds");
  require((u_min.array() < u_max.array()).all(), ErrorCode::InvalidArgument, "saturation lower >= upper");
  require(dynamics && measure && performance && reward && sample_init && terminated, ErrorCode::InvalidArgument,
          "environment " + name + " is missing a callback");
}

Trajectory rollout(const Environment& env, const RinnController& k, std::uint64_t seed, const RolloutOptions& opts) {
  env.validate();
  k.validate();
  require(k.n_y() == env.n_y && k.n_u() == env.n_u, ErrorCode::DimensionMismatch, "rollout: controller shape");
  std::mt19937_64 rng(seed);
  const Vec x0 = opts.x0 ? *opts.x0 : env.sample_init(rng);
  require(x0.size() == env.n_x, ErrorCode::DimensionMismatch, "rollout: initial state");
  const int steps = env.steps;
  const Mat d = opts.d ? *opts.d : Mat::Zero(env.n_d, steps);
  require(d.rows() == env.n_d && d.cols() >= steps, ErrorCode::DimensionMismatch, "rollout: disturbance");

  Trajectory tr;
  tr.dt = env.dt;
  tr.t = Vec::LinSpaced(steps + 1, 0.0, env.dt * steps);
  tr.x = Mat::Zero(env.n_x, steps + 1);
  tr.x_k = Mat::Zero(k.n_k(), steps + 1);
  tr.u = Mat::Zero(env.n_u, steps);
  tr.y = Mat::Zero(env.n_y, steps);
  tr.d = Mat::Zero(env.n_d, steps);
  tr.e = Mat::Zero(env.n_e, steps);
  tr.reward = Vec::Zero(steps);
  tr.x.col(0) = x0;

  const Dynamics controller_f = [&](const Vec& xk, const Vec& y) -> Vec {
    return eval_controller(k, xk, y, opts.fp).dx_k;
  };
  Vec x = x0;
  Vec xk = Vec::Zero(k.n_k());
  int alive = 0;
  for (int i = 0; i < steps; ++i) {
    const Vec y = env.measure(x);
    const ControllerOutput out = eval_controller(k, xk, y, opts.fp);
    const Vec u = out.u.cwiseMax(env.u_min).cwiseMin(env.u_max);
    const Vec di = d.col(i);
    tr.y.col(i) = y;
    tr.u.col(i) = u;
    tr.d.col(i) = di;
    tr.e.col(i) = env.performance(x);
    tr.reward(i) = env.reward(x, u);

    Vec ud(env.n_u + env.n_d);
    ud << u, di;
    const Vec x_next = rk4_zoh_step(env.dynamics, x, ud, env.dt);
    const Vec xk_next = k.n_k() > 0 ? rk4_zoh_step(controller_f, xk, y, env.dt) : Vec(0);
    x = x_next;
    xk = xk_next;
    tr.x.col(i + 1) = x;
    tr.x_k.col(i + 1) = xk;
    alive = i + 1;
    if (env.terminated(x)) {
      tr.terminated = true;
      for (int j = i + 2; j <= steps; ++j) {
        tr.x.col(j) = x;
        tr.x_k.col(j) = xk;
      }
      break;
    }
  }
  tr.steps_alive = alive;
  return tr;
}

PendulumSetup pendulum_env(const PendulumParams& p) {
  require(p.m > 0 && p.l > 0 && p.dt > 0, ErrorCode::InvalidArgument, "pendulum parameters");
  const double inertia = p.m * p.l * p.l;
  const double damp = p.mu / inertia;
  const double grav = p.g / p.l;

  PendulumSetup s;
  Environment& env = s.env;
  env.name = "pendulum";
  env.n_x = 2;
  env.n_y = 1;
  env.n_u = 1;
  env.n_d = 0;
  env.n_e = 2;
  env.dynamics = [=](const Vec& x, const Vec& u) -> Vec {
    Vec dx(2);
    dx << x(1), -damp * x(1) + grav * std::sin(x(0)) + u(0) / inertia;
    return dx;
  };
  env.measure = [](const Vec& x) -> Vec { return x.head(1); };
  env.performance = [](const Vec& x) -> Vec { return x; };
  env.reward = [](const Vec&, const Vec& u) { return std::exp(-u.squaredNorm()); };
  env.sample_init = [=](std::mt19937_64& rng) -> Vec {
    std::uniform_real_distribution<double> a(-p.x1_init, p.x1_init), b(-p.x2_init, p.x2_init);
    Vec x(2);
    x(0) = a(rng);
    x(1) = b(rng);
    return x;
  };
  env.terminated = [=](const Vec& x) { return std::abs(x(0)) > p.x1_limit || std::abs(x(1)) > p.x2_limit; };
  env.u_min = Vec::Constant(1, -p.u_limit);
  env.u_max = Vec::Constant(1, p.u_limit);
  env.dt = p.dt;
  env.steps = p.steps;

  // sin(x_1) is the uncertainty. No disturbance channel: with a zero supply
  // rate any d entering the state would make the dissipation inequality
  // infeasible. e = x.
  UncertainLtiPlant& pl = s.plant;
  pl = UncertainLtiPlant::zeros(2, 1, 1, 0, 2, 1, 1);
  pl.A_p << 0, 1, 0, -damp;
  pl.B_pw << 0, grav;
  pl.B_pu << 0, 1.0 / inertia;
  pl.C_pv << 1, 0;
  pl.C_py << 1, 0;
  pl.C_pe = eye(2);
  s.M_dp = (Mat(2, 2) << 0, 1, 1, -2).finished();
  return s;
}

FlexrodSetup flexrod_env(const FlexrodParams& p) {
  require(p.dt > 0 && p.horizon >= 0, ErrorCode::InvalidArgument, "flexrod time grid");
  require(p.init_range.size() == 4, ErrorCode::DimensionMismatch, "flexrod init_range");
  const double rod = p.rho * p.L;
  const double second_moment = kPi / 4.0 * std::pow(p.r, 4);
  Mat M(2, 2), K = Mat::Zero(2, 2), B = Mat::Zero(2, 2);
  M << p.m_b + p.m_r + rod, p.m_t + rod / 3.0, p.m_t + rod / 3.0, p.m_t + rod / 5.0;
  K(1, 1) = 4.0 * p.E * second_moment / std::pow(p.L, 3);
  B(1, 1) = p.damping;
  const Mat Minv = M.inverse();

  FlexrodSetup s;
  s.flexible_A = block_matrix({{zeros(2, 2), eye(2)}, {-Minv * K, -Minv * B}});
  s.flexible_B.resize(4, 1);
  s.flexible_B << 0, 0, Minv.col(0);
  const Mat C_f = (Mat(1, 4) << 1, 1, 0, 0).finished();
  s.flexible = StateSpace{s.flexible_A, s.flexible_B, C_f, zeros(1, 1)};

  const double total = p.m_b + p.m_r + rod;
  const Mat A_r = (Mat(2, 2) << 0, 1, 0, 0).finished();
  const Mat B_r = (Mat(2, 1) << 0, 1.0 / total).finished();
  s.rigid = StateSpace{A_r, B_r, (Mat(1, 2) << 1, 0).finished(), zeros(1, 1)};

  // v = u + d, w = Delta v enters the position derivative, y = x_b, e = x_r.
  UncertainLtiPlant& pl = s.plant;
  pl = UncertainLtiPlant::zeros(2, 1, 1, 1, 2, 1, 1);
  pl.A_p = A_r;
  pl.B_pw << 1, 0;
  pl.B_pd = B_r;
  pl.B_pu = B_r;
  pl.D_pvd << 1;
  pl.D_pvu << 1;
  pl.C_py << 1, 0;
  pl.C_pe = eye(2);
  s.M_dp = norm_bound_multiplier(p.delta_gain, p.lambda_scale, 1, 1);

  Environment& env = s.env;
  env.name = "flexrod";
  env.n_x = 4;
  env.n_y = 1;
  env.n_u = 1;
  env.n_d = 1;
  env.n_e = 2;
  const Mat Af = s.flexible_A, Bf = s.flexible_B;
  env.dynamics = [Af, Bf](const Vec& x, const Vec& ud) -> Vec { return Af * x + Bf * (ud(0) + ud(1)); };
  env.measure = [C_f](const Vec& x) -> Vec { return C_f * x; };
  env.performance = [](const Vec& x) -> Vec { return (Vec(2) << x(0), x(2)).finished(); };
  env.reward = [](const Vec& x, const Vec& u) { return std::exp(-x.squaredNorm()) + std::exp(-u.squaredNorm()); };
  const Vec range = p.init_range;
  env.sample_init = [range](std::mt19937_64& rng) -> Vec {
    Vec x(4);
    for (int i = 0; i < 4; ++i) x(i) = std::uniform_real_distribution<double>(-range(i), range(i))(rng);
    return x;
  };
  env.terminated = [](const Vec&) { return false; };
  env.u_min = Vec::Constant(1, -p.u_limit);
  env.u_max = Vec::Constant(1, p.u_limit);
  env.dt = p.dt;
  env.steps = static_cast<int>(std::lround(p.horizon / p.dt));
  return s;
}

StateSpace flexrod_closed_loop(const FlexrodSetup& s, const RinnController& k) {
  k.validate();
  // Linearize the activation at the origin: w_k = G v_k with G = slope(0) I.
  const Eigen::Index nphi = k.n_phi();
  const double g = nphi > 0 ? activate_slope(k.activation, 0.0) : 0.0;
  const Mat Q = (eye(nphi) - g * k.D_kvw).inverse() * g;  // w_k = Q (C_kv x_k + D_kvy y)
  const Mat Ak = k.A_k + k.B_kw * Q * k.C_kv;
  const Mat Bk = k.B_ky + k.B_kw * Q * k.D_kvy;
  const Mat Ck = k.C_ku + k.D_kuw * Q * k.C_kv;
  const Mat Dk = k.D_kuy + k.D_kuw * Q * k.D_kvy;

  const Mat& Af = s.flexible_A;
  const Mat& Bf = s.flexible_B;
  const Mat& Cf = s.flexible.C;
  StateSpace cl;
  cl.A = block_matrix({{Af + Bf * Dk * Cf, Bf * Ck}, {Bk * Cf, Ak}});
  cl.B = block_matrix({{Bf}, {zeros(Ak.rows(), 1)}});
  cl.C = block_matrix({{eye(4), zeros(4, Ak.rows())}});
  cl.D = zeros(4, 1);
  return cl;
}

StateSpace close_uncertainty(const UncertainLtiSystem& sys, const StateSpace& delta) {
  validate(sys);
  delta.validate();
  require(delta.inputs() == sys.n_v() && delta.outputs() == sys.n_w(), ErrorCode::DimensionMismatch,
          "close_uncertainty: Delta shape");
  const Eigen::Index n = sys.n(), m = delta.n();
  const Mat I_minus = eye(sys.n_w()) - delta.D * sys.D_vw;
  Eigen::FullPivLU<Mat> lu(I_minus);
  require(lu.isInvertible(), ErrorCode::SingularPartition, "close_uncertainty: loop is not well-posed");
  // w = W_z z + W_d d with z = (x, xi).
  const Mat W_z = lu.solve(block_matrix({{delta.D * sys.C_v, delta.C}}));
  const Mat W_d = lu.solve(delta.D * sys.D_vd);
  const Mat V_z = block_matrix({{sys.C_v, zeros(sys.n_v(), m)}}) + sys.D_vw * W_z;
  const Mat V_d = sys.D_vd + sys.D_vw * W_d;

  StateSpace out;
  out.A = block_matrix({{block_matrix({{sys.A, zeros(n, m)}}) + sys.B_w * W_z}, {block_matrix({{zeros(m, n), delta.A}}) + delta.B * V_z}});
  out.B = block_matrix({{sys.B_d + sys.B_w * W_d}, {delta.B * V_d}});
  out.C = block_matrix({{sys.C_e, zeros(sys.n_e(), m)}}) + sys.D_ew * W_z;
  out.D = sys.D_ed + sys.D_ew * W_d;
  return out;
}

double signal_energy(const Mat& samples, double dt) {
  const Eigen::Index n = samples.cols();
  if (n == 0) return 0.0;
  const Vec sq = samples.colwise().squaredNorm().transpose();
  return dt * (sq.sum() - 0.5 * (sq(0) + sq(n - 1)));
}

double empirical_l2_gain(const StateSpace& sys, const std::vector<Mat>& d_signals, double dt) {
  double worst = 0.0;
  for (const Mat& d : d_signals) {
    const double ed = signal_energy(d, dt);
    require(ed > 0.0, ErrorCode::ZeroInputEnergy, "empirical_l2_gain: disturbance with zero energy");
    const LtiResponse r = simulate_lti(sys, Vec::Zero(sys.n()), d, dt);
    worst = std::max(worst, std::sqrt(signal_energy(r.outputs, dt) / ed));
  }
  return worst;
}

BodeCheck bode_bound_check(const StateSpace& rigid, const StateSpace& flexible, double gain,
                           const std::vector<double>& omega) {
  BodeCheck b;
  b.omega = omega;
  for (double w : omega) {
    require(w > 0.0, ErrorCode::InvalidArgument, "bode_bound_check: frequencies must be positive");
    const std::complex<double> gr = rigid.freq(w), gf = flexible.freq(w);
    const double bound = gain / w;
    b.mag_rigid.push_back(std::abs(gr));
    b.mag_flexible.push_back(std::abs(gf));
    b.bound.push_back(bound);
    const double ratio = std::abs(gf - gr) / bound;
    b.worst_ratio = std::max(b.worst_ratio, ratio);
    if (ratio > 1.0) b.ok = false;
  }
  return b;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  require(lo > 0 && hi > lo && n >= 2, ErrorCode::InvalidArgument, "log_grid");
  std::vector<double> g(n);
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < n; ++i) g[i] = std::pow(10.0, a + (b - a) * i / (n - 1));
  return g;
}

std::vector<Mat> test_disturbances(Eigen::Index n_d, int steps, double dt, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit;
  const double horizon = dt * steps;
  std::vector<Mat> out;
  for (int s = 0; s < count; ++s) {
    Mat d = Mat::Zero(n_d, steps);
    // Burst support [t0, t1] inside the first 60% of the horizon so the
    // response has time to decay.
    const double t0 = 0.1 * horizon * unit(rng);
    const double t1 = t0 + (0.2 + 0.3 * unit(rng)) * horizon;
    Vec dir(n_d);
    for (Eigen::Index i = 0; i < n_d; ++i) dir(i) = gauss(rng);
    dir.normalize();
    if (s % 2 == 0) {
      // Sinusoid with a Hann window, log-uniform frequency.
      const double w = std::pow(10.0, -1.0 + 2.5 * unit(rng));
      const double phase = 2.0 * kPi * unit(rng);
      for (int k = 0; k < steps; ++k) {
        const double t = k * dt;
        if (t < t0 || t > t1) continue;
        const double win = std::sin(kPi * (t - t0) / (t1 - t0));
        d.col(k) = dir * win * win * std::sin(w * t + phase);
      }
    } else {
      // White noise through a first-order low-pass with random cutoff.
      const double cutoff = std::pow(10.0, -0.5 + 2.0 * unit(rng));
      const double a = std::exp(-cutoff * dt);
      Vec state = Vec::Zero(n_d);
      for (int k = 0; k < steps; ++k) {
        const double t = k * dt;
        Vec noise(n_d);
        for (Eigen::Index i = 0; i < n_d; ++i) noise(i) = gauss(rng);
        state = a * state + std::sqrt(1.0 - a * a) * noise;
        if (t >= t0 && t <= t1) d.col(k) = state;
      }
    }
    if (signal_energy(d, dt) == 0.0) d.col(steps / 4) = dir;
    out.push_back(d);
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  auto header = [&](const char* prefix, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << prefix << i;
  };
  out << 't';
  header("x", traj.x.rows());
  header("xk", traj.x_k.rows());
  header("u", traj.u.rows());
  header("y", traj.y.rows());
  header("d", traj.d.rows());
  header("e", traj.e.rows());
  out << ",reward\n";
  auto cells = [&](const Mat& m, Eigen::Index k) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) out << ',' << m(i, k);
  };
  const Eigen::Index steps = traj.reward.size();
  out.precision(12);
  for (Eigen::Index k = 0; k < steps; ++k) {
    out << traj.t(k);
    cells(traj.x, k);
    cells(traj.x_k, k);
    cells(traj.u, k);
    cells(traj.y, k);
    cells(traj.d, k);
    cells(traj.e, k);
    out << ',' << traj.reward(k) << '\n';
  }
}

}  // namespace dissipic
