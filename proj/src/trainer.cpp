#include "dissipic/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <ostream>
#include <random>
#include <thread>

#include "dissipic/interconnect.hpp"
#include "dissipic/matrix_core.hpp"

namespace dissipic {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RolloutOracle make_rollout_oracle(const Environment& env, int num_rollouts, const FixedPointCfg& fp) {
  require(num_rollouts > 0, ErrorCode::InvalidArgument, "num_rollouts must be positive");
  return [env, num_rollouts, fp](const RinnController& k, std::uint64_t seed) {
    RolloutOptions opts;
    opts.fp = fp;
    double total = 0.0;
    for (int i = 0; i < num_rollouts; ++i) {
      try {
        total += rollout(env, k, derive_seed(seed, static_cast<std::uint64_t>(i)), opts).total_reward();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::FixedPointDiverged && e.code() != ErrorCode::NonFiniteState) throw;
      }
    }
    return total / num_rollouts;
  };
}

namespace {

// Runs f(i) for i in [0, n) on up to `threads` workers; results are written by
// index so the outcome does not depend on scheduling.
template <class F>
void parallel_for(int n, int threads, F f) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = next++; i < n; i = next++) f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RinnController es_step(const RinnController& theta, const RolloutOracle& oracle, const EsConfig& cfg,
                       std::uint64_t seed) {
  require(cfg.population > 0 && cfg.population % 2 == 0, ErrorCode::InvalidArgument, "ES population must be even");
  require(cfg.sigma > 0.0, ErrorCode::InvalidArgument, "ES sigma must be positive");
  const Vec base = flatten(theta);
  const int pairs = cfg.population / 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Mat eps(base.size(), pairs);
  for (Eigen::Index j = 0; j < pairs; ++j) {
    for (Eigen::Index i = 0; i < base.size(); ++i) eps(i, j) = normal(rng);
  }
  std::vector<double> rewards(static_cast<std::size_t>(cfg.population));
  parallel_for(cfg.population, cfg.threads, [&](int i) {
    const int pair = i / 2;
    const double sign = i % 2 == 0 ? 1.0 : -1.0;
    const RinnController k = unflatten(base + sign * cfg.sigma * eps.col(pair), theta);
    rewards[static_cast<std::size_t>(i)] = oracle(k, derive_seed(seed, static_cast<std::uint64_t>(pair)));
  });
  Vec step = Vec::Zero(base.size());
  for (int j = 0; j < pairs; ++j) {
    step += (rewards[2 * j] - rewards[2 * j + 1]) * eps.col(j);
  }
  return unflatten(base + cfg.lr / (cfg.population * cfg.sigma) * step, theta);
}

RinnController RandomImprover::step(const RinnController& theta, const RolloutOracle&, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma_);
  Vec v = flatten(theta);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += normal(rng);
  return unflatten(v, theta);
}

RinnController EsImprover::step(const RinnController& theta, const RolloutOracle& oracle, std::uint64_t seed) {
  return es_step(theta, oracle, cfg_, seed);
}

std::optional<StorageCertificate> check_dissipative(const SynthesisProblem& prob, const RinnController& theta,
                                                    const SdpOptions& sdp) {
  VerifyOptions opts;
  opts.fix_lambda = true;
  opts.lambda_k_min = tol::kLambdaMin;
  opts.sdp = sdp;
  const VerifyResult r = verify(close_loop(prob.plant, theta), prob.plant_iqc(), prob.n_phi, prob.X, opts);
  if (!r.feasible() || r.cert->feasibility_residual > tol::kFeas) return std::nullopt;
  // The implicit layer must also be well posed under the returned Lambda.
  if (prob.n_phi > 0) {
    const Mat& lam = r.cert->Lambda;
    if (lambda_max(lam * theta.D_kvw + theta.D_kvw.transpose() * lam - 2.0 * lam) >= 0.0) return std::nullopt;
  }
  return r.cert;
}

namespace {

struct Projected {
  RinnController k;
  Mat P, Lambda;
};

// Algorithm path for a rejected candidate: convexify around the current
// certificate, project, extract (P, Lambda) and project the controller.
Projected project_candidate(const SynthesisProblem& prob, const RinnController& candidate, const Mat& P,
                            const Mat& Lambda, const ProjectOptions& opts) {
  try {
    const ThetaHat target = construct_theta_hat(prob, candidate, P, Lambda);
    const ThetaHatProjection th = theta_hat_project(prob, target, opts);
    const Reconstruction rec = reconstruct_theta(prob, th.theta_hat);
    const ThetaProjection k = theta_project(prob, candidate, rec.P, rec.Lambda, opts.sdp);
    return {k.k, rec.P, rec.Lambda};
  } catch (const Error& e) {
    const ErrorCode c = e.code();
    if (c != ErrorCode::SingularPartition && c != ErrorCode::SingularIminusRS && c != ErrorCode::IllConditionedUV &&
        c != ErrorCode::InfeasibleForCertificate && c != ErrorCode::SolverNumericalFailure) {
      throw;
    }
  }
  // The current certificate always admits the current controller, so the
  // projection onto the controllers it certifies is nonempty.
  const ThetaProjection k = theta_project(prob, candidate, P, Lambda, opts.sdp);
  return {k.k, P, Lambda};
}

}  // namespace

TrainState train(const SynthesisProblem& prob, PolicyImprover& improver, const Environment& env, const TrainState& init,
                 const TrainConfig& cfg) {
  require(cfg.iterations >= 0, ErrorCode::InvalidArgument, "negative iteration count");
  const double init_residual = closed_loop_residual(prob, init.theta, init.P, init.Lambda);
  require(init_residual <= tol::kFeas, ErrorCode::InvalidArgument,
          "initial controller is not certified by its storage (lambda_max = " + std::to_string(init_residual) + ")");
  const RolloutOracle oracle = make_rollout_oracle(env, cfg.num_rollouts, cfg.fp);
  TrainState s = init;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::uint64_t step_seed = derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it));
    const RinnController candidate = improver.step(s.theta, oracle, step_seed);
    HistoryRow row;
    row.iteration = it;
    if (const auto cert = check_dissipative(prob, candidate, cfg.project.sdp)) {
      s.theta = candidate;
      s.P = cert->P;
      s.Lambda = cert->Lambda;
    } else {
      try {
        const Projected p = project_candidate(prob, candidate, s.P, s.Lambda, cfg.project);
        const double residual = closed_loop_residual(prob, p.k, p.P, p.Lambda);
        require(residual <= tol::kFeas, ErrorCode::ProjectionInfeasible,
                "projected controller residual " + std::to_string(residual));
        s.theta = p.k;
        s.P = p.P;
        s.Lambda = p.Lambda;
        row.was_projected = true;
        row.projection_distance = theta_distance(s.theta, candidate);
      } catch (const Error& e) {
        // The last certified controller stays in place.
        row.projection_failed = true;
        ++s.projection_failures;
        s.last_failure = std::string("iteration ") + std::to_string(it) + ": " + e.what();
      }
    }
    row.cert_residual = closed_loop_residual(prob, s.theta, s.P, s.Lambda);
    row.mean_reward = oracle(s.theta, derive_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 1));
    s.iteration = it;
    s.history.push_back(row);
  }
  return s;
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history) {
  os << "iteration,mean_reward,was_projected,projection_distance,cert_residual\n";
  os.precision(12);
  for (const HistoryRow& r : history) {
    os << r.iteration << ',' << r.mean_reward << ',' << (r.was_projected ? 1 : 0) << ',' << r.projection_distance << ','
       << r.cert_residual << '\n';
  }
}

}  // namespace dissipic
