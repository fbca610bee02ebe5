#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dissipic/simulate.hpp"
#include "dissipic/synthesize.hpp"

namespace dissipic {

/// Expected reward of a controller, estimated with rollouts seeded by `seed`.
using RolloutOracle = std::function<double(const RinnController& k, std::uint64_t seed)>;

/// Mean total reward over `num_rollouts` rollouts of `env`; rollout i uses a
/// seed derived from (seed, i). A rollout whose implicit layer diverges
/// scores 0.
RolloutOracle make_rollout_oracle(const Environment& env, int num_rollouts, const FixedPointCfg& fp = {});

/// Seed for stream `index` of a run seeded with `base` (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

struct EsConfig {
  int population = 8;  // even: antithetic pairs
  double sigma = 0.05;
  double lr = 0.01;
  int threads = 0;     // 0: hardware concurrency
};

/// theta' = theta + lr / (population sigma) * sum_i r_i eps_i with
/// antithetic noise over every parameter block. Both members of a pair share
/// the rollout seed.
RinnController es_step(const RinnController& theta, const RolloutOracle& oracle, const EsConfig& cfg,
                       std::uint64_t seed);

class PolicyImprover {
 public:
  virtual ~PolicyImprover() = default;
  virtual RinnController step(const RinnController& theta, const RolloutOracle& oracle, std::uint64_t seed) = 0;
};

class IdentityImprover : public PolicyImprover {
 public:
  RinnController step(const RinnController& theta, const RolloutOracle&, std::uint64_t) override { return theta; }
};

/// Gaussian perturbation of every parameter with standard deviation sigma.
class RandomImprover : public PolicyImprover {
 public:
  explicit RandomImprover(double sigma) : sigma_(sigma) {}
  RinnController step(const RinnController& theta, const RolloutOracle& oracle, std::uint64_t seed) override;

 private:
  double sigma_;
};

class EsImprover : public PolicyImprover {
 public:
  explicit EsImprover(EsConfig cfg) : cfg_(cfg) {}
  RinnController step(const RinnController& theta, const RolloutOracle& oracle, std::uint64_t seed) override;

 private:
  EsConfig cfg_;
};

/// Certificate search for a fixed controller: verify on the closed loop with
/// the plant scaling fixed and Lambda_ii >= 1e-6. Empty when infeasible.
std::optional<StorageCertificate> check_dissipative(const SynthesisProblem& prob, const RinnController& theta,
                                                    const SdpOptions& sdp = {});

struct HistoryRow {
  int iteration = 0;
  double mean_reward = 0.0;
  bool was_projected = false;
  double projection_distance = 0.0;
  double cert_residual = 0.0;
  bool projection_failed = false;
};

struct TrainState {
  RinnController theta;
  Mat P, Lambda;
  int iteration = 0;
  std::vector<HistoryRow> history;
  int projection_failures = 0;
  std::string last_failure;
};

struct TrainConfig {
  int iterations = 10;
  int num_rollouts = 4;
  std::uint64_t seed = 0;
  ProjectOptions project;
  FixedPointCfg fp;
};

/// Alternates `improver` with the dissipativity-enforcing step. `init` must be
/// certified by its (P, Lambda). A failed projection keeps the last certified
/// controller and is recorded in the history.
TrainState train(const SynthesisProblem& prob, PolicyImprover& improver, const Environment& env, const TrainState& init,
                 const TrainConfig& cfg);

/// Columns: iteration, mean_reward, was_projected, projection_distance, cert_residual.
void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history);

}  // namespace dissipic
