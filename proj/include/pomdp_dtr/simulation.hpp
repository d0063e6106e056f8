#pragma once

// Generative scenarios 1 and 2, oracle-belief rollouts and the replication
// harness behind the results tables.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pomdp_dtr/belief_transform.hpp"
#include "pomdp_dtr/ct_hmm.hpp"
#include "pomdp_dtr/regime.hpp"
#include "pomdp_dtr/v_learning.hpp"

namespace pomdp_dtr {

using Rng = std::mt19937_64;

/// Mixes (seed, a, b) into an independent stream seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

enum class RateLink { expit, exp };
enum class InitialLaw { uniform, stationary, stable };  // stable: point mass on the last state

struct ScenarioSpec {
  int scenario = 1;
  int num_states = 5;
  int obs_dim = 3;
  int num_actions = 3;
  double horizon_days = 365.0;
  EmissionParams emission;
  double covariance_ridge = 0.01;
  RateLink rate_link = RateLink::expit;
  InitialLaw initial = InitialLaw::uniform;
  double e1_low = -3.0, e1_high = -2.0;
  double e3_low = -7.0, e3_high = -6.0;
  /// Rows: logit coefficients (intercept, x_1..x_p) of actions 1..L-1
  /// against the last action.
  MatrixXd behavior;
  UtilitySpec utility;         // utility used to build tuples
  std::vector<int> group{0, 1, 1, 0, 2};  // action favored in each latent state

  static ScenarioSpec preset(int scenario);
  void validate() const;

  /// Per-day generators for a subject with random effect e3.
  std::vector<MatrixXd> rates_per_day(double e3) const;
  /// Behavior-policy action distribution given X^j.
  VectorXd behavior_probs(const VectorXd& x) const;
  /// Latent model with population-level (e3 midpoint) rates on the
  /// horizon time scale; the starting point for fits.
  ModelParams reference_model() const;
};

/// Chooses A^j from the oracle summary state.
using ActionRule = std::function<int(const SummaryState& oracle, Rng& rng)>;

ActionRule behavior_rule(const ScenarioSpec& spec);
/// Group argmax of the oracle belief.
ActionRule oracle_rule(const ScenarioSpec& spec);
/// Samples from (or takes the argmax of) a fitted regime at the oracle state.
ActionRule policy_rule(const PolicyParams& policy);

struct SimulatedSubject {
  Trajectory traj;
  std::vector<int> states;                 // latent state at each visit
  std::vector<VectorXd> oracle_beliefs;
  std::vector<double> utilities;           // true U^j, j = 1..J-1
  double e1 = 0.0;
  double e3 = 0.0;
  int resamples = 0;                       // draws discarded for J < 2
};

SimulatedSubject simulate_trajectory(const ScenarioSpec& spec, Rng& rng,
                                     const ActionRule& rule, const std::string& subject_id = "1");

struct SimulatedDataset {
  Dataset data;
  std::vector<SimulatedSubject> subjects;
  int resamples = 0;
};

SimulatedDataset simulate_dataset(const ScenarioSpec& spec, int n, std::uint64_t seed,
                                  const ActionRule& rule);

struct ValueEstimate {
  double value = 0.0;
  double se = 0.0;
  int rollouts = 0;
};

/// Monte Carlo value of an action rule on fresh subjects: mean discounted
/// sum of true utilities, or the pooled mean utility per visit.
ValueEstimate true_value_mc(const ScenarioSpec& spec, const ActionRule& rule, Criterion criterion,
                            int n_rollouts, std::uint64_t seed, double gamma);

/// Both criteria from one set of rollouts.
std::pair<ValueEstimate, ValueEstimate> true_values_mc(const ScenarioSpec& spec,
                                                       const ActionRule& rule, int n_rollouts,
                                                       std::uint64_t seed, double gamma);

struct ModelSimConfig {
  double mean_gap = 0.1;  // exponential interarrival mean, horizon units
  double horizon = 1.0;
};

struct ModelDataset {
  Dataset data;
  std::vector<std::vector<int>> states;
  int resamples = 0;
};

/// Draws subjects from a fitted-form latent model with uniformly random
/// actions; subjects with fewer than two visits are redrawn.
ModelDataset simulate_from_model(const ModelParams& params, int n, std::uint64_t seed,
                                 const ModelSimConfig& config = {});

std::string to_string(RateLink l);
RateLink parse_rate_link(const std::string& s);
std::string to_string(InitialLaw l);
InitialLaw parse_initial_law(const std::string& s);

}  // namespace pomdp_dtr
