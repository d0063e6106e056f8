#pragma once

// Run configuration shared by the command-line tool: a flat JSON object
// whose keys mirror the fields below. Unknown keys and mistyped values are
// validation errors.

#include <cstdint>
#include <string>

#include "pomdp_dtr/io.hpp"

namespace pomdp_dtr {

struct RunConfig {
  std::string command;

  // paths
  std::string input;      // trajectory file
  std::string model;      // fitted model artifact
  std::string tuples;     // transformed dataset artifact
  std::string policy;     // policy artifact (learn: evaluate only this policy)
  std::string out = "out";

  // data
  int scenario = 1;
  int n = 100;
  int num_states = 5;   // K
  int num_actions = 3;  // L
  double time_scale = 1.0;
  std::string init = "data";  // data | scenario
  bool tie_covariances = true;
  bool ar_intercept = true;
  std::string utility = "scenario";     // scenario | neg_abs | belief_match
  std::string propensity = "estimate";  // estimate | scenario
  std::string initial_law = "uniform";
  std::string rate_link = "expit";

  // reproducibility
  std::uint64_t seed = 1;
  int threads = 1;

  // fitting
  int mle_iterations = 500;
  int mle_restarts = 5;
  double mle_tolerance = 1e-6;

  // learning
  std::string criterion = "discounted";
  double gamma = 0.9;
  std::string basis = "linear";
  std::string basis_inputs = "both";
  std::string policy_kind = "deterministic";
  double floor = 0.05;
  double weight_cap = 20.0;
  int search_restarts = 10;
  int search_evaluations = 2000;
  double penalty = 1e-2;

  // inference
  double eta = 0.025;
  int ci_points = 512;

  // experiments
  std::string experiment = "table";  // table | coverage | recovery
  int replications = 100;
  int rollouts = 500;
  bool quadratic = true;

  /// Checks enumerations and ranges; throws ValidationError.
  void validate() const;
};

/// Overlays the keys of a flat JSON object onto `base`.
RunConfig apply_config(const Json& doc, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

Json to_json(const RunConfig& config);
/// FNV-1a over the canonical JSON form without the output directory.
std::string config_hash(const RunConfig& config);

}  // namespace pomdp_dtr
