#pragma once

// Replication harnesses: value tables for the two simulation scenarios,
// projection-interval coverage and maximum-likelihood recovery.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pomdp_dtr/inference.hpp"
#include "pomdp_dtr/io.hpp"
#include "pomdp_dtr/simulation.hpp"

namespace pomdp_dtr {

/// A policy class in the tables: "MDP" classes see only x, "POM" classes
/// see the belief as well.
struct RegimeClass {
  PolicyKind kind = PolicyKind::deterministic;
  BasisKind basis = BasisKind::linear;
  BasisInputs inputs = BasisInputs::both;

  std::string label() const;  // e.g. "deterministic POM-lin"
};

using ProgressFn = std::function<void(const std::string&)>;

struct ExperimentConfig {
  int scenario = 1;
  int n = 100;
  int replications = 100;
  std::uint64_t seed = 20240501;
  double gamma = 0.9;
  std::vector<Criterion> criteria{Criterion::discounted, Criterion::average};
  std::vector<RegimeClass> classes;  // empty: the full table
  double stochastic_floor = 0.05;
  int mle_iterations = 300;
  int mle_restarts = 1;
  SearchConfig search = desk_search();
  int rollouts = 500;           // per fitted regime and replication
  bool estimate_propensity = false;
  InitialLaw initial = InitialLaw::uniform;
  RateLink rate_link = RateLink::expit;
  int threads = 1;

  static SearchConfig desk_search();
  static std::vector<RegimeClass> full_table();
  ScenarioSpec scenario_spec() const;
  Json to_json() const;
};

/// Per-replication true values (and plug-in estimates) keyed by column.
/// Columns: "obs", "opt" and RegimeClass::label().
struct CriterionTable {
  Criterion criterion = Criterion::discounted;
  std::map<std::string, std::vector<double>> truth;
  std::map<std::string, std::vector<double>> estimate;
};

struct ValueTable {
  ExperimentConfig config;
  std::vector<std::string> columns;
  std::vector<CriterionTable> tables;
  int failed_replications = 0;
  int failed_searches = 0;
  double seconds = 0.0;

  const CriterionTable& at(Criterion c) const;
};

ValueTable run_value_table(const ExperimentConfig& config, const ProgressFn& progress = {});

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // across replications
  double se = 0.0;  // sd / sqrt(count)
  int count = 0;
};

/// NaN entries (failed searches) are skipped.
Summary summarize(const std::vector<double>& values);
/// Summary of a - b over replications where both are finite.
Summary paired_difference(const std::vector<double>& a, const std::vector<double>& b);

/// Delimited table with one row per criterion and "mean (sd)" cells.
std::string format_value_table(const ValueTable& table, char delimiter = '\t');
Json to_json(const ValueTable& table);

struct CoverageConfig {
  ExperimentConfig base;  // scenario, n, replications, seeds and budgets
  std::vector<PolicyKind> kinds{PolicyKind::stochastic, PolicyKind::deterministic};
  double eta = 0.025;
  CiConfig ci = desk_ci();
  int truth_subjects = 2000;
  SearchConfig truth_search;

  static CiConfig desk_ci();
  Json to_json() const;
};

struct CoverageCell {
  PolicyKind kind = PolicyKind::deterministic;
  Criterion criterion = Criterion::discounted;
  double truth = 0.0;
  std::vector<double> lower, upper, estimate;
  std::vector<int> flat;
  int failures = 0;

  double coverage() const;
  double mean_half_width() const;
};

struct CoverageResult {
  CoverageConfig config;
  std::vector<CoverageCell> cells;
  double seconds = 0.0;
};

/// Linear POMDP classes; the target of each interval is the population
/// optimum of the plug-in value over the class, approximated on a large
/// sample with oracle beliefs.
CoverageResult run_coverage(const CoverageConfig& config, const ProgressFn& progress = {});
std::string format_coverage_table(const CoverageResult& result, char delimiter = '\t');
Json to_json(const CoverageResult& result);

struct RecoveryConfig {
  int n = 500;
  int replications = 50;
  std::uint64_t seed = 20240502;
  ModelSimConfig visits{0.1, 1.0};
  int mle_iterations = 500;
  int mle_restarts = 1;
  int threads = 1;
};

/// Fixed three-state model (two treatments, bivariate observations).
ModelParams recovery_model();

struct RecoveryResult {
  std::vector<std::string> names;  // natural-scale parameter names
  VectorXd truth;
  std::vector<VectorXd> estimates;
  std::vector<VectorXd> ses;
  std::vector<int> converged;
  int failures = 0;
  double seconds = 0.0;
};

RecoveryResult run_mle_recovery(const RecoveryConfig& config, const ProgressFn& progress = {});

}  // namespace pomdp_dtr
