#include "pomdp_dtr/experiment.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "pomdp_dtr/errors.hpp"

namespace pomdp_dtr {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void say(const ProgressFn& progress, const std::string& msg) {
  if (progress) progress(msg);
}

/// Observed-regime values of one simulated dataset.
std::pair<double, double> observed_values(const SimulatedDataset& sim, double gamma) {
  double disc = 0.0, total = 0.0, count = 0.0;
  for (const auto& s : sim.subjects) {
    double g = 1.0;
    for (double u : s.utilities) {
      disc += g * u;
      g *= gamma;
      total += u;
    }
    count += static_cast<double>(s.utilities.size());
  }
  return {disc / static_cast<double>(sim.subjects.size()), total / count};
}

BasisSpec value_basis_for(const BasisSpec& policy_basis, Criterion criterion) {
  BasisSpec v = policy_basis;
  v.kind = BasisKind::linear;
  v.intercept = criterion == Criterion::discounted;
  return v;
}

ModelParams fit_replication(const Dataset& data, const ScenarioSpec& spec, const ExperimentConfig& cfg,
                            std::uint64_t seed) {
  const ModelParams ref = spec.reference_model();
  MleConfig mc;
  mc.max_iterations = cfg.mle_iterations;
  mc.restarts = cfg.mle_restarts;
  mc.seed = seed;
  mc.threads = cfg.threads;
  const MleResult fit = fit_mle(data, ref, mc);
  return align_to_reference(fit.params, ref).params;
}

std::vector<MdpTuple> replication_tuples(const Dataset& data, const ModelParams& params,
                                         const ScenarioSpec& spec, const ExperimentConfig& cfg) {
  if (!cfg.estimate_propensity) {
    const PropensityFn known = [&spec](const SummaryState& s) { return spec.behavior_probs(s.x); };
    return build_mdp_dataset(data, params, spec.utility, known, cfg.threads);
  }
  auto tuples = build_mdp_dataset(data, params, spec.utility, {}, cfg.threads);
  const BasisSpec pb{BasisKind::linear, BasisInputs::x, true, spec.num_states, spec.obs_dim};
  attach_propensity(tuples, estimate_propensity(tuples, pb, spec.num_actions));
  return tuples;
}

}  // namespace

std::string RegimeClass::label() const {
  std::string s = to_string(kind);
  s += inputs == BasisInputs::x ? " MDP-" : (inputs == BasisInputs::both ? " POM-" : " belief-");
  s += basis == BasisKind::linear ? "lin" : "quad";
  return s;
}

SearchConfig ExperimentConfig::desk_search() {
  SearchConfig s;
  s.restarts = 4;
  s.max_evaluations = 1500;
  return s;
}

std::vector<RegimeClass> ExperimentConfig::full_table() {
  std::vector<RegimeClass> out;
  for (auto kind : {PolicyKind::stochastic, PolicyKind::deterministic})
    for (auto inputs : {BasisInputs::x, BasisInputs::both})
      for (auto basis : {BasisKind::linear, BasisKind::quadratic}) out.push_back({kind, basis, inputs});
  return out;
}

ScenarioSpec ExperimentConfig::scenario_spec() const {
  ScenarioSpec spec = ScenarioSpec::preset(scenario);
  spec.initial = initial;
  spec.rate_link = rate_link;
  spec.validate();
  return spec;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["scenario"] = scenario;
  j["n"] = n;
  j["replications"] = replications;
  j["seed"] = seed;
  j["rng"] = "mt19937_64, per-replication streams by splitmix64 derivation";
  j["gamma"] = gamma;
  Json crit = Json::array();
  for (auto c : criteria) crit.push_back(to_string(c));
  j["criteria"] = crit;
  Json cls = Json::array();
  for (const auto& c : classes.empty() ? full_table() : classes) cls.push_back(c.label());
  j["classes"] = cls;
  j["stochastic_floor"] = stochastic_floor;
  j["mle_iterations"] = mle_iterations;
  j["mle_restarts"] = mle_restarts;
  j["search_restarts"] = search.restarts;
  j["search_max_evaluations"] = search.max_evaluations;
  j["search_penalty"] = search.penalty;
  j["rollouts"] = rollouts;
  j["estimate_propensity"] = estimate_propensity;
  j["initial_law"] = to_string(initial);
  j["rate_link"] = to_string(rate_link);
  return j;
}

const CriterionTable& ValueTable::at(Criterion c) const {
  for (const auto& t : tables)
    if (t.criterion == c) return t;
  throw ValidationError("criterion " + to_string(c) + " was not run");
}

ValueTable run_value_table(const ExperimentConfig& config, const ProgressFn& progress) {
  if (config.n < 1 || config.replications < 1) throw ValidationError("n and replications must be positive");
  if (config.criteria.empty()) throw ValidationError("no criteria requested");
  const auto start = Clock::now();
  const ScenarioSpec spec = config.scenario_spec();
  const auto classes = config.classes.empty() ? ExperimentConfig::full_table() : config.classes;
  VConfig vc;
  vc.gamma = config.gamma;

  ValueTable out;
  out.config = config;
  out.config.classes = classes;
  out.columns.push_back("obs");
  for (const auto& c : classes) out.columns.push_back(c.label());
  out.columns.push_back("opt");
  for (auto crit : config.criteria) {
    CriterionTable t;
    t.criterion = crit;
    for (const auto& col : out.columns) {
      t.truth[col] = std::vector<double>(config.replications, kNaN);
      t.estimate[col] = std::vector<double>(config.replications, kNaN);
    }
    out.tables.push_back(std::move(t));
  }

  for (int r = 0; r < config.replications; ++r) {
    const auto rep_start = Clock::now();
    const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    const SimulatedDataset sim = simulate_dataset(spec, config.n, derive_seed(rep_seed, 1), behavior_rule(spec));
    const auto obs = observed_values(sim, config.gamma);
    const auto opt = true_values_mc(spec, oracle_rule(spec), std::max(2, config.n), derive_seed(rep_seed, 2),
                                    config.gamma);
    for (auto& t : out.tables) {
      const bool disc = t.criterion == Criterion::discounted;
      t.truth["obs"][r] = disc ? obs.first : obs.second;
      t.truth["opt"][r] = disc ? opt.first.value : opt.second.value;
    }

    std::vector<MdpTuple> tuples;
    try {
      const ModelParams params = fit_replication(sim.data, spec, config, derive_seed(rep_seed, 4));
      tuples = replication_tuples(sim.data, params, spec, config);
    } catch (const NumericalError& e) {
      ++out.failed_replications;
      say(progress, "replication " + std::to_string(r + 1) + ": model fit failed: " + e.what());
      continue;
    }
    const auto reference = ReferenceDistribution::empirical_initial(tuples);

    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      const RegimeClass& cls = classes[ci];
      const BasisSpec pb{cls.basis, cls.inputs, true, spec.num_states, spec.obs_dim};
      const auto shape = PolicyParams::zeros(spec.num_actions, pb, cls.kind,
                                             cls.kind == PolicyKind::stochastic ? config.stochastic_floor : 0.0);
      for (auto& t : out.tables) {
        try {
          const EvalDesign design =
              make_design(tuples, pb, value_basis_for(pb, t.criterion), reference, spec.num_actions);
          SearchConfig sc = config.search;
          sc.seed = derive_seed(rep_seed, 10 + ci, static_cast<std::uint64_t>(t.criterion));
          sc.threads = config.threads;
          const SearchResult res = optimize_policy(design, shape, t.criterion, vc, sc);
          const auto tv = true_values_mc(spec, policy_rule(res.policy), config.rollouts,
                                         derive_seed(rep_seed, 3), config.gamma);
          t.estimate[cls.label()][r] = res.value;
          t.truth[cls.label()][r] = t.criterion == Criterion::discounted ? tv.first.value : tv.second.value;
        } catch (const NumericalError& e) {
          ++out.failed_searches;
          say(progress, "replication " + std::to_string(r + 1) + ", " + cls.label() + ", " +
                            to_string(t.criterion) + ": " + e.what());
        }
      }
    }
    std::ostringstream msg;
    msg << "replication " << r + 1 << "/" << config.replications << " done in " << elapsed(rep_start) << " s";
    say(progress, msg.str());
  }
  out.seconds = elapsed(start);
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++s.count;
    }
  if (s.count == 0) {
    s.mean = s.sd = s.se = kNaN;
    return s;
  }
  s.mean = sum / s.count;
  double ss = 0.0;
  for (double v : values)
    if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
  s.sd = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
  s.se = s.sd / std::sqrt(static_cast<double>(s.count));
  return s;
}

Summary paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired series differ in length");
  std::vector<double> d(a.size(), kNaN);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::isfinite(a[i]) && std::isfinite(b[i])) d[i] = a[i] - b[i];
  return summarize(d);
}

namespace {

std::string cell(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", s.mean, s.sd);
  return buf;
}

}  // namespace

std::string format_value_table(const ValueTable& table, char delimiter) {
  std::ostringstream out;
  out << "criterion" << delimiter << "n";
  for (const auto& c : table.columns) out << delimiter << c;
  out << '\n';
  for (const auto& t : table.tables) {
    out << to_string(t.criterion) << delimiter << table.config.n;
    for (const auto& c : table.columns) out << delimiter << cell(summarize(t.truth.at(c)));
    out << '\n';
  }
  return out.str();
}

Json to_json(const ValueTable& table) {
  Json j;
  j["config"] = table.config.to_json();
  j["columns"] = table.columns;
  Json rows = Json::array();
  for (const auto& t : table.tables) {
    Json row;
    row["criterion"] = to_string(t.criterion);
    Json cells;
    for (const auto& c : table.columns) {
      const Summary s = summarize(t.truth.at(c));
      const Summary e = summarize(t.estimate.at(c));
      Json cj;
      cj["mean"] = s.mean;
      cj["sd"] = s.sd;
      cj["se"] = s.se;
      cj["count"] = s.count;
      cj["estimate_mean"] = std::isfinite(e.mean) ? Json(e.mean) : Json(nullptr);
      Json reps = Json::array();
      for (double v : t.truth.at(c)) reps.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
      cj["replications"] = reps;
      cells[c] = cj;
    }
    row["cells"] = cells;
    rows.push_back(row);
  }
  j["rows"] = rows;
  j["failed_replications"] = table.failed_replications;
  j["failed_searches"] = table.failed_searches;
  j["seconds"] = table.seconds;
  return j;
}

// ---------------------------------------------------------------------------

CiConfig CoverageConfig::desk_ci() {
  CiConfig c;
  c.points = 128;
  return c;
}

Json CoverageConfig::to_json() const {
  Json j = base.to_json();
  Json kinds_j = Json::array();
  for (auto k : kinds) kinds_j.push_back(to_string(k));
  j["kinds"] = kinds_j;
  j["eta"] = eta;
  j["ci_points"] = ci.points;
  j["truth_subjects"] = truth_subjects;
  j["truth_search_restarts"] = truth_search.restarts;
  j["truth_search_max_evaluations"] = truth_search.max_evaluations;
  return j;
}

double CoverageCell::coverage() const {
  int hit = 0, count = 0;
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i])) continue;
    ++count;
    if (lower[i] <= truth && truth <= upper[i]) ++hit;
  }
  return count ? static_cast<double>(hit) / count : kNaN;
}

double CoverageCell::mean_half_width() const {
  std::vector<double> w;
  for (std::size_t i = 0; i < lower.size(); ++i) w.push_back(0.5 * (upper[i] - lower[i]));
  return summarize(w).mean;
}

CoverageResult run_coverage(const CoverageConfig& config, const ProgressFn& progress) {
  const ExperimentConfig& base = config.base;
  if (base.n < 1 || base.replications < 1) throw ValidationError("n and replications must be positive");
  const auto start = Clock::now();
  const ScenarioSpec spec = base.scenario_spec();
  VConfig vc;
  vc.gamma = base.gamma;
  const BasisSpec pb{BasisKind::linear, BasisInputs::both, true, spec.num_states, spec.obs_dim};
  const PropensityFn known = [&spec](const SummaryState& s) { return spec.behavior_probs(s.x); };
  const auto shape_for = [&](PolicyKind kind) {
    return PolicyParams::zeros(spec.num_actions, pb, kind,
                               kind == PolicyKind::stochastic ? base.stochastic_floor : 0.0);
  };

  CoverageResult out;
  out.config = config;
  for (auto crit : base.criteria)
    for (auto kind : config.kinds) {
      CoverageCell c;
      c.kind = kind;
      c.criterion = crit;
      out.cells.push_back(c);
    }

  {
    const auto t0 = Clock::now();
    const SimulatedDataset big =
        simulate_dataset(spec, config.truth_subjects, derive_seed(base.seed, 999), behavior_rule(spec));
    std::vector<std::vector<VectorXd>> beliefs;
    for (const auto& s : big.subjects) beliefs.push_back(s.oracle_beliefs);
    const auto tuples = tuples_from_beliefs(big.data, beliefs, spec.utility, spec.num_actions, known);
    const auto reference = ReferenceDistribution::empirical_initial(tuples);
    for (auto& c : out.cells) {
      const EvalDesign design = make_design(tuples, pb, value_basis_for(pb, c.criterion), reference,
                                            spec.num_actions);
      SearchConfig sc = config.truth_search;
      sc.seed = derive_seed(base.seed, 998, static_cast<std::uint64_t>(c.criterion));
      sc.threads = base.threads;
      c.truth = optimize_policy(design, shape_for(c.kind), c.criterion, vc, sc).value;
    }
    std::ostringstream msg;
    msg << "population targets computed in " << elapsed(t0) << " s";
    say(progress, msg.str());
  }

  for (int r = 0; r < base.replications; ++r) {
    const auto rep_start = Clock::now();
    const std::uint64_t rep_seed = derive_seed(base.seed, static_cast<std::uint64_t>(r));
    const auto mark_failed = [&](CoverageCell& c) {
      ++c.failures;
      c.lower.push_back(kNaN);
      c.upper.push_back(kNaN);
      c.estimate.push_back(kNaN);
      c.flat.push_back(0);
    };
    const SimulatedDataset sim = simulate_dataset(spec, base.n, derive_seed(rep_seed, 1), behavior_rule(spec));
    ModelParams params;
    FisherReport fisher;
    std::vector<MdpTuple> tuples;
    try {
      params = fit_replication(sim.data, spec, base, derive_seed(rep_seed, 4));
      FisherConfig fc;
      fc.threads = base.threads;
      fisher = fisher_information(sim.data, params, fc);
      tuples = build_mdp_dataset(sim.data, params, spec.utility, known, base.threads);
    } catch (const NumericalError& e) {
      for (auto& c : out.cells) mark_failed(c);
      say(progress, "replication " + std::to_string(r + 1) + ": model fit failed: " + e.what());
      continue;
    }
    const auto reference = ReferenceDistribution::empirical_initial(tuples);
    for (auto crit : base.criteria) {
      const EvalDesign design =
          make_design(tuples, pb, value_basis_for(pb, crit), reference, spec.num_actions);
      PerturbationCache cache;
      bool cache_ok = true;
      try {
        cache = build_perturbations(sim.data, params, tuples, spec.utility, design, reference, 1e-5,
                                    base.threads);
      } catch (const NumericalError& e) {
        cache_ok = false;
        say(progress, "replication " + std::to_string(r + 1) + ": perturbation failed: " + e.what());
      }
      for (auto& c : out.cells) {
        if (c.criterion != crit) continue;
        if (!cache_ok) {
          mark_failed(c);
          continue;
        }
        try {
          SearchConfig sc = base.search;
          sc.seed = derive_seed(rep_seed, 20 + static_cast<std::uint64_t>(c.kind), static_cast<std::uint64_t>(crit));
          sc.threads = base.threads;
          const SearchResult res = optimize_policy(design, shape_for(c.kind), crit, vc, sc);
          const PolicyCovariance pc =
              policy_param_covariance(design, res.policy, crit, vc, res.penalty);
          const ValueVarianceFn evaluator = [&](const VectorXd& xi) {
            PolicyParams p = res.policy;
            p.set_free(xi);
            const SandwichComponents s = value_variance(design, p, crit, vc, &cache, fisher.mean);
            return std::make_pair(s.estimate, s.variance);
          };
          CiConfig cc = config.ci;
          cc.threads = base.threads;
          const ProjectionCi ci = projection_ci(res.policy.free(), pc.cov, evaluator, design.num_subjects,
                                                config.eta, cc);
          c.lower.push_back(ci.lower);
          c.upper.push_back(ci.upper);
          c.estimate.push_back(ci.estimate);
          c.flat.push_back(pc.flat ? 1 : 0);
        } catch (const NumericalError& e) {
          mark_failed(c);
          say(progress, "replication " + std::to_string(r + 1) + ", " + to_string(c.kind) + " " +
                            to_string(crit) + ": " + e.what());
        }
      }
    }
    std::ostringstream msg;
    msg << "coverage replication " << r + 1 << "/" << base.replications << " done in " << elapsed(rep_start)
        << " s";
    say(progress, msg.str());
  }
  out.seconds = elapsed(start);
  return out;
}

std::string format_coverage_table(const CoverageResult& result, char delimiter) {
  std::ostringstream out;
  out << "criterion" << delimiter << "n" << delimiter << "regime" << delimiter << "coverage" << delimiter
      << "half_width" << delimiter << "target" << delimiter << "failures\n";
  char buf[160];
  for (const auto& c : result.cells) {
    std::snprintf(buf, sizeof(buf), "%s%c%d%c%s%c%.3f%c%.3f%c%.3f%c%d\n", to_string(c.criterion).c_str(),
                  delimiter, result.config.base.n, delimiter, to_string(c.kind).c_str(), delimiter,
                  c.coverage(), delimiter, c.mean_half_width(), delimiter, c.truth, delimiter, c.failures);
    out << buf;
  }
  return out.str();
}

Json to_json(const CoverageResult& result) {
  Json j;
  j["config"] = result.config.to_json();
  Json cells = Json::array();
  const auto arr = [](const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? Json(x) : Json(nullptr));
    return a;
  };
  for (const auto& c : result.cells) {
    Json cj;
    cj["criterion"] = to_string(c.criterion);
    cj["kind"] = to_string(c.kind);
    cj["target"] = c.truth;
    cj["coverage"] = c.coverage();
    cj["mean_half_width"] = c.mean_half_width();
    cj["failures"] = c.failures;
    cj["lower"] = arr(c.lower);
    cj["upper"] = arr(c.upper);
    cj["estimate"] = arr(c.estimate);
    cj["flat"] = c.flat;
    cells.push_back(cj);
  }
  j["cells"] = cells;
  j["seconds"] = result.seconds;
  return j;
}

// ---------------------------------------------------------------------------

ModelParams recovery_model() {
  ModelParams m;
  m.num_states = 3;
  m.num_actions = 2;
  m.obs_dim = 2;
  MatrixXd q0(3, 3), q1(3, 3);
  q0 << -1.5, 1.0, 0.5,
         0.5, -1.0, 0.5,
         0.5, 1.0, -1.5;
  q1 << -2.5, 0.5, 2.0,
         1.0, -2.0, 1.0,
         0.2, 0.3, -0.5;
  m.rates = {q0, q1};
  m.emission.ar_intercept = true;
  const VectorXd mu[3] = {(VectorXd(2) << -1.5, 0.0).finished(), (VectorXd(2) << 1.5, 0.0).finished(),
                          (VectorXd(2) << 0.0, 1.5).finished()};
  const double psi[3] = {0.2, -0.1, 0.0};
  for (int s = 0; s < 3; ++s) {
    StateEmission e;
    e.mu = mu[s];
    e.psi = psi[s] * MatrixXd::Identity(2, 2);
    e.sigma = (MatrixXd(2, 2) << 0.4, 0.1, 0.1, 0.3).finished();
    m.emission.states.push_back(e);
  }
  m.init_dist = (VectorXd(3) << 0.5, 0.3, 0.2).finished();
  m.validate();
  return m;
}

RecoveryResult run_mle_recovery(const RecoveryConfig& config, const ProgressFn& progress) {
  const auto start = Clock::now();
  const ModelParams truth = recovery_model();
  const ParameterCodec codec(truth);
  RecoveryResult out;
  out.names = codec.natural_names();
  out.truth = codec.natural(truth);
  for (int r = 0; r < config.replications; ++r) {
    const auto rep_start = Clock::now();
    const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    const ModelDataset sim = simulate_from_model(truth, config.n, derive_seed(rep_seed, 1), config.visits);
    try {
      MleConfig mc;
      mc.max_iterations = config.mle_iterations;
      mc.restarts = config.mle_restarts;
      mc.seed = derive_seed(rep_seed, 2);
      mc.threads = config.threads;
      const MleResult fit = fit_mle(sim.data, truth, mc);
      const ModelParams aligned = align_to_reference(fit.params, truth).params;
      FisherConfig fc;
      fc.threads = config.threads;
      const FisherReport info = fisher_information(sim.data, aligned, fc);
      const MatrixXd cov_theta = info.total.ldlt().solve(MatrixXd::Identity(info.total.rows(), info.total.cols()));
      const MatrixXd cov = info.jacobian * cov_theta * info.jacobian.transpose();
      out.estimates.push_back(codec.natural(aligned));
      out.ses.push_back(cov.diagonal().cwiseMax(0.0).cwiseSqrt());
      out.converged.push_back(fit.report.converged ? 1 : 0);
    } catch (const NumericalError& e) {
      ++out.failures;
      say(progress, "recovery replication " + std::to_string(r + 1) + " failed: " + e.what());
      continue;
    }
    std::ostringstream msg;
    msg << "recovery replication " << r + 1 << "/" << config.replications << " done in " << elapsed(rep_start)
        << " s";
    say(progress, msg.str());
  }
  out.seconds = elapsed(start);
  return out;
}

}  // namespace pomdp_dtr
