// pomdp-dtr: simulate, fit, transform, learn, ci and experiment commands.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "pomdp_dtr/config.hpp"
#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/experiment.hpp"

using namespace pomdp_dtr;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTool = "pomdp-dtr 1.0";

struct Run {
  RunConfig cfg;
  std::string hash;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::vector<std::string> written;

  Json provenance() const {
    Json p;
    p["tool"] = kTool;
    p["command"] = cfg.command;
    p["config_hash"] = hash;
    p["seed"] = cfg.seed;
    p["rng"] = "mt19937_64";
    p["config"] = to_json(cfg);
    p["config"].erase("out");
    return p;
  }

  std::string path(const std::string& name) const { return (fs::path(cfg.out) / name).string(); }

  void save(const std::string& name, const std::string& format, const Json& body) {
    write_json(path(name), make_artifact(format, body, provenance()));
    written.push_back(name);
  }

  void save_text(const std::string& name, const std::string& text) {
    std::ofstream out(path(name));
    if (!out) throw IoError("cannot write '" + path(name) + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path(name) + "'");
    written.push_back(name);
  }

  /// Wall time lives in a manifest so that artifacts stay byte-identical
  /// across reruns of the same configuration.
  void finish() const {
    Json m;
    m["tool"] = kTool;
    m["command"] = cfg.command;
    m["config_hash"] = hash;
    m["seed"] = cfg.seed;
    m["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    m["finished_at"] = buf;
    m["artifacts"] = written;
    write_json(path(cfg.command + ".manifest.json"), m);
  }
};

void prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) throw IoError("cannot create output directory '" + cfg.out + "'");
}

void require_path(const std::string& value, const char* what) {
  if (value.empty()) throw ValidationError(std::string("missing ") + what + " (see --help)");
  if (!fs::exists(value)) throw IoError(std::string(what) + " '" + value + "' does not exist");
}

ScenarioSpec scenario_of(const RunConfig& cfg) {
  ScenarioSpec spec = ScenarioSpec::preset(cfg.scenario);
  spec.initial = parse_initial_law(cfg.initial_law);
  spec.rate_link = parse_rate_link(cfg.rate_link);
  spec.validate();
  return spec;
}

UtilitySpec utility_of(const RunConfig& cfg) {
  if (cfg.utility == "scenario") return scenario_of(cfg).utility;
  if (cfg.utility == "belief_match") return UtilitySpec::belief_match_default();
  return UtilitySpec::neg_abs_default();
}

Dataset load_data(const RunConfig& cfg) {
  require_path(cfg.input, "trajectory file (--input)");
  IngestOptions opt;
  opt.num_actions = cfg.num_actions;
  opt.time_scale = cfg.time_scale;
  Dataset data = read_trajectories(cfg.input, opt);
  for (const auto& t : data) t.validate(cfg.num_actions);
  return data;
}

ModelParams load_model(const RunConfig& cfg) {
  require_path(cfg.model, "model artifact (--model)");
  return model_from_json(artifact_body(read_json(cfg.model), "pomdp_dtr.model")["params"]);
}

Json load_tuples_body(const RunConfig& cfg) {
  require_path(cfg.tuples, "tuples artifact (--tuples)");
  return artifact_body(read_json(cfg.tuples), "pomdp_dtr.tuples");
}

PolicyParams policy_shape(const RunConfig& cfg, int k, int p) {
  const BasisSpec basis{parse_basis_kind(cfg.basis), parse_basis_inputs(cfg.basis_inputs), true, k, p};
  const PolicyKind kind = parse_policy_kind(cfg.policy_kind);
  return PolicyParams::zeros(cfg.num_actions, basis, kind, kind == PolicyKind::stochastic ? cfg.floor : 0.0);
}

BasisSpec value_basis(const PolicyParams& policy, Criterion criterion) {
  BasisSpec v = policy.basis;
  v.kind = BasisKind::linear;
  v.intercept = criterion == Criterion::discounted;
  return v;
}

VConfig vconfig(const RunConfig& cfg) {
  VConfig vc;
  vc.gamma = cfg.gamma;
  vc.weight_cap = cfg.weight_cap;
  return vc;
}

// ---------------------------------------------------------------------------

void cmd_simulate(Run& run) {
  const RunConfig& cfg = run.cfg;
  const ScenarioSpec spec = scenario_of(cfg);
  const SimulatedDataset sim = simulate_dataset(spec, cfg.n, cfg.seed, behavior_rule(spec));
  write_trajectories(run.path("trajectories.csv"), sim.data);
  run.written.push_back("trajectories.csv");
  Json subjects = Json::array();
  for (const auto& s : sim.subjects) {
    Json j;
    j["subject_id"] = s.traj.subject_id;
    std::vector<int> states;
    for (int m : s.states) states.push_back(m + 1);
    j["states"] = states;
    Json beliefs = Json::array();
    for (const auto& b : s.oracle_beliefs) beliefs.push_back(vector_to_json(b));
    j["oracle_beliefs"] = beliefs;
    j["utilities"] = s.utilities;
    j["e1"] = s.e1;
    j["e3"] = s.e3;
    subjects.push_back(j);
  }
  Json body;
  body["scenario"] = cfg.scenario;
  body["horizon_days"] = spec.horizon_days;
  body["time_unit"] = "fraction of the horizon";
  body["initial_law"] = to_string(spec.initial);
  body["rate_link"] = to_string(spec.rate_link);
  body["reference_model"] = to_json(spec.reference_model());
  body["resamples"] = sim.resamples;
  body["subjects"] = subjects;
  run.save("truth.json", "pomdp_dtr.simulation_truth", body);
  std::cout << "simulated " << sim.data.size() << " subjects (" << sim.resamples << " redraws) into "
            << cfg.out << "\n";
}

void cmd_fit(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Dataset data = load_data(cfg);
  ModelParams init;
  if (cfg.init == "scenario") {
    init = scenario_of(cfg).reference_model();
    if (init.num_states != cfg.num_states || init.num_actions != cfg.num_actions ||
        init.obs_dim != data.front().obs.cols()) {
      throw ValidationError("scenario starting values do not match K, L or p of the data");
    }
  } else {
    init = initial_guess(data, cfg.num_states, cfg.num_actions, cfg.ar_intercept, cfg.tie_covariances);
  }
  init.emission.ar_intercept = cfg.ar_intercept;
  init.emission.tie_covariances = cfg.tie_covariances;
  if (!cfg.tie_covariances)
    for (auto& s : init.emission.states)
      if (s.sigma_init.size() == 0) s.sigma_init = s.sigma;
  MleConfig mc;
  mc.max_iterations = cfg.mle_iterations;
  mc.restarts = cfg.mle_restarts;
  mc.gradient_tolerance = cfg.mle_tolerance;
  mc.seed = cfg.seed;
  mc.threads = cfg.threads;
  const MleResult fit = fit_mle(data, init, mc);
  const AlignResult al = cfg.init == "scenario" ? align_to_reference(fit.params, init) : align_labels(fit.params);
  FisherConfig fc;
  fc.threads = cfg.threads;
  const FisherReport info = fisher_information(data, al.params, fc);
  const ParameterCodec codec(al.params);
  const MatrixXd cov_theta = info.total.ldlt().solve(MatrixXd::Identity(info.total.rows(), info.total.cols()));
  const VectorXd se = (info.jacobian * cov_theta * info.jacobian.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  const VectorXd est = codec.natural(al.params);
  Json table = Json::array();
  const auto names = codec.natural_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    table.push_back({{"name", names[i]}, {"estimate", est[static_cast<Eigen::Index>(i)]},
                     {"se", se[static_cast<Eigen::Index>(i)]}});
  }
  Json body;
  body["params"] = to_json(al.params);
  body["report"] = {{"loglik", fit.report.loglik},
                    {"loglik_init", fit.report.loglik_init},
                    {"iterations", fit.report.iterations},
                    {"evaluations", fit.report.evaluations},
                    {"gradient_norm", fit.report.gradient_norm},
                    {"converged", fit.report.converged},
                    {"starts", fit.report.starts},
                    {"best_start", fit.report.best_start},
                    {"label_tie", al.tie},
                    {"information_repaired", info.repaired},
                    {"information_min_eigenvalue", info.min_eigenvalue},
                    {"subjects", static_cast<int>(data.size())}};
  body["parameters"] = table;
  body["fisher_mean"] = matrix_to_json(info.mean);
  run.save("model.json", "pomdp_dtr.model", body);
  std::cout << "log-likelihood " << fit.report.loglik << " after " << fit.report.iterations << " iterations"
            << (fit.report.converged ? "" : " (not converged)") << "\n";
}

void cmd_transform(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Dataset data = load_data(cfg);
  const ModelParams model = load_model(cfg);
  const UtilitySpec uspec = utility_of(cfg);
  Json body;
  std::vector<MdpTuple> tuples;
  if (cfg.propensity == "scenario") {
    const ScenarioSpec spec = scenario_of(cfg);
    const PropensityFn known = [spec](const SummaryState& s) { return spec.behavior_probs(s.x); };
    tuples = build_mdp_dataset(data, model, uspec, known, cfg.threads);
    body["propensity"] = {{"source", "scenario"}, {"scenario", cfg.scenario}};
  } else {
    tuples = build_mdp_dataset(data, model, uspec, {}, cfg.threads);
    const BasisSpec pb{BasisKind::linear, BasisInputs::x, true, model.num_states, model.obs_dim};
    const PropensityModel pm = estimate_propensity(tuples, pb, model.num_actions);
    attach_propensity(tuples, pm);
    body["propensity"] = {{"source", "estimate"}, {"model", to_json(pm)}};
    if (pm.separation_warning) std::cerr << "warning: propensity model hit quasi-separation; ridge raised\n";
  }
  body["utility"] = to_json(uspec);
  body["num_states"] = model.num_states;
  body["num_actions"] = model.num_actions;
  body["obs_dim"] = model.obs_dim;
  body["subjects"] = count_subjects(tuples);
  body["tuples"] = to_json(tuples);
  run.save("tuples.json", "pomdp_dtr.tuples", body);
  std::cout << tuples.size() << " tuples from " << count_subjects(tuples) << " subjects\n";
}

Json fit_json(const EvalDesign& design, const PolicyParams& policy, Criterion criterion, const VConfig& vc) {
  Json j;
  j["criterion"] = to_string(criterion);
  j["gamma"] = vc.gamma;
  j["weight_cap"] = vc.weight_cap;
  j["value_basis"] = to_json(design.value_basis);
  if (criterion == Criterion::discounted) {
    const DiscountedFit f = solve_discounted(design, policy, vc);
    j["alpha"] = vector_to_json(f.alpha);
    j["condition"] = f.condition;
    j["residual"] = f.residual;
  } else {
    const AverageFit f = solve_average(design, policy, vc);
    j["value"] = f.value;
    j["beta"] = vector_to_json(f.beta);
    j["condition"] = f.condition;
    j["residual"] = f.residual;
  }
  return j;
}

void cmd_learn(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Json tb = load_tuples_body(cfg);
  const auto tuples = tuples_from_json(tb["tuples"]);
  const int k = tb["num_states"].get<int>(), p = tb["obs_dim"].get<int>();
  if (tb["num_actions"].get<int>() != cfg.num_actions) throw ValidationError("num_actions differs from the tuples");
  const Criterion criterion = parse_criterion(cfg.criterion);
  const VConfig vc = vconfig(cfg);
  const auto reference = ReferenceDistribution::empirical_initial(tuples);
  Json body;
  PolicyParams policy;
  double value = 0.0;
  if (!cfg.policy.empty()) {
    require_path(cfg.policy, "policy artifact (--policy-file)");
    policy = policy_from_json(artifact_body(read_json(cfg.policy), "pomdp_dtr.policy")["policy"]);
    if (policy.num_actions != cfg.num_actions) throw ValidationError("policy treatment count differs");
    const EvalDesign design = make_design(tuples, policy.basis, value_basis(policy, criterion), reference,
                                          cfg.num_actions);
    value = policy_value(design, policy, criterion, vc);
    body["search"] = {{"evaluated_only", true}, {"penalty", 0.0}};
    body["fit"] = fit_json(design, policy, criterion, vc);
  } else {
    const PolicyParams shape = policy_shape(cfg, k, p);
    const EvalDesign design = make_design(tuples, shape.basis, value_basis(shape, criterion), reference,
                                          cfg.num_actions);
    SearchConfig sc;
    sc.restarts = cfg.search_restarts;
    sc.max_evaluations = cfg.search_evaluations;
    sc.penalty = cfg.penalty;
    sc.seed = cfg.seed;
    sc.threads = cfg.threads;
    const SearchResult res = optimize_policy(design, shape, criterion, vc, sc);
    policy = res.policy;
    value = res.value;
    body["search"] = {{"evaluated_only", false},
                      {"objective", res.objective},
                      {"penalty", res.penalty},
                      {"min_probability", res.min_probability},
                      {"raw_min_probability", res.raw_min_probability},
                      {"evaluations", res.evaluations},
                      {"restarts", res.restarts},
                      {"failed_restarts", res.failed_restarts},
                      {"tuning_rounds", res.tuning_rounds}};
    body["fit"] = fit_json(design, policy, criterion, vc);
  }
  body["policy"] = to_json(policy);
  body["value"] = value;
  body["criterion"] = to_string(criterion);
  body["gamma"] = vc.gamma;
  run.save("policy.json", "pomdp_dtr.policy", body);
  std::cout << to_string(criterion) << " value " << value << "\n";
}

void cmd_ci(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Dataset data = load_data(cfg);
  const ModelParams model = load_model(cfg);
  const Json tb = load_tuples_body(cfg);
  const auto tuples = tuples_from_json(tb["tuples"]);
  const UtilitySpec uspec = utility_from_json(tb["utility"]);
  require_path(cfg.policy, "policy artifact (--policy-file)");
  const Json pb = artifact_body(read_json(cfg.policy), "pomdp_dtr.policy");
  const PolicyParams policy = policy_from_json(pb["policy"]);
  const Criterion criterion = parse_criterion(pb["criterion"].get<std::string>());
  VConfig vc = vconfig(cfg);
  vc.gamma = pb["gamma"].get<double>();
  const double penalty = pb["search"]["penalty"].get<double>();

  const auto reference = ReferenceDistribution::empirical_initial(tuples);
  const EvalDesign design = make_design(tuples, policy.basis, value_basis(policy, criterion), reference,
                                        cfg.num_actions);
  FisherConfig fc;
  fc.threads = cfg.threads;
  const FisherReport info = fisher_information(data, model, fc);
  const PerturbationCache cache =
      build_perturbations(data, model, tuples, uspec, design, reference, 1e-5, cfg.threads);
  const PolicyCovariance pc = policy_param_covariance(design, policy, criterion, vc, penalty);
  const SandwichComponents at_hat = value_variance(design, policy, criterion, vc, &cache, info.mean);
  const ValueVarianceFn evaluator = [&](const VectorXd& xi) {
    PolicyParams p = policy;
    p.set_free(xi);
    const SandwichComponents s = value_variance(design, p, criterion, vc, &cache, info.mean);
    return std::make_pair(s.estimate, s.variance);
  };
  CiConfig cc;
  cc.points = cfg.ci_points;
  cc.threads = cfg.threads;
  const ProjectionCi ci = projection_ci(policy.free(), pc.cov, evaluator, design.num_subjects, cfg.eta, cc);
  Json body;
  body["criterion"] = to_string(criterion);
  body["estimate"] = ci.estimate;
  body["eta"] = ci.eta;
  body["level"] = ci.level;
  body["lower"] = ci.lower;
  body["upper"] = ci.upper;
  body["wald_lower"] = ci.wald_lower;
  body["wald_upper"] = ci.wald_upper;
  body["chi2"] = ci.chi2;
  body["z"] = ci.z;
  body["points_evaluated"] = ci.evaluated;
  body["points_skipped"] = ci.skipped;
  body["policy_dim"] = ci.dim;
  body["sampled_dim"] = ci.sampled_dim;
  body["value_variance"] = at_hat.variance;
  body["subjects"] = design.num_subjects;
  body["policy_covariance"] = {{"sigma1_min_eigenvalue", pc.min_curvature},
                               {"flat", pc.flat},
                               {"step", pc.step},
                               {"cov", matrix_to_json(pc.cov)}};
  body["information_repaired"] = info.repaired;
  run.save("ci.json", "pomdp_dtr.ci", body);
  std::cout << "estimate " << ci.estimate << ", " << 100.0 * ci.level << "% interval [" << ci.lower << ", "
            << ci.upper << "]" << (pc.flat ? " (flat value surface)" : "") << "\n";
}

void cmd_experiment(Run& run) {
  const RunConfig& cfg = run.cfg;
  const auto log = [](const std::string& s) { std::cerr << s << "\n"; };
  ExperimentConfig ec;
  ec.scenario = cfg.scenario;
  ec.n = cfg.n;
  ec.replications = cfg.replications;
  ec.seed = cfg.seed;
  ec.gamma = cfg.gamma;
  ec.stochastic_floor = cfg.floor;
  ec.mle_iterations = cfg.mle_iterations;
  ec.mle_restarts = cfg.mle_restarts;
  ec.search.restarts = cfg.search_restarts;
  ec.search.max_evaluations = cfg.search_evaluations;
  ec.search.penalty = cfg.penalty;
  ec.rollouts = cfg.rollouts;
  ec.estimate_propensity = cfg.propensity == "estimate";
  ec.initial = parse_initial_law(cfg.initial_law);
  ec.rate_link = parse_rate_link(cfg.rate_link);
  ec.threads = cfg.threads;
  if (!cfg.quadratic) {
    for (const auto& c : ExperimentConfig::full_table())
      if (c.basis == BasisKind::linear) ec.classes.push_back(c);
  }
  if (cfg.experiment == "table") {
    const ValueTable t = run_value_table(ec, log);
    run.save_text("table.tsv", format_value_table(t));
    run.save("table.json", "pomdp_dtr.value_table", to_json(t));
    std::cout << format_value_table(t);
  } else if (cfg.experiment == "coverage") {
    CoverageConfig cc;
    cc.base = ec;
    cc.eta = cfg.eta;
    cc.ci.points = cfg.ci_points;
    cc.truth_search = ec.search;
    const CoverageResult r = run_coverage(cc, log);
    run.save_text("coverage.tsv", format_coverage_table(r));
    run.save("coverage.json", "pomdp_dtr.coverage", to_json(r));
    std::cout << format_coverage_table(r);
  } else {
    RecoveryConfig rc;
    rc.n = cfg.n;
    rc.replications = cfg.replications;
    rc.seed = cfg.seed;
    rc.mle_iterations = cfg.mle_iterations;
    rc.threads = cfg.threads;
    const RecoveryResult r = run_mle_recovery(rc, log);
    Json body;
    body["names"] = r.names;
    body["truth"] = vector_to_json(r.truth);
    Json est = Json::array(), se = Json::array();
    for (const auto& e : r.estimates) est.push_back(vector_to_json(e));
    for (const auto& s : r.ses) se.push_back(vector_to_json(s));
    body["estimates"] = est;
    body["standard_errors"] = se;
    body["converged"] = r.converged;
    body["failures"] = r.failures;
    run.save("recovery.json", "pomdp_dtr.recovery", body);
    std::cout << r.estimates.size() << " recovery fits, " << r.failures << " failures\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-state treatment regimes from irregularly timed observational data"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  RunConfig flags;
  app.add_option("--config", config_path, "Flat JSON config file (unknown keys are errors)");
  auto* o_seed = app.add_option("--seed", flags.seed, "Random seed");
  auto* o_threads = app.add_option("--threads", flags.threads, "Worker threads (1 gives bit-stable output)");
  auto* o_scenario = app.add_option("--scenario", flags.scenario, "Simulation scenario")->check(CLI::IsMember({1, 2}));
  auto* o_criterion = app.add_option("--criterion", flags.criterion, "Value criterion")
                          ->check(CLI::IsMember({"discounted", "average"}));
  auto* o_gamma = app.add_option("--gamma", flags.gamma, "Discount factor");
  auto* o_basis = app.add_option("--basis", flags.basis, "Policy basis")->check(CLI::IsMember({"linear", "quadratic"}));
  auto* o_policy = app.add_option("--policy", flags.policy_kind, "Policy class")
                       ->check(CLI::IsMember({"stochastic", "deterministic"}));
  auto* o_eta = app.add_option("--eta", flags.eta, "Projection interval level parameter (level 1 - 2 eta)");
  auto* o_out = app.add_option("--out", flags.out, "Output directory");
  auto* o_input = app.add_option("--input", flags.input, "Trajectory file (.csv, .tsv or .jsonl)");
  auto* o_model = app.add_option("--model", flags.model, "Fitted model artifact");
  auto* o_tuples = app.add_option("--tuples", flags.tuples, "Transformed dataset artifact");
  auto* o_policy_file = app.add_option("--policy-file", flags.policy, "Policy artifact");
  auto* o_n = app.add_option("--n", flags.n, "Number of subjects");
  auto* o_reps = app.add_option("--replications", flags.replications, "Monte Carlo replications");
  auto* o_exp = app.add_option("--experiment", flags.experiment, "Experiment harness")
                    ->check(CLI::IsMember({"table", "coverage", "recovery"}));
  auto* o_k = app.add_option("--num-states", flags.num_states, "Latent states K");
  auto* o_l = app.add_option("--num-actions", flags.num_actions, "Treatments L");
  auto* o_inputs = app.add_option("--basis-inputs", flags.basis_inputs, "Policy inputs")
                       ->check(CLI::IsMember({"both", "belief", "x"}));

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "Simulate trajectories and a hidden-truth sidecar"},
      {"fit", "Fit the latent model by maximum likelihood"},
      {"transform", "Filter beliefs and build transition tuples"},
      {"learn", "Estimate an optimal regime (or evaluate a given one)"},
      {"ci", "Projection confidence interval for the optimal value"},
      {"experiment", "Run a replication harness"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      require_path(config_path, "config file (--config)");
      cfg = load_config(config_path);
    }
    const auto take = [](CLI::Option* o, auto& dst, const auto& src) {
      if (o->count() > 0) dst = src;
    };
    take(o_seed, cfg.seed, flags.seed);
    take(o_threads, cfg.threads, flags.threads);
    take(o_scenario, cfg.scenario, flags.scenario);
    take(o_criterion, cfg.criterion, flags.criterion);
    take(o_gamma, cfg.gamma, flags.gamma);
    take(o_basis, cfg.basis, flags.basis);
    take(o_policy, cfg.policy_kind, flags.policy_kind);
    take(o_eta, cfg.eta, flags.eta);
    take(o_out, cfg.out, flags.out);
    take(o_input, cfg.input, flags.input);
    take(o_model, cfg.model, flags.model);
    take(o_tuples, cfg.tuples, flags.tuples);
    take(o_policy_file, cfg.policy, flags.policy);
    take(o_n, cfg.n, flags.n);
    take(o_reps, cfg.replications, flags.replications);
    take(o_exp, cfg.experiment, flags.experiment);
    take(o_k, cfg.num_states, flags.num_states);
    take(o_l, cfg.num_actions, flags.num_actions);
    take(o_inputs, cfg.basis_inputs, flags.basis_inputs);
    cfg.command = app.get_subcommands().front()->get_name();
    cfg.validate();

    Run run;
    run.cfg = cfg;
    run.hash = config_hash(cfg);
    prepare_out(cfg);
    if (cfg.command == "simulate") cmd_simulate(run);
    else if (cfg.command == "fit") cmd_fit(run);
    else if (cfg.command == "transform") cmd_transform(run);
    else if (cfg.command == "learn") cmd_learn(run);
    else if (cfg.command == "ci") cmd_ci(run);
    else cmd_experiment(run);
    run.finish();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const Json::exception& e) {
    std::cerr << "error: malformed artifact: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
