#include "pomdp_dtr/simulation.hpp"

#include <cmath>

#include "pomdp_dtr/errors.hpp"

namespace pomdp_dtr {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

namespace {

double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kLog2Pi = 1.8378770664093454836;

/// Gaussian factors of the emission table, for sampling and oracle filtering.
struct EmissionFactors {
  std::vector<MatrixXd> chol;
  std::vector<MatrixXd> inv;
  std::vector<double> log_norm;

  explicit EmissionFactors(const EmissionParams& e) {
    for (std::size_t m = 0; m < e.states.size(); ++m) {
      Eigen::LLT<MatrixXd> llt(e.states[m].sigma);
      if (llt.info() != Eigen::Success) throw NonSpdError("scenario covariance is not positive definite");
      const MatrixXd l = llt.matrixL();
      chol.push_back(l);
      inv.push_back(llt.solve(MatrixXd::Identity(l.rows(), l.cols())));
      log_norm.push_back(-0.5 * (static_cast<double>(l.rows()) * kLog2Pi) -
                         l.diagonal().array().log().sum());
    }
  }
};

VectorXd emission_mean(const EmissionParams& e, int m, const VectorXd* prev) {
  if (!prev) return e.states[m].mu;
  VectorXd mean = e.states[m].psi * (*prev);
  if (e.ar_intercept) mean += e.states[m].mu;
  return mean;
}

VectorXd stationary(const MatrixXd& q) {
  const auto k = q.rows();
  MatrixXd a(k + 1, k);
  a.topRows(k) = q.transpose();
  a.row(k).setOnes();
  VectorXd b = VectorXd::Zero(k + 1);
  b[k] = 1.0;
  VectorXd pi = a.colPivHouseholderQr().solve(b);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

int sample_index(const VectorXd& p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng) * p.sum();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    r -= p[i];
    if (r < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

}  // namespace

ScenarioSpec ScenarioSpec::preset(int scenario) {
  if (scenario != 1 && scenario != 2) throw ValidationError("scenario must be 1 or 2");
  ScenarioSpec s;
  s.scenario = scenario;
  const MatrixXd eye = MatrixXd::Identity(3, 3);
  const MatrixXd ones = MatrixXd::Ones(3, 3);
  const auto state = [](VectorXd mu, MatrixXd psi, MatrixXd sigma) {
    StateEmission e;
    e.mu = std::move(mu);
    e.psi = std::move(psi);
    e.sigma = std::move(sigma);
    return e;
  };
  VectorXd m1(3), m2(3), m3(3), m4(3);
  m1 << 2, 2, 2;
  m2 << 2, 1, -2;
  m3 << -2, 1, 2;
  m4 << -2, -2, -2;
  const MatrixXd s12 = 0.1 * eye + 0.1 * ones;
  const MatrixXd s34 = 0.3 * eye - 0.1 * ones + s.covariance_ridge * eye;
  s.emission.tie_covariances = true;
  s.emission.ar_intercept = true;
  s.emission.states = {state(m1, 0.1 * eye, s12), state(m2, 0.1 * eye, s12),
                       state(m3, -0.1 * eye, s34), state(m4, -0.1 * eye, s34),
                       state(VectorXd::Zero(3), MatrixXd::Zero(3, 3), eye)};
  s.behavior.resize(2, 4);
  s.behavior << -0.2, 0.1, -0.1, 0.1,
                -0.2, -0.1, 0.1, -0.1;
  s.utility = scenario == 1 ? UtilitySpec::neg_abs_default() : UtilitySpec::belief_match_default();
  return s;
}

void ScenarioSpec::validate() const {
  if (scenario != 1 && scenario != 2) throw ValidationError("scenario must be 1 or 2");
  if (num_states != 5 || obs_dim != 3 || num_actions != 3) {
    throw ValidationError("scenarios are defined for K = 5, p = 3, L = 3");
  }
  if (!(horizon_days > 0.0)) throw ValidationError("horizon must be positive");
  if (static_cast<int>(emission.states.size()) != num_states) {
    throw ValidationError("emission table must have K states");
  }
  if (behavior.rows() != num_actions - 1 || behavior.cols() != obs_dim + 1) {
    throw ValidationError("behavior coefficients must be (L-1) x (1+p)");
  }
  if (static_cast<int>(group.size()) != num_states) throw ValidationError("group map must have K entries");
  if (e1_low > e1_high || e3_low > e3_high) throw ValidationError("random-effect ranges are reversed");
}

std::vector<MatrixXd> ScenarioSpec::rates_per_day(double e3) const {
  const auto link = [&](double z) { return rate_link == RateLink::expit ? expit(z) : std::exp(z); };
  std::vector<MatrixXd> q(num_actions, MatrixXd::Zero(num_states, num_states));
  // pairs boosted by action 1 and by action 2 (0-based)
  const int boost1[4][2] = {{0, 4}, {3, 4}, {1, 2}, {2, 1}};
  const int boost2[4][2] = {{1, 4}, {2, 4}, {0, 3}, {3, 0}};
  for (int a = 0; a < num_actions; ++a) {
    MatrixXd z = MatrixXd::Constant(num_states, num_states, e3);
    for (const auto& pr : boost1) z(pr[0], pr[1]) += a == 0 ? 5.0 : 0.0;
    for (const auto& pr : boost2) z(pr[0], pr[1]) += a == 1 ? 5.0 : 0.0;
    for (int l = 0; l < 4; ++l) z(4, l) += (a == 0 || a == 1) ? 2.0 : 0.0;
    for (int k = 0; k < num_states; ++k) {
      for (int l = 0; l < num_states; ++l)
        if (k != l) q[a](k, l) = link(z(k, l));
      q[a](k, k) = -q[a].row(k).sum();
    }
  }
  return q;
}

VectorXd ScenarioSpec::behavior_probs(const VectorXd& x) const {
  VectorXd scores = VectorXd::Zero(num_actions);
  for (int a = 0; a + 1 < num_actions; ++a) {
    scores[a] = behavior(a, 0) + behavior.row(a).tail(obs_dim).dot(x);
  }
  const double top = scores.maxCoeff();
  VectorXd p = (scores.array() - top).exp();
  return p / p.sum();
}

ModelParams ScenarioSpec::reference_model() const {
  ModelParams m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.obs_dim = obs_dim;
  m.rates = rates_per_day(0.5 * (e3_low + e3_high));
  for (auto& q : m.rates) q *= horizon_days;
  m.emission = emission;
  m.init_dist = VectorXd::Constant(num_states, 1.0 / num_states);
  return m;
}

ActionRule behavior_rule(const ScenarioSpec& spec) {
  return [spec](const SummaryState& s, Rng& rng) { return sample_index(spec.behavior_probs(s.x), rng); };
}

ActionRule oracle_rule(const ScenarioSpec& spec) {
  const auto group = spec.group;
  const int l = spec.num_actions;
  return [group, l](const SummaryState& s, Rng&) {
    VectorXd mass = VectorXd::Zero(l);
    for (Eigen::Index m = 0; m < s.belief.size(); ++m) mass[group[m]] += s.belief[m];
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < l; ++a)
      if (mass[a] > mass[best]) best = a;
    return static_cast<int>(best);
  };
}

ActionRule policy_rule(const PolicyParams& policy) {
  return [policy](const SummaryState& s, Rng& rng) {
    return sample_index(policy_probs(policy, s), rng);
  };
}

SimulatedSubject simulate_trajectory(const ScenarioSpec& spec, Rng& rng, const ActionRule& rule,
                                     const std::string& subject_id) {
  spec.validate();
  const EmissionFactors fac(spec.emission);
  const int k = spec.num_states, p = spec.obs_dim;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> gamma1(1.0, 1.0);
  SimulatedSubject out;

  const auto draw_x = [&](int m, const VectorXd* prev) {
    VectorXd z(p);
    for (int i = 0; i < p; ++i) z[i] = normal(rng);
    return VectorXd(emission_mean(spec.emission, m, prev) + fac.chol[m] * z);
  };
  const auto log_f = [&](int m, const VectorXd& x, const VectorXd* prev) {
    const VectorXd r = x - emission_mean(spec.emission, m, prev);
    return fac.log_norm[m] - 0.5 * r.dot(fac.inv[m] * r);
  };
  const auto correct = [&](const VectorXd& prior, const VectorXd& x, const VectorXd* prev) {
    VectorXd lf(k);
    for (int m = 0; m < k; ++m) lf[m] = log_f(m, x, prev);
    VectorXd post = prior.array() * (lf.array() - lf.maxCoeff()).exp();
    return VectorXd(post / post.sum());
  };
  const auto draw_state_s2 = [&]() {
    VectorXd w(k);
    for (int m = 0; m < k; ++m) w[m] = gamma1(rng);
    return sample_index(w / w.sum(), rng);
  };

  for (;;) {
    SimulatedSubject s;
    s.e1 = spec.e1_low + (spec.e1_high - spec.e1_low) * unif(rng);
    s.e3 = spec.e3_low + (spec.e3_high - spec.e3_low) * unif(rng);
    const auto q = spec.rates_per_day(s.e3);
    const VectorXd uniform = VectorXd::Constant(k, 1.0 / k);
    VectorXd init = uniform;
    if (spec.scenario == 1 && spec.initial == InitialLaw::stationary) init = stationary(q[spec.num_actions - 1]);
    if (spec.scenario == 1 && spec.initial == InitialLaw::stable) init = VectorXd::Unit(k, k - 1);

    std::vector<double> times;
    std::vector<int> actions;
    std::vector<VectorXd> xs;
    int m = spec.scenario == 1 ? sample_index(init, rng) : draw_state_s2();
    VectorXd x = draw_x(m, nullptr);
    VectorXd b = correct(spec.scenario == 1 ? init : uniform, x, nullptr);
    double t = 0.0;
    for (;;) {
      times.push_back(t);
      xs.push_back(x);
      s.states.push_back(m);
      s.oracle_beliefs.push_back(b);
      const SummaryState state{b, x};
      const int a = rule(state, rng);
      actions.push_back(a);
      const double rate = std::exp(s.e1 + 0.1 * (b[0] + b[1]) - 0.1 * (b[2] + b[3]));
      const double dt = -std::log(1.0 - unif(rng)) / rate;
      if (t + dt > spec.horizon_days) break;
      t += dt;
      VectorXd pred = uniform;
      if (spec.scenario == 1) {
        const MatrixXd pm = transition_matrix(q[a], dt);
        m = sample_index(pm.row(m).transpose(), rng);
        pred = pm.transpose() * b;
      } else {
        m = draw_state_s2();
      }
      const VectorXd prev = x;
      x = draw_x(m, &prev);
      b = correct(pred, x, &prev);
    }
    if (times.size() < 2) {
      ++out.resamples;
      continue;
    }
    const int jn = static_cast<int>(times.size());
    s.traj.subject_id = subject_id;
    s.traj.actions = actions;
    s.traj.obs.resize(jn, p);
    for (int j = 0; j < jn; ++j) {
      s.traj.times.push_back(times[j] / spec.horizon_days);
      s.traj.obs.row(j) = xs[j].transpose();
    }
    for (int j = 0; j + 1 < jn; ++j) {
      if (spec.scenario == 1) {
        const SummaryState cur{s.oracle_beliefs[j], xs[j]}, next{s.oracle_beliefs[j + 1], xs[j + 1]};
        s.utilities.push_back(evaluate_utility(spec.utility, cur, actions[j], next, spec.num_actions));
      } else {
        s.utilities.push_back(spec.group[s.states[j]] == actions[j] ? 1.0 : -1.0);
      }
    }
    s.resamples = out.resamples;
    return s;
  }
}

SimulatedDataset simulate_dataset(const ScenarioSpec& spec, int n, std::uint64_t seed,
                                  const ActionRule& rule) {
  if (n < 1) throw ValidationError("number of subjects must be positive");
  SimulatedDataset out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    SimulatedSubject s = simulate_trajectory(spec, rng, rule, std::to_string(i + 1));
    out.resamples += s.resamples;
    out.data.push_back(s.traj);
    out.subjects.push_back(std::move(s));
  }
  return out;
}

std::pair<ValueEstimate, ValueEstimate> true_values_mc(const ScenarioSpec& spec,
                                                       const ActionRule& rule, int n_rollouts,
                                                       std::uint64_t seed, double gamma) {
  if (n_rollouts < 2) throw ValidationError("need at least two rollouts");
  Rng rng(seed);
  std::vector<double> disc(n_rollouts), sums(n_rollouts), counts(n_rollouts);
  for (int i = 0; i < n_rollouts; ++i) {
    const SimulatedSubject s = simulate_trajectory(spec, rng, rule);
    double v = 0.0, g = 1.0, total = 0.0;
    for (double u : s.utilities) {
      v += g * u;
      g *= gamma;
      total += u;
    }
    disc[i] = v;
    sums[i] = total;
    counts[i] = static_cast<double>(s.utilities.size());
  }
  const double n = n_rollouts;
  const auto mean = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e;
    return s / n;
  };
  ValueEstimate d, a;
  d.rollouts = a.rollouts = n_rollouts;
  d.value = mean(disc);
  double ss = 0.0;
  for (double e : disc) ss += (e - d.value) * (e - d.value);
  d.se = std::sqrt(ss / (n - 1.0) / n);
  const double mj = mean(counts);
  a.value = mean(sums) / mj;
  ss = 0.0;
  for (int i = 0; i < n_rollouts; ++i) {
    const double z = (sums[i] - a.value * counts[i]) / mj;
    ss += z * z;
  }
  a.se = std::sqrt(ss / (n - 1.0) / n);
  return {d, a};
}

ValueEstimate true_value_mc(const ScenarioSpec& spec, const ActionRule& rule, Criterion criterion,
                            int n_rollouts, std::uint64_t seed, double gamma) {
  const auto both = true_values_mc(spec, rule, n_rollouts, seed, gamma);
  return criterion == Criterion::discounted ? both.first : both.second;
}

ModelDataset simulate_from_model(const ModelParams& params, int n, std::uint64_t seed,
                                 const ModelSimConfig& config) {
  params.validate();
  if (n < 1) throw ValidationError("number of subjects must be positive");
  if (!(config.mean_gap > 0.0) || !(config.horizon > 0.0)) {
    throw ValidationError("mean gap and horizon must be positive");
  }
  const int k = params.num_states, p = params.obs_dim, l = params.num_actions;
  std::vector<MatrixXd> chol, chol_init;
  for (int m = 0; m < k; ++m) {
    Eigen::LLT<MatrixXd> a(params.emission.states[m].sigma), b(params.emission.initial_covariance(m));
    if (a.info() != Eigen::Success || b.info() != Eigen::Success) {
      throw NonSpdError("model covariance is not positive definite");
    }
    chol.push_back(a.matrixL());
    chol_init.push_back(b.matrixL());
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, l - 1);
  const auto gauss = [&]() {
    VectorXd z(p);
    for (int i = 0; i < p; ++i) z[i] = normal(rng);
    return z;
  };
  ModelDataset out;
  for (int i = 0; i < n; ++i) {
    for (;;) {
      Trajectory t;
      t.subject_id = std::to_string(i + 1);
      std::vector<int> states;
      std::vector<VectorXd> xs;
      int m = sample_index(params.init_dist, rng);
      VectorXd x = params.emission.states[m].mu + chol_init[m] * gauss();
      double time = 0.0;
      for (;;) {
        t.times.push_back(time);
        states.push_back(m);
        xs.push_back(x);
        const int a = pick(rng);
        t.actions.push_back(a);
        const double dt = -std::log(1.0 - unif(rng)) * config.mean_gap;
        if (time + dt > config.horizon) break;
        time += dt;
        m = sample_index(transition_matrix(params.rates[a], dt).row(m).transpose(), rng);
        const VectorXd prev = x;
        x = emission_mean(params.emission, m, &prev) + chol[m] * gauss();
      }
      if (t.times.size() < 2) {
        ++out.resamples;
        continue;
      }
      t.obs.resize(static_cast<Eigen::Index>(xs.size()), p);
      for (std::size_t j = 0; j < xs.size(); ++j) t.obs.row(static_cast<Eigen::Index>(j)) = xs[j].transpose();
      out.data.push_back(std::move(t));
      out.states.push_back(std::move(states));
      break;
    }
  }
  return out;
}

std::string to_string(RateLink l) { return l == RateLink::expit ? "expit" : "exp"; }

RateLink parse_rate_link(const std::string& s) {
  if (s == "expit") return RateLink::expit;
  if (s == "exp") return RateLink::exp;
  throw ValidationError("unknown rate link '" + s + "'");
}

std::string to_string(InitialLaw l) {
  switch (l) {
    case InitialLaw::uniform: return "uniform";
    case InitialLaw::stationary: return "stationary";
    case InitialLaw::stable: return "stable";
  }
  return "uniform";
}

InitialLaw parse_initial_law(const std::string& s) {
  if (s == "uniform") return InitialLaw::uniform;
  if (s == "stationary") return InitialLaw::stationary;
  if (s == "stable") return InitialLaw::stable;
  throw ValidationError("unknown initial law '" + s + "'");
}

}  // namespace pomdp_dtr
