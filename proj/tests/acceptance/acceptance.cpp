// Acceptance report: one PASS/FAIL line per criterion.
//
// The process exits 0 whenever the report completes, whether or not the
// criteria pass; a nonzero status means the harness itself failed.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "pomdp_dtr/experiment.hpp"

using namespace pomdp_dtr;

namespace {

struct Options {
  std::set<int> criteria{1, 2, 3, 4, 5, 6};
  int s2_replications = 100;
  int s1_replications = 50;
  int coverage_replications = 100;
  int recovery_replications = 50;
  int bracket_s2_replications = 20;
  int bracket_s1_replications = 10;
  bool bracket = true;
  bool verbose = false;
  int threads = 1;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void report(bool pass, int id, const std::string& title, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << title << "): " << detail << std::endl;
}

void info(const std::string& text) { std::cout << "INFO  " << text << std::endl; }

ProgressFn progress_of(const Options& o) {
  if (!o.verbose) return {};
  return [](const std::string& s) { std::cerr << "  " << s << std::endl; };
}

std::string cell(const Summary& s) { return fmt(s.mean) + " (se " + fmt(s.se) + ", " + std::to_string(s.count) + " reps)"; }

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

// ---------------------------------------------------------------------------
// Criterion 5: oracle equivalences

double gauss_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  const Eigen::PartialPivLU<MatrixXd> lu(cov);
  const VectorXd d = x - mean;
  const double quad = d.dot(lu.solve(d));
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + std::log(lu.determinant()) + quad);
}

MatrixXd random_rate(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 2.0);
  MatrixXd q = MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j)
      if (i != j) q(i, j) = u(rng);
    q(i, i) = -q.row(i).sum();
  }
  return q;
}

MatrixXd random_spd(int p, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = 0.5 * z(rng);
  return a * a.transpose() + 0.3 * MatrixXd::Identity(p, p);
}

ModelParams random_model(int k, int l, int p, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelParams m;
  m.num_states = k;
  m.num_actions = l;
  m.obs_dim = p;
  for (int a = 0; a < l; ++a) m.rates.push_back(random_rate(k, rng));
  m.emission.ar_intercept = u(rng) < 0.5;
  m.emission.tie_covariances = u(rng) < 0.5;
  for (int s = 0; s < k; ++s) {
    StateEmission e;
    e.mu = VectorXd(p);
    for (int i = 0; i < p; ++i) e.mu[i] = 1.5 * z(rng);
    e.psi = MatrixXd(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) e.psi(i, j) = 0.2 * z(rng);
    e.sigma = random_spd(p, rng);
    e.sigma_init = random_spd(p, rng);
    m.emission.states.push_back(e);
  }
  m.init_dist = VectorXd(k);
  for (int s = 0; s < k; ++s) m.init_dist[s] = 0.2 + u(rng);
  m.init_dist /= m.init_dist.sum();
  return m;
}

// Joint log-density of the first `len` visits summed over every latent path,
// and the posterior of the last latent state.
std::pair<double, VectorXd> enumerate_paths(const Trajectory& t, const ModelParams& m, int len) {
  const int k = m.num_states;
  int total = 1;
  for (int j = 0; j < len; ++j) total *= k;
  std::vector<double> logw(total);
  std::vector<int> last(total);
  for (int code = 0; code < total; ++code) {
    std::vector<int> s(len);
    int c = code;
    for (int j = 0; j < len; ++j) {
      s[j] = c % k;
      c /= k;
    }
    const auto& e0 = m.emission.states[s[0]];
    double lw = std::log(m.init_dist[s[0]]) +
                gauss_logpdf(t.x(0), e0.mu, m.emission.tie_covariances ? e0.sigma : e0.sigma_init);
    for (int j = 1; j < len; ++j) {
      const MatrixXd p = (m.rates[t.actions[j - 1]] * (t.times[j] - t.times[j - 1])).exp();
      const auto& e = m.emission.states[s[j]];
      VectorXd mean = e.psi * t.x(j - 1);
      if (m.emission.ar_intercept) mean += e.mu;
      lw += std::log(p(s[j - 1], s[j])) + gauss_logpdf(t.x(j), mean, e.sigma);
    }
    logw[code] = lw;
    last[code] = s[len - 1];
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  VectorXd post = VectorXd::Zero(k);
  for (int code = 0; code < total; ++code) {
    const double w = std::exp(logw[code] - top);
    sum += w;
    post[last[code]] += w;
  }
  return {top + std::log(sum), post / sum};
}

struct OracleCheck {
  bool pass = true;
  std::string detail;
};

OracleCheck filter_vs_enumeration() {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> gap(0.05, 0.8);
  double worst = 0.0;
  int cases = 0;
  for (int k = 1; k <= 3; ++k) {
    for (int jlen = 2; jlen <= 5; ++jlen) {
      for (int rep = 0; rep < 5; ++rep) {
        const ModelParams m = random_model(k, 2, 2, rng);
        Trajectory t;
        t.subject_id = "s";
        t.obs.resize(jlen, 2);
        double time = 0.0;
        for (int j = 0; j < jlen; ++j) {
          t.times.push_back(time);
          time += gap(rng);
          t.actions.push_back(static_cast<int>(rng() % 2));
          t.obs(j, 0) = 1.5 * z(rng);
          t.obs(j, 1) = 1.5 * z(rng);
        }
        const FilterResult f = forward_filter(t, m);
        for (int len = 1; len <= jlen; ++len) {
          const auto [ll, post] = enumerate_paths(t, m, len);
          worst = std::max(worst, (f.beliefs[len - 1] - post).cwiseAbs().maxCoeff());
          if (len == jlen) worst = std::max(worst, std::abs(f.loglik - ll) / std::max(1.0, std::abs(ll)));
        }
        ++cases;
      }
    }
  }
  return {worst <= 1e-10, "filter vs path sum max error " + fmt(worst * 1e12, 3) + "e-12 over " +
                              std::to_string(cases) + " cases"};
}

OracleCheck chapman_kolmogorov() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> dt(0.01, 3.0);
  double worst_ck = 0.0, worst_exp = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 2 + rep % 4;
    MatrixXd q = random_rate(k, rng) * (1.0 + static_cast<double>(rep % 7));
    const double s = dt(rng), t = dt(rng);
    const MatrixXd ps = transition_matrix(q, s), pt = transition_matrix(q, t), pst = transition_matrix(q, s + t);
    worst_ck = std::max(worst_ck, (ps * pt - pst).cwiseAbs().maxCoeff());
    worst_exp = std::max(worst_exp, (pst - (q * (s + t)).exp()).cwiseAbs().maxCoeff());
  }
  return {worst_ck <= 1e-8 && worst_exp <= 1e-8,
          "Chapman-Kolmogorov max error " + fmt(worst_ck * 1e12, 3) + "e-12, vs Pade/expm " +
              fmt(worst_exp * 1e12, 3) + "e-12"};
}

struct Chain {
  std::vector<MatrixXd> p;
  MatrixXd r;
};

std::vector<MdpTuple> chain_tuples(const Chain& c, int n, int j, std::uint64_t seed, int drop_last) {
  std::mt19937_64 rng(seed);
  const int k = static_cast<int>(c.r.rows()), l = static_cast<int>(c.r.cols());
  std::uniform_int_distribution<int> start(0, k - 1), act(0, l - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  const auto state = [&](int s) {
    SummaryState st;
    st.belief = VectorXd::Ones(1);
    st.x = VectorXd::Zero(k - drop_last);
    if (s < k - drop_last) st.x[s] = 1.0;
    return st;
  };
  std::vector<MdpTuple> out;
  for (int i = 0; i < n; ++i) {
    int s = start(rng);
    for (int v = 1; v < j; ++v) {
      const int a = act(rng);
      double u = unif(rng);
      int next = k - 1;
      for (int t = 0; t < k; ++t) {
        u -= c.p[a](s, t);
        if (u < 0.0) {
          next = t;
          break;
        }
      }
      MdpTuple t;
      t.subject = i;
      t.j = v;
      t.s = state(s);
      t.a = a;
      t.u = c.r(s, a) + 0.5 * z(rng);
      t.s_next = state(next);
      t.behavior_prob = 1.0 / l;
      out.push_back(t);
      s = next;
    }
  }
  return out;
}

Chain three_state_chain() {
  Chain c;
  MatrixXd p0(3, 3), p1(3, 3);
  p0 << 0.7, 0.2, 0.1, 0.3, 0.4, 0.3, 0.1, 0.1, 0.8;
  p1 << 0.2, 0.5, 0.3, 0.6, 0.2, 0.2, 0.3, 0.3, 0.4;
  c.p = {p0, p1};
  c.r.resize(3, 2);
  c.r << 1.0, -0.5, 0.0, 2.0, -1.0, 0.5;
  return c;
}

// Deterministic target: action 1 in states 1 and 3, action 2 in state 2.
PolicyParams tabular_policy(const BasisSpec& basis) {
  PolicyParams pol = PolicyParams::zeros(2, basis, PolicyKind::deterministic);
  for (int s = 0; s < basis.obs_dim; ++s) pol.xi(0, s) = s == 1 ? -1.0 : 1.0;
  return pol;
}

OracleCheck discounted_tabular() {
  const Chain c = three_state_chain();
  const double gamma = 0.8;
  const int act[3] = {0, 1, 0};
  MatrixXd ppi(3, 3);
  VectorXd rpi(3);
  for (int s = 0; s < 3; ++s) {
    ppi.row(s) = c.p[act[s]].row(s);
    rpi[s] = c.r(s, act[s]);
  }
  const VectorXd exact = (MatrixXd::Identity(3, 3) - gamma * ppi).lu().solve(rpi);
  const BasisSpec onehot{BasisKind::linear, BasisInputs::x, false, 1, 3};
  const PolicyParams pol = tabular_policy(onehot);
  VConfig vc;
  vc.gamma = gamma;
  std::vector<std::vector<double>> draws(3);
  for (int rep = 0; rep < 100; ++rep) {
    const auto tuples = chain_tuples(c, 800, 15, 5000 + rep, 0);
    const DiscountedFit fit = solve_discounted(tuples, pol, onehot, vc);
    for (int s = 0; s < 3; ++s) draws[s].push_back(fit.alpha[s]);
  }
  bool pass = true;
  std::string detail = "discounted vs (I - gamma P)^-1 r:";
  for (int s = 0; s < 3; ++s) {
    const Summary m = summarize(draws[s]);
    const double zscore = (m.mean - exact[s]) / m.se;
    pass = pass && std::abs(zscore) <= 3.0;
    detail += " state " + std::to_string(s + 1) + " " + fmt(m.mean) + " vs " + fmt(exact[s]) + " (z " + fmt(zscore, 2) + ")";
  }
  return {pass, detail};
}

OracleCheck average_stationary() {
  const Chain c = three_state_chain();
  const int act[3] = {0, 1, 0};
  MatrixXd ppi(3, 3);
  VectorXd rpi(3);
  for (int s = 0; s < 3; ++s) {
    ppi.row(s) = c.p[act[s]].row(s);
    rpi[s] = c.r(s, act[s]);
  }
  Eigen::EigenSolver<MatrixXd> es(ppi.transpose());
  Eigen::Index top = 0;
  es.eigenvalues().real().maxCoeff(&top);
  VectorXd rho = es.eigenvectors().col(top).real();
  rho /= rho.sum();
  const double exact = rho.dot(rpi);
  // Indicators of states 1 and 2; the constant is carried by the value.
  const BasisSpec basis{BasisKind::linear, BasisInputs::x, false, 1, 2};
  const PolicyParams pol = tabular_policy(basis);
  std::vector<double> draws;
  for (int rep = 0; rep < 100; ++rep) {
    // State 3 has all-zero indicators, so tied scores select action 1 there.
    const auto tuples = chain_tuples(c, 800, 15, 7000 + rep, 1);
    draws.push_back(solve_average(tuples, pol, basis, VConfig{}).value);
  }
  const Summary m = summarize(draws);
  const double zscore = (m.mean - exact) / m.se;
  return {std::abs(zscore) <= 3.0,
          "average vs stationary rho'r: " + fmt(m.mean) + " vs " + fmt(exact) + " (z " + fmt(zscore, 2) + ")"};
}

OracleCheck geometric_fixed_point() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<MdpTuple> tuples;
  for (int i = 0; i < 50; ++i) {
    for (int v = 1; v <= 4; ++v) {
      MdpTuple t;
      t.subject = i;
      t.j = v;
      t.s.belief = VectorXd::Ones(1);
      t.s.x = VectorXd::Constant(1, z(rng));
      t.s_next.belief = VectorXd::Ones(1);
      t.s_next.x = VectorXd::Constant(1, z(rng));
      t.a = static_cast<int>(rng() % 3);
      t.behavior_prob = 1.0 / 3.0;
      t.u = 1.3;
      tuples.push_back(t);
    }
  }
  const BasisSpec constant{BasisKind::linear, BasisInputs::belief, true, 1, 0};
  const BasisSpec pb{BasisKind::linear, BasisInputs::x, true, 1, 1};
  PolicyParams pol = PolicyParams::zeros(3, pb, PolicyKind::stochastic, 0.05);
  pol.xi << 0.4, -0.9, 1.2, 0.3, 0.0, 0.0;
  double worst = 0.0;
  for (double gamma : {0.0, 0.5, 0.9, 0.95, 0.99}) {
    VConfig vc;
    vc.gamma = gamma;
    const DiscountedFit fit = solve_discounted(tuples, pol, constant, vc);
    worst = std::max(worst, std::abs(fit.alpha[0] - 1.3 / (1.0 - gamma)) / (1.3 / (1.0 - gamma)));
  }
  return {worst <= 1e-12, "alpha = c/(1 - gamma) max relative error " + fmt(worst * 1e15, 2) + "e-15"};
}

void criterion5() {
  const std::vector<std::function<OracleCheck()>> checks{filter_vs_enumeration, chapman_kolmogorov,
                                                         discounted_tabular, average_stationary,
                                                         geometric_fixed_point};
  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    const OracleCheck r = c();
    pass = pass && r.pass;
    detail += (detail.empty() ? "" : "; ") + std::string(r.pass ? "" : "[failed] ") + r.detail;
  }
  report(pass, 5, "oracle equivalences", detail);
}

// ---------------------------------------------------------------------------
// Criteria 1-3: value tables

RegimeClass cls(PolicyKind k, BasisKind b, BasisInputs in) { return {k, b, in}; }

ValueTable scenario2_table(const Options& o, int reps, double gamma) {
  ExperimentConfig c;
  c.scenario = 2;
  c.n = 100;
  c.replications = reps;
  c.gamma = gamma;
  c.threads = o.threads;
  c.classes = {cls(PolicyKind::deterministic, BasisKind::linear, BasisInputs::x),
               cls(PolicyKind::deterministic, BasisKind::linear, BasisInputs::both)};
  return run_value_table(c, progress_of(o));
}

const std::string kPomLin = "deterministic POM-lin";
const std::string kMdpLin = "deterministic MDP-lin";

void criteria12(const Options& o) {
  const ValueTable t = scenario2_table(o, o.s2_replications, 0.9);
  const auto& dis = t.at(Criterion::discounted);
  const Summary pom = summarize(dis.truth.at(kPomLin));
  const Summary opt = summarize(dis.truth.at("opt"));
  if (o.criteria.count(1)) {
    report(within(pom.mean, 3.45, 3.80) && within(opt.mean, 3.70, 3.90), 1, "scenario-2 value recovery",
           "deterministic POM-lin discounted " + cell(pom) + ", target [3.45, 3.80]; oracle " + cell(opt) +
               ", target [3.70, 3.90]");
  }
  if (o.criteria.count(2)) {
    bool pass = true;
    std::string detail;
    for (Criterion cr : {Criterion::discounted, Criterion::average}) {
      const auto& tab = t.at(cr);
      const Summary a = paired_difference(tab.truth.at(kPomLin), tab.truth.at(kMdpLin));
      const Summary b = paired_difference(tab.truth.at(kMdpLin), tab.truth.at("obs"));
      const bool ok = a.mean >= 5.0 * a.se && b.mean >= 5.0 * b.se;
      pass = pass && ok;
      detail += (detail.empty() ? "" : "; ") + to_string(cr) + ": POM-lin " + fmt(summarize(tab.truth.at(kPomLin)).mean) +
                " > MDP-lin " + fmt(summarize(tab.truth.at(kMdpLin)).mean) + " > obs " +
                fmt(summarize(tab.truth.at("obs")).mean) + " (gaps " + fmt(a.mean / a.se, 1) + " and " +
                fmt(b.mean / b.se, 1) + " SEs)";
    }
    report(pass, 2, "scenario-2 ordering", detail);
  }
  std::istringstream rows(format_value_table(t, '|'));
  for (std::string line; std::getline(rows, line);) info("scenario-2 table (gamma 0.9): " + line);
  info("scenario-2 run: " + std::to_string(t.failed_replications) + " failed replications, " +
       std::to_string(t.failed_searches) + " failed searches, " + fmt(t.seconds / 60.0, 1) + " min");
  if (o.bracket && o.criteria.count(1)) {
    const ValueTable b = scenario2_table(o, o.bracket_s2_replications, 0.95);
    const auto& bd = b.at(Criterion::discounted);
    info("gamma bracket, scenario 2 at gamma 0.95: deterministic POM-lin " + cell(summarize(bd.truth.at(kPomLin))) +
         ", oracle " + cell(summarize(bd.truth.at("opt"))));
  }
}

ValueTable scenario1_table(const Options& o, int reps, double gamma) {
  ExperimentConfig c;
  c.scenario = 1;
  c.n = 100;
  c.replications = reps;
  c.gamma = gamma;
  c.threads = o.threads;
  return run_value_table(c, progress_of(o));
}

void criterion3(const Options& o) {
  const ValueTable t = scenario1_table(o, o.s1_replications, 0.9);
  bool order = true;
  std::string detail;
  for (Criterion cr : {Criterion::discounted, Criterion::average}) {
    const auto& tab = t.at(cr);
    const double obs = summarize(tab.truth.at("obs")).mean;
    for (PolicyKind k : {PolicyKind::stochastic, PolicyKind::deterministic}) {
      const std::string kind = to_string(k);
      const double mdp = std::max(summarize(tab.truth.at(kind + " MDP-lin")).mean,
                                  summarize(tab.truth.at(kind + " MDP-quad")).mean);
      for (const char* b : {"lin", "quad"}) {
        const std::string label = kind + " POM-" + b;
        const double v = summarize(tab.truth.at(label)).mean;
        if (!(v > mdp && v > obs)) {
          order = false;
          detail += label + " " + to_string(cr) + " " + fmt(v) + " vs best MDP " + fmt(mdp) + ", obs " + fmt(obs) + "; ";
        }
      }
    }
  }
  const Summary pom = summarize(t.at(Criterion::discounted).truth.at(kPomLin));
  const bool level = within(pom.mean, 0.8, 1.5);
  if (order) detail += "every POM class beats both MDP classes and obs under both criteria; ";
  detail += "deterministic POM-lin discounted " + cell(pom) + ", target [0.8, 1.5]";
  report(order && level, 3, "scenario-1 ordering", detail);
  std::istringstream rows(format_value_table(t, '|'));
  for (std::string line; std::getline(rows, line);) info("scenario-1 table (gamma 0.9): " + line);
  info("scenario-1 run: " + std::to_string(t.failed_replications) + " failed replications, " +
       std::to_string(t.failed_searches) + " failed searches, " + fmt(t.seconds / 60.0, 1) + " min");
  info("scenario-1 observed regime: discounted " + cell(summarize(t.at(Criterion::discounted).truth.at("obs"))) +
       ", average " + cell(summarize(t.at(Criterion::average).truth.at("obs"))) +
       "; reference values -4.602 and -0.481");
  if (o.bracket) {
    const ValueTable b = scenario1_table(o, o.bracket_s1_replications, 0.95);
    info("gamma bracket, scenario 1 at gamma 0.95: deterministic POM-lin " +
         cell(summarize(b.at(Criterion::discounted).truth.at(kPomLin))) + ", oracle " +
         cell(summarize(b.at(Criterion::discounted).truth.at("opt"))));
  }
}

// ---------------------------------------------------------------------------
// Criterion 4: coverage

void criterion4(const Options& o) {
  CoverageConfig c;
  c.base.scenario = 1;
  c.base.n = 100;
  c.base.replications = o.coverage_replications;
  c.base.threads = o.threads;
  c.ci.threads = o.threads;
  const CoverageResult r = run_coverage(c, progress_of(o));
  bool pass = true;
  std::string detail;
  for (const auto& cellr : r.cells) {
    const double cov = cellr.coverage();
    pass = pass && cov >= 0.93;
    std::vector<double> widths;
    for (std::size_t i = 0; i < cellr.lower.size(); ++i) {
      const double w = 0.5 * (cellr.upper[i] - cellr.lower[i]);
      if (std::isfinite(w)) widths.push_back(w);
    }
    double median = std::numeric_limits<double>::quiet_NaN();
    if (!widths.empty()) {
      std::nth_element(widths.begin(), widths.begin() + widths.size() / 2, widths.end());
      median = widths[widths.size() / 2];
    }
    detail += (detail.empty() ? "" : "; ") + to_string(cellr.kind) + " " + to_string(cellr.criterion) +
              " coverage " + fmt(cov) + " (half width mean " + fmt(cellr.mean_half_width()) + ", median " +
              fmt(median) + ", truth " + fmt(cellr.truth) + ", " +
              std::to_string(cellr.failures) + " failures)";
  }
  report(pass, 4, "projection interval coverage >= 0.93", detail);
  info("coverage run: " + fmt(r.seconds / 60.0, 1) + " min, " + std::to_string(c.base.replications) +
       " replications, " + std::to_string(c.ci.points) + " ellipsoid points");
}

// ---------------------------------------------------------------------------
// Criterion 6: MLE recovery

void criterion6(const Options& o) {
  RecoveryConfig c;
  c.replications = o.recovery_replications;
  c.threads = o.threads;
  const RecoveryResult r = run_mle_recovery(c, progress_of(o));
  const int q = static_cast<int>(r.truth.size());
  const int reps = static_cast<int>(r.estimates.size());
  int inside = 0, total = 0, all_inside = 0;
  for (int i = 0; i < reps; ++i) {
    bool all = true;
    for (int k = 0; k < q; ++k) {
      const bool ok = std::abs(r.estimates[i][k] - r.truth[k]) <= 3.0 * r.ses[i][k];
      inside += ok ? 1 : 0;
      all = all && ok;
      ++total;
    }
    all_inside += all ? 1 : 0;
  }
  double worst_ratio = 1.0;
  std::string worst_name;
  int ratio_ok = 0;
  for (int k = 0; k < q; ++k) {
    std::vector<double> est, se;
    for (int i = 0; i < reps; ++i) {
      est.push_back(r.estimates[i][k]);
      se.push_back(r.ses[i][k]);
    }
    const double sd = summarize(est).sd;
    const double ratio = summarize(se).mean / sd;
    if (std::abs(ratio - 1.0) <= 0.3) ++ratio_ok;
    else info(r.names[k] + ": mean SE " + fmt(summarize(se).mean, 4) + ", SD " + fmt(sd, 4));
    if (std::abs(ratio - 1.0) >= std::abs(worst_ratio - 1.0)) {
      worst_ratio = ratio;
      worst_name = r.names[k];
    }
  }
  const double frac = total > 0 ? static_cast<double>(inside) / total : 0.0;
  const bool pass = reps > 1 && frac >= 0.99 && ratio_ok == q;
  report(pass, 6, "MLE recovery",
         fmt(100.0 * frac, 2) + "% of " + std::to_string(total) + " estimates within 3 SEs (target >= 99%; " +
             std::to_string(all_inside) + "/" + std::to_string(reps) + " fits with every parameter inside); " +
             std::to_string(ratio_ok) + "/" + std::to_string(q) + " parameters with SE/SD within 30% (worst " +
             worst_name + " " + fmt(worst_ratio, 2) + "); " + std::to_string(r.failures) + " failed fits");
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  std::vector<int> criteria;
  CLI::App app{"Acceptance report"};
  app.add_option("--criteria", criteria, "Criteria to evaluate (default: all)")->delimiter(',');
  app.add_option("--s2-replications", o.s2_replications);
  app.add_option("--s1-replications", o.s1_replications);
  app.add_option("--coverage-replications", o.coverage_replications);
  app.add_option("--recovery-replications", o.recovery_replications);
  app.add_option("--bracket-s2-replications", o.bracket_s2_replications);
  app.add_option("--bracket-s1-replications", o.bracket_s1_replications);
  app.add_flag("!--no-bracket", o.bracket, "Skip the gamma = 0.95 runs");
  app.add_flag("-v,--verbose", o.verbose);
  app.add_option("--threads", o.threads);
  CLI11_PARSE(app, argc, argv);
  if (!criteria.empty()) o.criteria = {criteria.begin(), criteria.end()};

  try {
    if (o.criteria.count(5)) criterion5();
    if (o.criteria.count(6)) criterion6(o);
    if (o.criteria.count(1) || o.criteria.count(2)) criteria12(o);
    if (o.criteria.count(3)) criterion3(o);
    if (o.criteria.count(4)) criterion4(o);
    if (o.criteria.count(7)) {
      std::cout << "SKIP  criterion 7 (case-study values): excluded, the study data are not available" << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance harness error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
