#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/inference.hpp"

using namespace pomdp_dtr;

namespace {

const BasisSpec kConst{BasisKind::linear, BasisInputs::belief, true, 1, 0};
const BasisSpec kNone{BasisKind::linear, BasisInputs::belief, false, 1, 0};
const BasisSpec kX{BasisKind::linear, BasisInputs::x, true, 1, 1};

// One tuple per subject with a scalar feature and known propensities.
std::vector<MdpTuple> one_step(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MdpTuple> out;
  for (int i = 0; i < n; ++i) {
    MdpTuple t;
    t.subject = i;
    t.j = 1;
    t.s.belief = VectorXd::Ones(1);
    t.s.x = VectorXd::Constant(1, z(rng));
    t.s_next.belief = VectorXd::Ones(1);
    t.s_next.x = VectorXd::Constant(1, z(rng));
    const double p0 = 1.0 / (1.0 + std::exp(-t.s.x[0]));
    t.a = u(rng) < p0 ? 0 : 1;
    t.behavior_prob = t.a == 0 ? p0 : 1.0 - p0;
    t.u = 0.5 + t.s.x[0] + (t.a == 0 ? 1.0 : 0.0) + z(rng);
    out.push_back(t);
  }
  return out;
}

PolicyParams tilted_policy() {
  PolicyParams p = PolicyParams::zeros(2, kX, PolicyKind::stochastic);
  p.xi(0, 0) = 0.3;
  p.xi(0, 1) = 0.8;
  return p;
}

double weighted_mean_variance(const std::vector<MdpTuple>& tuples, const PolicyParams& policy) {
  double sw = 0.0, swu = 0.0;
  std::vector<double> w;
  for (const auto& t : tuples) {
    const VectorXd pr = policy_probs(policy, t.s);
    w.push_back(pr[t.a] / t.behavior_prob);
    sw += w.back();
    swu += w.back() * t.u;
  }
  const double n = static_cast<double>(tuples.size());
  const double mean = swu / sw;
  double meat = 0.0;
  for (std::size_t i = 0; i < tuples.size(); ++i) meat += std::pow(w[i] * (tuples[i].u - mean), 2);
  return (meat / n) / std::pow(sw / n, 2);
}

EvalDesign design_of(const std::vector<MdpTuple>& tuples, const BasisSpec& vb) {
  return make_design(tuples, kX, vb, ReferenceDistribution::empirical_initial(tuples), 2);
}

ModelParams toy_model() {
  ModelParams m;
  m.num_states = 2;
  m.num_actions = 2;
  m.obs_dim = 1;
  MatrixXd q0(2, 2), q1(2, 2);
  q0 << -0.8, 0.8, 0.3, -0.3;
  q1 << -0.2, 0.2, 1.1, -1.1;
  m.rates = {q0, q1};
  m.emission.ar_intercept = true;
  StateEmission a, b;
  a.mu = VectorXd::Constant(1, -0.7);
  a.psi = MatrixXd::Constant(1, 1, 0.2);
  a.sigma = MatrixXd::Constant(1, 1, 0.6);
  b.mu = VectorXd::Constant(1, 0.9);
  b.psi = MatrixXd::Constant(1, 1, -0.1);
  b.sigma = MatrixXd::Constant(1, 1, 0.4);
  m.emission.states = {a, b};
  m.init_dist = VectorXd::Constant(2, 0.5);
  return m;
}

Dataset toy_data(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    Trajectory t;
    t.subject_id = std::to_string(i);
    t.obs.resize(4, 1);
    double time = 0.0;
    for (int j = 0; j < 4; ++j) {
      t.times.push_back(time);
      time += 0.2 + 0.3 * u(rng);
      t.actions.push_back(u(rng) < 0.5 ? 0 : 1);
      t.obs(j, 0) = z(rng);
    }
    d.push_back(t);
  }
  return d;
}

}  // namespace

TEST(Jacobian, SquareFunction) {
  const auto f = [](const VectorXd& x) { return VectorXd::Constant(1, x[0] * x[0]); };
  EXPECT_NEAR(central_jacobian(f, VectorXd::Ones(1), 1e-5)(0, 0), 2.0, 1e-6);
}

TEST(WOperator, ZeroWhenBeliefsUnused) {
  const ModelParams m = toy_model();
  const Dataset data = toy_data(10, 3);
  const UtilitySpec u = UtilitySpec::neg_abs_default();
  UtilitySpec ux = u;
  ux.indices = {0};
  const auto known = [](const SummaryState&) { return VectorXd::Constant(2, 0.5); };
  const auto tuples = build_mdp_dataset(data, m, ux, known);
  const auto ref = ReferenceDistribution::empirical_initial(tuples);
  const EvalDesign base = make_design(tuples, kX, kX, ref, 2);
  const PerturbationCache cache = build_perturbations(data, m, tuples, ux, base, ref);
  const MatrixXd w = w_operator(cache, tilted_policy(), Criterion::discounted, VConfig{});
  EXPECT_EQ(w.cols(), ParameterCodec(m).size());
  EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
}

TEST(WOperator, MatchesRichardsonExtrapolation) {
  const ModelParams m = toy_model();
  const Dataset data = toy_data(12, 5);
  UtilitySpec u = UtilitySpec::belief_match_default();
  u.group = {0, 1};
  const auto known = [](const SummaryState&) { return VectorXd::Constant(2, 0.5); };
  const auto tuples = build_mdp_dataset(data, m, u, known);
  const BasisSpec both{BasisKind::linear, BasisInputs::both, true, 2, 1};
  const auto ref = ReferenceDistribution::empirical_initial(tuples);
  const EvalDesign base = make_design(tuples, both, both, ref, 2);
  PolicyParams pol = PolicyParams::zeros(2, both, PolicyKind::stochastic);
  pol.xi.row(0) << 0.2, -1.3, 0.6;
  const PerturbationCache cache = build_perturbations(data, m, tuples, u, base, ref);
  const MatrixXd w = w_operator(cache, pol, Criterion::discounted, VConfig{});

  // Oracle: P_n sum_j w_j U_j phi_j recomputed from scratch at perturbed
  // parameters, differentiated with Richardson-extrapolated central differences.
  const ParameterCodec codec(m);
  const VectorXd theta = codec.encode(m);
  const auto g = [&](const VectorXd& th) {
    const ModelParams p = codec.decode(th);
    VectorXd sum = VectorXd::Zero(both.dim());
    std::size_t idx = 0;
    for (const auto& traj : data) {
      const FilterResult f = forward_filter(traj, p);
      for (int j = 0; j + 1 < traj.length(); ++j, ++idx) {
        const SummaryState s{f.beliefs[j], traj.x(j)};
        const int a = traj.actions[j];
        const double wj = policy_probs(pol, s)[a] / tuples[idx].behavior_prob;
        const double uj = f.beliefs[j][0] * (a == 0 ? 1.0 : -1.0) + f.beliefs[j][1] * (a == 1 ? 1.0 : -1.0);
        sum += wj * uj * basis_features(s, both);
      }
    }
    return VectorXd(sum / static_cast<double>(data.size()));
  };
  for (int k = 0; k < codec.size(); ++k) {
    const double h = 1e-3 * std::max(1.0, std::abs(theta[k]));
    const auto central = [&](double step) {
      VectorXd tp = theta, tm = theta;
      tp[k] += step;
      tm[k] -= step;
      return VectorXd((g(tp) - g(tm)) / (2.0 * step));
    };
    const VectorXd rich = (4.0 * central(h) - central(2.0 * h)) / 3.0;
    EXPECT_LT((w.col(k) - rich).cwiseAbs().maxCoeff(), 1e-4) << "coordinate " << k;
  }
}

TEST(Sandwich, WeightedMeanDiscounted) {
  const auto tuples = one_step(400, 7);
  const PolicyParams pol = tilted_policy();
  VConfig vc;
  vc.gamma = 0.0;
  vc.weight_cap = 1e6;
  const SandwichComponents s = variance_discounted(design_of(tuples, kConst), pol, vc, nullptr, {});
  EXPECT_NEAR(s.variance, weighted_mean_variance(tuples, pol), 1e-10 * s.variance);
}

TEST(Sandwich, WeightedMeanAverage) {
  const auto tuples = one_step(400, 8);
  const PolicyParams pol = tilted_policy();
  VConfig vc;
  vc.weight_cap = 1e6;
  const SandwichComponents s = variance_average(design_of(tuples, kNone), pol, vc, nullptr, {});
  EXPECT_NEAR(s.variance, weighted_mean_variance(tuples, pol), 1e-10 * s.variance);
}

TEST(Sandwich, HomogeneityAndDuplication) {
  const auto tuples = one_step(150, 9);
  const PolicyParams pol = tilted_policy();
  const VConfig vc;
  for (Criterion c : {Criterion::discounted, Criterion::average}) {
    const BasisSpec vb = c == Criterion::discounted ? kX : kX.without_intercept();
    const double base = value_variance(design_of(tuples, vb), pol, c, vc, nullptr, {}).variance;
    auto scaled = tuples;
    for (auto& t : scaled) t.u *= -3.0;
    EXPECT_NEAR(value_variance(design_of(scaled, vb), pol, c, vc, nullptr, {}).variance, 9.0 * base, 1e-9 * base);
    auto twice = tuples;
    for (auto t : tuples) {
      t.subject += 150;
      twice.push_back(t);
    }
    const SandwichComponents d = value_variance(design_of(twice, vb), pol, c, vc, nullptr, {});
    EXPECT_EQ(d.num_subjects, 300);
    EXPECT_NEAR(d.variance, base, 1e-9 * base);
  }
}

TEST(Sandwich, ConstantUtilityHasNoResidualVariance) {
  auto tuples = one_step(100, 10);
  for (auto& t : tuples) t.u = 1.25;
  const auto s = variance_average(design_of(tuples, kX.without_intercept()), tilted_policy(), VConfig{}, nullptr, {});
  EXPECT_NEAR(s.estimate, 1.25, 1e-12);
  EXPECT_NEAR(s.variance, 0.0, 1e-20);
}

TEST(Sandwich, MiddleMatrixPositiveSemidefinite) {
  const ModelParams m = toy_model();
  const Dataset data = toy_data(15, 12);
  UtilitySpec u = UtilitySpec::belief_match_default();
  u.group = {0, 1};
  const auto known = [](const SummaryState&) { return VectorXd::Constant(2, 0.5); };
  const auto tuples = build_mdp_dataset(data, m, u, known);
  const BasisSpec both{BasisKind::linear, BasisInputs::both, true, 2, 1};
  const auto ref = ReferenceDistribution::empirical_initial(tuples);
  const EvalDesign base = make_design(tuples, both, both, ref, 2);
  const PerturbationCache cache = build_perturbations(data, m, tuples, u, base, ref);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  const int q = cache.size();
  for (int rep = 0; rep < 5; ++rep) {
    PolicyParams pol = PolicyParams::zeros(2, both, PolicyKind::stochastic);
    for (int c = 0; c < 3; ++c) pol.xi(0, c) = z(rng);
    MatrixXd a(q, q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) a(i, j) = z(rng);
    const MatrixXd fisher = a * a.transpose() + MatrixXd::Identity(q, q);
    const SandwichComponents s = variance_discounted(base, pol, VConfig{}, &cache, fisher);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s.middle);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
    EXPECT_GE(s.variance, 0.0);
  }
}

TEST(PolicyCovariance, QuadraticSurfaceCurvature) {
  const auto objective = [](const VectorXd& x) { return -(x[0] - 1.0) * (x[0] - 1.0); };
  const auto pointwise = [](const VectorXd& x) { return VectorXd::Constant(3, -(x[0] - 1.0) * (x[0] - 1.0)); };
  const PolicyCovariance pc = policy_param_covariance(objective, pointwise, VectorXd::Ones(1));
  EXPECT_NEAR(pc.sigma1(0, 0), 2.0, 1e-4);
  EXPECT_FALSE(pc.flat);
}

TEST(PolicyCovariance, SymmetricSurface) {
  const auto objective = [](const VectorXd& x) {
    return -(x[0] * x[0] + x[1] * x[1]) - 0.4 * x[0] * x[1] + 0.1 * std::sin(x[0] + x[1]);
  };
  const auto pointwise = [](const VectorXd& x) {
    VectorXd v(4);
    for (int r = 0; r < 4; ++r) v[r] = std::cos(0.3 * r + x[0]) + std::cos(0.3 * r + x[1]);
    return v;
  };
  VectorXd xi(2);
  xi << 0.2, 0.2;
  const PolicyCovariance pc = policy_param_covariance(objective, pointwise, xi);
  EXPECT_LT((pc.cov - pc.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((pc.sigma1 - pc.sigma1.transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ProjectionCi, DegenerateEllipsoidIsWald) {
  const auto eval = [](const VectorXd& x) { return std::make_pair(1.0 + x.sum(), 4.0); };
  const VectorXd xi = VectorXd::Constant(3, 0.1);
  const ProjectionCi ci = projection_ci(xi, MatrixXd::Zero(3, 3), eval, 100, 0.025);
  EXPECT_NEAR(ci.lower, ci.wald_lower, 1e-12);
  EXPECT_NEAR(ci.upper, ci.wald_upper, 1e-12);
  const double z = 2.241402727604947;  // z_{0.9875}
  EXPECT_NEAR(ci.wald_lower, 1.3 - z * 2.0 / 10.0, 1e-9);
  EXPECT_NEAR(ci.z, z, 1e-9);
  EXPECT_NEAR(ci.chi2, 9.348403604496145, 1e-8);  // chi^2_{3, 0.975}
}

TEST(ProjectionCi, QuantilesAndMonotoneInEta) {
  EXPECT_NEAR(chi2_quantile(1.0, 0.95), 3.841458820694124, 1e-9);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-9);
  const auto eval = [](const VectorXd& x) { return std::make_pair(x[0] - 0.5 * x[1] * x[1], 1.0 + x[0] * x[0]); };
  MatrixXd sigma(2, 2);
  sigma << 1.0, 0.3, 0.3, 0.5;
  const VectorXd xi = VectorXd::Zero(2);
  CiConfig cfg;
  cfg.points = 256;
  const ProjectionCi wide = projection_ci(xi, sigma, eval, 50, 0.01, cfg);
  const ProjectionCi narrow = projection_ci(xi, sigma, eval, 50, 0.05, cfg);
  EXPECT_LE(wide.lower, narrow.lower);
  EXPECT_GE(wide.upper, narrow.upper);
  EXPECT_LE(wide.lower, wide.wald_lower);
  EXPECT_GE(wide.upper, wide.wald_upper);
  EXPECT_DOUBLE_EQ(wide.level, 0.98);
}

TEST(Halton, UnitCube) {
  const MatrixXd h = halton(64, 3);
  EXPECT_TRUE((h.array() >= 0.0).all() && (h.array() < 1.0).all());
  EXPECT_DOUBLE_EQ(h(0, 0), 0.5);
  EXPECT_NEAR(h(0, 1), 1.0 / 3.0, 1e-15);
}
