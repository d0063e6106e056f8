#include <gtest/gtest.h>

#include <cmath>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/simulation.hpp"

using namespace pomdp_dtr;

TEST(Scenario, BehaviorProbabilitiesAtOrigin) {
  const ScenarioSpec spec = ScenarioSpec::preset(1);
  const VectorXd p = spec.behavior_probs(VectorXd::Zero(3));
  const double e = std::exp(-0.2);
  EXPECT_NEAR(p[0], e / (1.0 + 2.0 * e), 1e-14);
  EXPECT_NEAR(p[1], e / (1.0 + 2.0 * e), 1e-14);
  EXPECT_NEAR(p[0], 0.3104, 5e-5);
  EXPECT_NEAR(p[2], 0.3792, 5e-5);
}

TEST(Scenario, TransitionRateLink) {
  const ScenarioSpec spec = ScenarioSpec::preset(1);
  const auto q = spec.rates_per_day(-6.5);
  EXPECT_NEAR(q[0](0, 4), 1.0 / (1.0 + std::exp(1.5)), 1e-14);
  EXPECT_NEAR(q[0](0, 4), 0.1824, 5e-5);
  EXPECT_NEAR(q[2](0, 4), 1.0 / (1.0 + std::exp(6.5)), 1e-14);
  for (const auto& m : q) EXPECT_NO_THROW(validate_rate_matrix(m));
}

TEST(Scenario, EmissionTable) {
  const ScenarioSpec spec = ScenarioSpec::preset(2);
  EXPECT_EQ(spec.emission.states[0].mu, VectorXd::Constant(3, 2.0));
  EXPECT_TRUE(spec.emission.states[4].psi.isZero(0.0));
  const ModelParams ref = spec.reference_model();
  EXPECT_NO_THROW(ref.validate());
  EXPECT_EQ(ref.num_states, 5);
}

TEST(Simulate, SmallDatasetShape) {
  const ScenarioSpec spec = ScenarioSpec::preset(1);
  const SimulatedDataset sim = simulate_dataset(spec, 5, 7, behavior_rule(spec));
  ASSERT_EQ(sim.data.size(), 5u);
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const Trajectory& t = sim.data[i];
    EXPECT_GE(t.length(), 2);
    EXPECT_NO_THROW(t.validate(3));
    EXPECT_LE(t.times.back(), 1.0);
    EXPECT_EQ(sim.subjects[i].utilities.size(), static_cast<std::size_t>(t.length() - 1));
    EXPECT_EQ(sim.subjects[i].states.size(), static_cast<std::size_t>(t.length()));
  }
}

TEST(Simulate, Deterministic) {
  const ScenarioSpec spec = ScenarioSpec::preset(2);
  const SimulatedDataset a = simulate_dataset(spec, 8, 99, behavior_rule(spec));
  const SimulatedDataset b = simulate_dataset(spec, 8, 99, behavior_rule(spec));
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    EXPECT_EQ(a.data[i].times, b.data[i].times);
    EXPECT_EQ(a.data[i].obs, b.data[i].obs);
  }
  const auto va = true_value_mc(spec, oracle_rule(spec), Criterion::discounted, 50, 3, 0.9);
  const auto vb = true_value_mc(spec, oracle_rule(spec), Criterion::discounted, 50, 3, 0.9);
  EXPECT_EQ(va.value, vb.value);
  EXPECT_EQ(va.se, vb.se);
}

TEST(Simulate, ZeroUtilityHasZeroValue) {
  ScenarioSpec spec = ScenarioSpec::preset(1);
  spec.utility.kind = UtilityKind::custom_linear;
  spec.utility.coefficients = VectorXd::Zero(1 + 5 + 3 + 3 + 3);
  const auto [dis, ave] = true_values_mc(spec, behavior_rule(spec), 40, 5, 0.9);
  EXPECT_EQ(dis.value, 0.0);
  EXPECT_EQ(ave.value, 0.0);
}

TEST(Simulate, OracleBeatsBehaviorInScenarioTwo) {
  const ScenarioSpec spec = ScenarioSpec::preset(2);
  const auto obs = true_value_mc(spec, behavior_rule(spec), Criterion::average, 300, 8, 0.9);
  const auto opt = true_value_mc(spec, oracle_rule(spec), Criterion::average, 300, 8, 0.9);
  EXPECT_GT(opt.value - obs.value, 5.0 * std::hypot(opt.se, obs.se));
}

TEST(Simulate, FromModelRedrawsShortSubjects) {
  ModelParams m = ScenarioSpec::preset(1).reference_model();
  ModelSimConfig cfg;
  cfg.mean_gap = 0.6;
  const ModelDataset d = simulate_from_model(m, 30, 4, cfg);
  ASSERT_EQ(d.data.size(), 30u);
  for (const auto& t : d.data) EXPECT_GE(t.length(), 2);
  EXPECT_GT(d.resamples, 0);
}

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 2, 0), derive_seed(1, 2, 1));
  EXPECT_EQ(derive_seed(5, 3, 2), derive_seed(5, 3, 2));
  EXPECT_EQ(parse_initial_law("stable"), InitialLaw::stable);
  EXPECT_THROW(parse_rate_link("probit"), ValidationError);
}
