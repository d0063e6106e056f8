#include <gtest/gtest.h>

#include <cmath>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/regime.hpp"

using namespace pomdp_dtr;

namespace {

SummaryState state(std::initializer_list<double> b, std::initializer_list<double> x) {
  SummaryState s;
  s.belief = VectorXd(static_cast<Eigen::Index>(b.size()));
  s.x = VectorXd(static_cast<Eigen::Index>(x.size()));
  int i = 0;
  for (double v : b) s.belief[i++] = v;
  i = 0;
  for (double v : x) s.x[i++] = v;
  return s;
}

}  // namespace

TEST(Basis, LinearFeatures) {
  const BasisSpec spec{BasisKind::linear, BasisInputs::both, true, 2, 1};
  const VectorXd f = basis_features(state({0.3, 0.7}, {2.0}), spec);
  ASSERT_EQ(f.size(), 3);
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], 0.3);
  EXPECT_DOUBLE_EQ(f[2], 2.0);
  EXPECT_EQ((std::vector<std::string>{"1", "b1", "x1"}), spec.names());
}

TEST(Basis, QuadraticOfOneTerm) {
  const BasisSpec spec{BasisKind::quadratic, BasisInputs::x, true, 4, 1};
  const VectorXd f = basis_features(state({0.1, 0.2, 0.3, 0.4}, {-1.5}), spec);
  ASSERT_EQ(f.size(), 3);
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], -1.5);
  EXPECT_DOUBLE_EQ(f[2], 2.25);
}

TEST(Basis, Dimensions) {
  EXPECT_EQ((BasisSpec{BasisKind::linear, BasisInputs::both, true, 5, 3}).dim(), 8);
  EXPECT_EQ((BasisSpec{BasisKind::linear, BasisInputs::x, true, 5, 3}).dim(), 4);
  EXPECT_EQ((BasisSpec{BasisKind::quadratic, BasisInputs::both, true, 5, 3}).dim(), 8 + 28);
  EXPECT_EQ((BasisSpec{BasisKind::linear, BasisInputs::belief, false, 5, 3}).dim(), 4);
  const BasisSpec spec{BasisKind::linear, BasisInputs::both, true, 3, 2};
  EXPECT_THROW(basis_features(state({0.5, 0.5}, {1.0, 2.0}), spec), ValidationError);
}

TEST(Policy, ZeroCoefficientsAreUniform) {
  const BasisSpec spec{BasisKind::linear, BasisInputs::both, true, 3, 2};
  const PolicyParams p = PolicyParams::zeros(3, spec, PolicyKind::stochastic);
  const VectorXd probs = policy_probs(p, state({0.2, 0.5, 0.3}, {1.0, -4.0}));
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(probs[a], 1.0 / 3.0, 1e-15);
}

TEST(Policy, DeterministicArgmax) {
  const BasisSpec spec{BasisKind::linear, BasisInputs::x, true, 1, 1};
  PolicyParams p = PolicyParams::zeros(2, spec, PolicyKind::deterministic);
  // Scores (3, 1) up to the pinned last row: row 0 minus row 1 equals 2.
  p.xi(0, 0) = 2.0;
  const VectorXd probs = policy_probs(p, state({1.0}, {0.0}));
  EXPECT_DOUBLE_EQ(probs[0], 1.0);
  EXPECT_DOUBLE_EQ(probs[1], 0.0);
}

TEST(Policy, FloorThenRenormalize) {
  VectorXd raw(3);
  raw << 0.97, 0.02, 0.01;
  const VectorXd out = floor_renormalize(raw, 0.05);
  EXPECT_NEAR(out[0], 0.90, 1e-12);
  EXPECT_NEAR(out[1], 0.05, 1e-12);
  EXPECT_NEAR(out[2], 0.05, 1e-12);

  // Softmax producing the same raw probabilities goes through the floor.
  const BasisSpec spec{BasisKind::linear, BasisInputs::x, true, 1, 1};
  PolicyParams p = PolicyParams::zeros(3, spec, PolicyKind::stochastic, 0.05);
  p.xi(0, 0) = std::log(0.97 / 0.01);
  p.xi(1, 0) = std::log(0.02 / 0.01);
  const VectorXd probs = policy_probs(p, state({1.0}, {3.0}));
  EXPECT_NEAR(probs[0], 0.90, 1e-12);
  EXPECT_NEAR(probs[2], 0.05, 1e-12);
}

TEST(Policy, FloorSharesMassProportionally) {
  VectorXd raw(4);
  raw << 0.6, 0.3, 0.09, 0.01;
  const VectorXd out = floor_renormalize(raw, 0.1);
  EXPECT_NEAR(out.sum(), 1.0, 1e-14);
  EXPECT_NEAR(out[2], 0.1, 1e-14);
  EXPECT_NEAR(out[3], 0.1, 1e-14);
  EXPECT_NEAR(out[0] / out[1], 2.0, 1e-12);
}

TEST(Policy, FreeVectorRoundTrip) {
  const BasisSpec spec{BasisKind::linear, BasisInputs::both, true, 3, 2};
  PolicyParams p = PolicyParams::zeros(3, spec, PolicyKind::stochastic);
  VectorXd v(p.free_size());
  for (int i = 0; i < v.size(); ++i) v[i] = 0.1 * i;
  p.set_free(v);
  EXPECT_EQ(p.free(), v);
  EXPECT_TRUE(p.xi.row(2).isZero(0.0));
  EXPECT_DOUBLE_EQ(p.xi(1, 0), 0.1 * spec.dim());
}

TEST(Policy, ParseNames) {
  EXPECT_EQ(parse_basis_kind("quadratic"), BasisKind::quadratic);
  EXPECT_EQ(parse_basis_inputs("belief"), BasisInputs::belief);
  EXPECT_EQ(parse_policy_kind("deterministic"), PolicyKind::deterministic);
  EXPECT_THROW(parse_policy_kind("greedy"), ValidationError);
}
