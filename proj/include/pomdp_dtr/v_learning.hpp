#pragma once

// Importance-weighted V-learning under discounted and average criteria,
// plug-in values against a reference distribution and policy search.

#include <cstdint>
#include <string>
#include <vector>

#include "pomdp_dtr/belief_transform.hpp"
#include "pomdp_dtr/regime.hpp"

namespace pomdp_dtr {

enum class Criterion { discounted, average };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);

struct ReferenceDistribution {
  std::vector<SummaryState> states;
  VectorXd weights;

  /// The sample of S^1: the first tuple of every subject, equal weights.
  static ReferenceDistribution empirical_initial(const std::vector<MdpTuple>& tuples);
  static ReferenceDistribution point_mass(const SummaryState& s);
  void validate() const;
};

struct VConfig {
  double gamma = 0.9;
  double weight_cap = 20.0;
  double condition_limit = 1e12;
};

/// Features and weights precomputed once for repeated policy evaluation.
struct EvalDesign {
  int num_actions = 0;
  int num_subjects = 0;
  BasisSpec policy_basis;
  BasisSpec value_basis;
  MatrixXd pol;       // N x d_pi at S^j
  MatrixXd val;       // N x d_v at S^j
  MatrixXd val_next;  // N x d_v at S^{j+1}
  VectorXd u;
  VectorXd prop;
  std::vector<int> action;
  std::vector<int> subject;
  MatrixXd ref_val;   // reference states in the value basis
  VectorXd ref_weights;

  int size() const { return static_cast<int>(u.size()); }
  /// Weighted mean of the reference value features.
  VectorXd ref_mean() const { return ref_val.transpose() * ref_weights; }
};

EvalDesign make_design(const std::vector<MdpTuple>& tuples, const BasisSpec& policy_basis,
                       const BasisSpec& value_basis, const ReferenceDistribution& reference,
                       int num_actions);

/// w_j = min(pi(A^j | S^j) / P(A^j | S^j), cap).
VectorXd importance_weights(const EvalDesign& design, const PolicyParams& policy, double cap);

struct DiscountedFit {
  VectorXd alpha;
  double gamma = 0.0;
  double weight_cap = 0.0;
  double condition = 0.0;
  double residual = 0.0;  // relative residual of the solved system
  MatrixXd c1;
  VectorXd c0;
};

struct AverageFit {
  double value = 0.0;
  VectorXd beta;
  double weight_cap = 0.0;
  double condition = 0.0;
  double residual = 0.0;
  MatrixXd d1;
  VectorXd d0;
};

/// alpha = C1^{-1} c0 with C1 = P_n sum_j w_j phi_j (phi_j - gamma phi'_j)^T,
/// c0 = P_n sum_j w_j U_j phi_j.
DiscountedFit solve_discounted(const EvalDesign& design, const PolicyParams& policy,
                               const VConfig& config);
DiscountedFit solve_discounted(const std::vector<MdpTuple>& tuples, const PolicyParams& policy,
                               const BasisSpec& value_basis, const VConfig& config);

double value_discounted(const DiscountedFit& fit, const ReferenceDistribution& reference,
                        const BasisSpec& value_basis);

/// (V, beta) solving P_n sum_j w_j {U_j - V + (phi'_j - phi_j)^T beta}(1, phi_j) = 0.
/// The value basis must not contain an intercept.
AverageFit solve_average(const EvalDesign& design, const PolicyParams& policy,
                         const VConfig& config);
AverageFit solve_average(const std::vector<MdpTuple>& tuples, const PolicyParams& policy,
                         const BasisSpec& value_basis, const VConfig& config);

/// Plug-in value of the policy: reference mean of phi^T alpha, or V_ave.
double policy_value(const EvalDesign& design, const PolicyParams& policy, Criterion criterion,
                    const VConfig& config);

struct SearchConfig {
  int restarts = 10;
  double box = 2.0;
  int max_evaluations = 2000;  // per restart
  double initial_step = 0.5;
  bool polish = true;
  double penalty = 1e-2;       // L2 weight for stochastic classes
  double min_probability = 0.05;
  int max_tuning_rounds = 3;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct SearchResult {
  PolicyParams policy;
  double value = 0.0;       // plug-in value at the returned policy
  double objective = 0.0;   // value minus penalty
  double penalty = 0.0;
  double min_probability = 1.0;      // smallest regime probability over observed states
  double raw_min_probability = 1.0;  // same before the floor is applied
  int evaluations = 0;
  int restarts = 0;
  int failed_restarts = 0;
  int tuning_rounds = 0;
};

/// Maximizes xi -> V(pi_xi) (minus penalty * |xi|^2 for stochastic classes)
/// with Nelder-Mead restarts and a coordinate polish. `shape` fixes the
/// basis, kind and floor; its coefficients seed the first restart.
SearchResult optimize_policy(const EvalDesign& design, const PolicyParams& shape,
                             Criterion criterion, const VConfig& config,
                             const SearchConfig& search = {});

/// Smallest raw softmax probability over the design's policy features.
double min_softmax_probability(const EvalDesign& design, const PolicyParams& policy);

}  // namespace pomdp_dtr
