#pragma once

// Policy classes over basis features of the summary state (belief, x).

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pomdp_dtr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// S^j = (B^j, X^j).
struct SummaryState {
  VectorXd belief;
  VectorXd x;
};

enum class BasisKind { linear, quadratic };
enum class BasisInputs { both, belief, x };

struct BasisSpec {
  BasisKind kind = BasisKind::linear;
  BasisInputs inputs = BasisInputs::both;
  bool intercept = true;
  int num_states = 0;  // K
  int obs_dim = 0;     // p

  /// Number of non-intercept linear terms.
  int linear_terms() const;
  int dim() const;
  std::vector<std::string> names() const;
  BasisSpec without_intercept() const {
    BasisSpec b = *this;
    b.intercept = false;
    return b;
  }
};

/// linear: [1, b_1..b_{K-1}, x_1..x_p]; quadratic appends z_i z_k for i <= k
/// over the non-intercept terms z.
VectorXd basis_features(const SummaryState& s, const BasisSpec& spec);

/// Row i holds basis_features(states[i]).
MatrixXd basis_matrix(const std::vector<SummaryState>& states, const BasisSpec& spec);

enum class PolicyKind { stochastic, deterministic };

struct PolicyParams {
  int num_actions = 0;
  BasisSpec basis;
  MatrixXd xi;  // L x d, last row pinned at zero
  PolicyKind kind = PolicyKind::stochastic;
  double floor = 0.0;

  static PolicyParams zeros(int num_actions, const BasisSpec& basis, PolicyKind kind,
                            double floor = 0.0);
  int free_size() const { return (num_actions - 1) * basis.dim(); }
  /// First L-1 rows of xi, row-major.
  VectorXd free() const;
  void set_free(const VectorXd& v);
  void validate() const;
};

/// Entries below `floor` are raised to it and the remaining mass is shared
/// proportionally among the others, repeated until every entry is >= floor.
VectorXd floor_renormalize(const VectorXd& probs, double floor);

/// Action distribution for a precomputed feature vector.
VectorXd policy_probs_features(const PolicyParams& policy, const VectorXd& phi);
VectorXd policy_probs(const PolicyParams& policy, const SummaryState& s);

/// Row i is the action distribution at feature row i.
MatrixXd policy_probs_matrix(const PolicyParams& policy, const MatrixXd& features);

std::string to_string(BasisKind k);
std::string to_string(BasisInputs k);
std::string to_string(PolicyKind k);
BasisKind parse_basis_kind(const std::string& s);
BasisInputs parse_basis_inputs(const std::string& s);
PolicyKind parse_policy_kind(const std::string& s);

}  // namespace pomdp_dtr
