#pragma once

// Histories to belief-state MDP tuples, utilities and propensity models.

#include <functional>
#include <string>
#include <vector>

#include "pomdp_dtr/ct_hmm.hpp"
#include "pomdp_dtr/regime.hpp"

namespace pomdp_dtr {

struct MdpTuple {
  std::string subject_id;
  int subject = 0;  // position of the subject in the source dataset
  int j = 0;        // 1-based visit index
  SummaryState s;
  int a = 0;
  double u = 0.0;
  SummaryState s_next;
  double behavior_prob = 1.0;
};

enum class UtilityKind { neg_abs, belief_match, custom_linear };

struct UtilitySpec {
  UtilityKind kind = UtilityKind::neg_abs;
  /// neg_abs: constant - sum_i |x_next[i]| over `indices`.
  double constant = 2.0;
  std::vector<int> indices{0, 2};
  /// belief_match: group[m] is the action that is correct in state m;
  /// U = sum_m b_m (2 I(a = group[m]) - 1).
  std::vector<int> group{0, 1, 1, 0, 2};
  /// custom_linear: coefficients on [1, belief, x, x_next, onehot(a)].
  VectorXd coefficients;

  static UtilitySpec neg_abs_default() { return {}; }
  static UtilitySpec belief_match_default() {
    UtilitySpec u;
    u.kind = UtilityKind::belief_match;
    return u;
  }
};

double evaluate_utility(const UtilitySpec& spec, const SummaryState& s, int a,
                        const SummaryState& s_next, int num_actions);

/// Known behavior policy: action distribution at a summary state.
using PropensityFn = std::function<VectorXd(const SummaryState&)>;

/// One tuple per visit pair (j = 1..J-1) with filtered beliefs; tuples are
/// ordered by subject then visit. behavior_prob is 1 unless `known` is set.
std::vector<MdpTuple> build_mdp_dataset(const Dataset& data, const ModelParams& params,
                                        const UtilitySpec& uspec, const PropensityFn& known = {},
                                        int threads = 1);

/// Tuples from precomputed beliefs (beliefs[i][j] for subject i, visit j).
std::vector<MdpTuple> tuples_from_beliefs(const Dataset& data,
                                          const std::vector<std::vector<VectorXd>>& beliefs,
                                          const UtilitySpec& uspec, int num_actions,
                                          const PropensityFn& known = {});

struct PropensityConfig {
  double ridge = 1e-4;
  double floor = 0.01;
  int max_refits = 3;
  int max_iterations = 100;
  double tolerance = 1e-10;
};

struct PropensityModel {
  int num_actions = 0;
  BasisSpec basis;
  MatrixXd coef;  // L x d, last row zero (reference action)
  MatrixXd se;    // standard errors of coef
  double ridge = 0.0;
  double floor = 0.0;
  int refits = 0;
  bool separation_warning = false;
  bool converged = false;

  /// Floored and renormalized fitted probabilities.
  VectorXd probs(const SummaryState& s) const;
};

/// Multinomial logistic regression of A on phi(S) by penalized Newton
/// iterations (intercept unpenalized).
PropensityModel estimate_propensity(const std::vector<MdpTuple>& tuples, const BasisSpec& basis,
                                    int num_actions, const PropensityConfig& config = {});

/// Sets behavior_prob from the fitted model.
void attach_propensity(std::vector<MdpTuple>& tuples, const PropensityModel& model);

int count_subjects(const std::vector<MdpTuple>& tuples);

std::string to_string(UtilityKind k);
UtilityKind parse_utility_kind(const std::string& s);

}  // namespace pomdp_dtr
