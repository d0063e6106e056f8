#pragma once

// Continuous-time latent Markov model with action-dependent generators and
// Gaussian autoregressive emissions: filtering, likelihood, gradient, MLE,
// observed information and label alignment.
//
// Indexing convention: latent states and actions are 0-based in memory.
// File formats and user-facing messages use 1-based labels.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pomdp_dtr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Throws ValidationError unless `q` is square with nonnegative
/// off-diagonals and rows summing to zero (tolerance 1e-8, scaled by the
/// largest rate when that exceeds one).
void validate_rate_matrix(const MatrixXd& q);

/// P(dt) = exp(dt * Q). Entries are clamped at zero to remove round-off
/// negatives; rows sum to one within 1e-9.
MatrixXd transition_matrix(const MatrixXd& rate, double dt);

struct StateEmission {
  VectorXd mu;           // mean of the first observation
  MatrixXd psi;          // autoregression matrix
  MatrixXd sigma;        // covariance (both densities when tied)
  MatrixXd sigma_init;   // covariance of the first observation when untied
};

struct EmissionParams {
  std::vector<StateEmission> states;
  /// Share Σ_m between the first-visit and autoregressive densities.
  bool tie_covariances = true;
  /// Autoregressive mean is mu_m + Psi_m x_prev instead of Psi_m x_prev.
  bool ar_intercept = false;

  const MatrixXd& initial_covariance(int m) const {
    return tie_covariances ? states[m].sigma : states[m].sigma_init;
  }
};

struct ModelParams {
  int num_states = 0;   // K
  int num_actions = 0;  // L
  int obs_dim = 0;      // p
  std::vector<MatrixXd> rates;  // one K x K generator per action
  EmissionParams emission;
  VectorXd init_dist;

  /// Throws ValidationError describing the first violated invariant.
  void validate() const;
};

/// One subject: strictly increasing visit times starting at 0 (fractions of
/// the study horizon), 0-based actions and one observation row per visit.
struct Trajectory {
  std::string subject_id;
  std::vector<double> times;
  std::vector<int> actions;
  MatrixXd obs;  // J x p

  int length() const { return static_cast<int>(times.size()); }
  VectorXd x(int j) const { return obs.row(j).transpose(); }
  void validate(int num_actions) const;
};

using Dataset = std::vector<Trajectory>;

/// log N(x; mu_m, Sigma_m) without `x_prev`; with it the autoregressive
/// density (mean Psi_m x_prev, plus mu_m when `ar_intercept`).
double emission_logdensity(const EmissionParams& params, int m, const VectorXd& x,
                           const std::optional<VectorXd>& x_prev = std::nullopt);

struct FilterResult {
  std::vector<VectorXd> beliefs;  // belief[j] = P(M(T^j) | H^j)
  double loglik = 0.0;
};

FilterResult forward_filter(const Trajectory& traj, const ModelParams& params);

/// Sum of per-subject filter log-likelihoods, reduced in subject order.
double log_likelihood(const Dataset& data, const ModelParams& params, int threads = 1);

// ---------------------------------------------------------------------------
// Unconstrained parameterization

/// Maps ModelParams to an unconstrained vector: log off-diagonal rates,
/// means, AR matrices, Cholesky factors (log diagonal) and init logits with
/// the last state pinned at zero.
class ParameterCodec {
 public:
  explicit ParameterCodec(const ModelParams& shape);

  int size() const { return size_; }
  VectorXd encode(const ModelParams& params) const;
  ModelParams decode(const VectorXd& theta) const;
  std::vector<std::string> names() const;

  /// Natural-scale vector: rates, means, AR entries, lower-triangle
  /// covariance entries, first K-1 init probabilities.
  VectorXd natural(const ModelParams& params) const;
  std::vector<std::string> natural_names() const;
  /// d natural / d theta by central differences.
  MatrixXd natural_jacobian(const VectorXd& theta) const;

  int rate_offset() const { return 0; }
  int mu_offset() const { return mu_off_; }
  int psi_offset() const { return psi_off_; }
  int chol_offset() const { return chol_off_; }
  int chol_init_offset() const { return chol_init_off_; }
  int init_offset() const { return init_off_; }

 private:
  int k_, l_, p_;
  bool tie_, intercept_;
  int mu_off_, psi_off_, chol_off_, chol_init_off_, init_off_, size_;
};

/// Log-likelihood and its gradient with respect to the codec vector,
/// computed with a scaled forward-backward pass (Fisher identity) and the
/// Fréchet derivative of the matrix exponential.
double log_likelihood_gradient(const Dataset& data, const ModelParams& params,
                               VectorXd& gradient, int threads = 1);

struct MleConfig {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the per-visit scaled objective
  int restarts = 5;                  // total starts, the first is unjittered
  double jitter = 0.25;              // sd of codec-space perturbations
  std::uint64_t seed = 20240601;
  int threads = 1;
};

struct MleReport {
  int iterations = 0;
  int evaluations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  double loglik_init = 0.0;
  double loglik = 0.0;
  int best_start = 0;
  int starts = 0;
};

struct MleResult {
  ModelParams params;
  MleReport report;
};

MleResult fit_mle(const Dataset& data, const ModelParams& init, const MleConfig& config = {});

struct FisherConfig {
  double relative_step = 1e-4;
  double eigen_floor = 1e-8;
  int threads = 1;
};

struct FisherReport {
  MatrixXd total;     // -Hessian of the summed log-likelihood
  MatrixXd mean;      // total / n_subjects
  MatrixXd jacobian;  // d natural / d theta at the evaluation point
  int num_subjects = 0;
  bool repaired = false;
  double min_eigenvalue = 0.0;
  double step = 0.0;
};

/// Observed information in codec coordinates by central differences of
/// the analytic gradient; symmetrized and eigenvalue-clipped when needed.
FisherReport fisher_information(const Dataset& data, const ModelParams& params,
                                const FisherConfig& config = {});

/// Relabels latent states: state perm[i] of the input becomes state i.
ModelParams permute_states(const ModelParams& params, const std::vector<int>& perm);

struct AlignResult {
  ModelParams params;
  std::vector<int> permutation;
  bool tie = false;
};

/// Canonical order: lexicographic on mu_m, ties broken by original index
/// (and flagged).
AlignResult align_labels(const ModelParams& params);

/// Order matching a reference model: the permutation minimizing the summed
/// squared distance between means (exhaustive for K <= 8).
AlignResult align_to_reference(const ModelParams& params, const ModelParams& reference);

/// Starting values from pooled observations: states are quantile groups
/// along the first principal axis, no autoregression, one expected jump
/// per mean follow-up and a uniform initial law.
ModelParams initial_guess(const Dataset& data, int num_states, int num_actions, bool ar_intercept = true,
                          bool tie_covariances = true);

}  // namespace pomdp_dtr
