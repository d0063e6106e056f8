#pragma once

// Sandwich variances for plug-in values, the covariance of estimated policy
// parameters and projection confidence intervals for the optimal value.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pomdp_dtr/belief_transform.hpp"
#include "pomdp_dtr/ct_hmm.hpp"
#include "pomdp_dtr/v_learning.hpp"

namespace pomdp_dtr {

/// Central-difference Jacobian of f at x; column k uses step
/// relative_step * max(1, |x_k|).
MatrixXd central_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x,
                          double relative_step);

/// Which per-tuple function is differentiated with respect to the latent
/// model parameters.
enum class WForm {
  utility,   // G = w U phi (the form displayed for the C3 / D3 matrices)
  residual,  // G = w {U + gamma phi'^T alpha - phi^T alpha} phi at fixed alpha
};

/// Designs rebuilt at rho +/- h_k e_k for every codec coordinate k, so that
/// W-operator sums can be formed for any policy without refiltering.
struct PerturbationCache {
  VectorXd steps;
  std::vector<EvalDesign> plus;
  std::vector<EvalDesign> minus;
  double relative_step = 0.0;
  int size() const { return static_cast<int>(steps.size()); }
};

/// Behavior probabilities are held at their values in `tuples`; utilities
/// that depend on beliefs are recomputed.
PerturbationCache build_perturbations(const Dataset& data, const ModelParams& params,
                                      const std::vector<MdpTuple>& tuples,
                                      const UtilitySpec& uspec, const EvalDesign& base,
                                      const ReferenceDistribution& reference,
                                      double relative_step = 1e-5, int threads = 1);

struct SandwichComponents {
  MatrixXd bread;   // C1 or D1
  MatrixXd meat;    // C2 or D2
  MatrixXd w3;      // C3 or D3 (d x q), empty when latent-model error is ignored
  MatrixXd middle;  // meat + w3 I^{-1} w3^T
  VectorXd m;       // reference mean of phi (discounted) or e_1 (average)
  double estimate = 0.0;
  double variance = 0.0;  // asymptotic variance of sqrt(n) (V_hat - V)
  int num_subjects = 0;
};

/// W-operator sum (P_n sum_j dG_j / d rho) for the given policy.
MatrixXd w_operator(const PerturbationCache& cache, const PolicyParams& policy,
                    Criterion criterion, const VConfig& config, WForm form = WForm::utility,
                    const VectorXd& coef = {});

/// `cache` and `fisher_mean` may be null/empty, in which case C3 is zero.
SandwichComponents variance_discounted(const EvalDesign& design, const PolicyParams& policy,
                                       const VConfig& config, const PerturbationCache* cache,
                                       const MatrixXd& fisher_mean, WForm form = WForm::utility);

SandwichComponents variance_average(const EvalDesign& design, const PolicyParams& policy,
                                    const VConfig& config, const PerturbationCache* cache,
                                    const MatrixXd& fisher_mean, WForm form = WForm::utility);

SandwichComponents value_variance(const EvalDesign& design, const PolicyParams& policy,
                                  Criterion criterion, const VConfig& config,
                                  const PerturbationCache* cache, const MatrixXd& fisher_mean,
                                  WForm form = WForm::utility);

struct PolicyCovariance {
  MatrixXd sigma1;  // minus the Hessian of the search objective
  MatrixXd sigma2;  // mean outer product of per-reference-point gradients
  MatrixXd cov;     // sigma1^{-1} sigma2 sigma1^{-1}
  double min_curvature = 0.0;  // smallest eigenvalue of sigma1
  bool flat = false;           // sigma1 not positive definite; cov uses a repaired sigma1
  double step = 0.0;
};

/// `objective` is the maximized surface; `pointwise` returns the value at
/// each reference point (its mean is the plug-in value).
PolicyCovariance policy_param_covariance(const std::function<double(const VectorXd&)>& objective,
                                         const std::function<VectorXd(const VectorXd&)>& pointwise,
                                         const VectorXd& xi_hat, double step = 1e-3);

/// Convenience wrapper over a design and search result.
PolicyCovariance policy_param_covariance(const EvalDesign& design, const PolicyParams& policy,
                                         Criterion criterion, const VConfig& config,
                                         double penalty, double step = 1e-3);

struct CiConfig {
  int points = 512;            // half on the ellipsoid boundary, half inside
  int full_dim_limit = 20;     // above this, sample along the top principal axes
  int top_axes = 5;
  double max_failure_fraction = 0.2;
  int threads = 1;
};

struct ProjectionCi {
  double eta = 0.0;
  double level = 0.0;       // 1 - 2 eta
  double chi2 = 0.0;        // ellipsoid radius (squared)
  double z = 0.0;
  double estimate = 0.0;    // plug-in value at xi_hat
  double lower = 0.0;
  double upper = 0.0;
  double wald_lower = 0.0;  // interval at xi_hat alone
  double wald_upper = 0.0;
  int evaluated = 0;
  int skipped = 0;
  int dim = 0;
  int sampled_dim = 0;
};

/// Returns (value, variance) of sqrt(n)(V_hat - V) at xi.
using ValueVarianceFn = std::function<std::pair<double, double>(const VectorXd&)>;

ProjectionCi projection_ci(const VectorXd& xi_hat, const MatrixXd& sigma_xi,
                           const ValueVarianceFn& evaluator, int n, double eta,
                           const CiConfig& config = {});

/// Quasi-random points: row i is the i-th Halton point in [0,1)^dim.
MatrixXd halton(int count, int dim, int skip = 1);

double chi2_quantile(double df, double p);
double normal_quantile(double p);

std::string to_string(WForm f);
WForm parse_w_form(const std::string& s);

}  // namespace pomdp_dtr
