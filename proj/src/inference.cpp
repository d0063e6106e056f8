#include "pomdp_dtr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/parallel.hpp"

namespace pomdp_dtr {

MatrixXd central_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x,
                          double relative_step) {
  MatrixXd jac;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = relative_step * std::max(1.0, std::abs(x[k]));
    VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const VectorXd col = (f(xp) - f(xm)) / (2.0 * h);
    if (k == 0) jac.resize(col.size(), x.size());
    if (!col.allFinite()) {
      throw NumericalError("non-finite Jacobian entry in parameter coordinate " + std::to_string(k + 1));
    }
    jac.col(k) = col;
  }
  return jac;
}

PerturbationCache build_perturbations(const Dataset& data, const ModelParams& params,
                                      const std::vector<MdpTuple>& tuples,
                                      const UtilitySpec& uspec, const EvalDesign& base,
                                      const ReferenceDistribution& reference,
                                      double relative_step, int threads) {
  const ParameterCodec codec(params);
  const VectorXd theta = codec.encode(params);
  const int q = codec.size();
  PerturbationCache cache;
  cache.relative_step = relative_step;
  cache.steps.resize(q);
  cache.plus.resize(q);
  cache.minus.resize(q);
  const auto design_at = [&](const VectorXd& th) {
    const ModelParams p = codec.decode(th);
    std::vector<std::vector<VectorXd>> beliefs(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) beliefs[i] = forward_filter(data[i], p).beliefs;
    std::vector<MdpTuple> pert = tuples_from_beliefs(data, beliefs, uspec, params.num_actions);
    if (pert.size() != tuples.size()) throw ValidationError("tuples do not match the dataset");
    for (std::size_t i = 0; i < pert.size(); ++i) pert[i].behavior_prob = tuples[i].behavior_prob;
    return make_design(pert, base.policy_basis, base.value_basis, reference, base.num_actions);
  };
  parallel_for(static_cast<std::size_t>(q), threads, [&](std::size_t k) {
    const double h = relative_step * std::max(1.0, std::abs(theta[k]));
    cache.steps[k] = h;
    VectorXd tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    cache.plus[k] = design_at(tp);
    cache.minus[k] = design_at(tm);
  });
  return cache;
}

namespace {

/// P_n sum_j G_j for one design.
VectorXd g_sum(const EvalDesign& d, const PolicyParams& policy, Criterion criterion,
               const VConfig& config, WForm form, const VectorXd& coef) {
  const VectorXd w = importance_weights(d, policy, config.weight_cap);
  VectorXd scale = d.u;
  if (form == WForm::residual) {
    if (criterion == Criterion::discounted) {
      scale += config.gamma * d.val_next * coef - d.val * coef;
    } else {
      const VectorXd beta = coef.tail(coef.size() - 1);
      scale.array() -= coef[0];
      scale += (d.val_next - d.val) * beta;
    }
  }
  const VectorXd ws = w.cwiseProduct(scale);
  const double n = d.num_subjects;
  if (criterion == Criterion::discounted) return d.val.transpose() * ws / n;
  VectorXd out(d.val.cols() + 1);
  out[0] = ws.sum() / n;
  out.tail(d.val.cols()) = d.val.transpose() * ws / n;
  return out;
}

SandwichComponents assemble(SandwichComponents s, const MatrixXd& fisher_mean) {
  if (s.w3.size() > 0 && fisher_mean.size() > 0) {
    Eigen::LDLT<MatrixXd> ldlt(fisher_mean);
    if (ldlt.info() != Eigen::Success) throw NumericalError("Fisher information factorization failed");
    s.middle = s.meat + s.w3 * ldlt.solve(s.w3.transpose());
  } else {
    s.middle = s.meat;
  }
  s.middle = 0.5 * (s.middle + s.middle.transpose()).eval();
  Eigen::PartialPivLU<MatrixXd> lu(s.bread.transpose());
  const VectorXd v = lu.solve(s.m);
  s.variance = v.dot(s.middle * v);
  if (!std::isfinite(s.variance) || s.variance < -1e-10) {
    throw NumericalError("sandwich variance is negative or non-finite (" + std::to_string(s.variance) + ")");
  }
  s.variance = std::max(0.0, s.variance);
  return s;
}

}  // namespace

MatrixXd w_operator(const PerturbationCache& cache, const PolicyParams& policy,
                    Criterion criterion, const VConfig& config, WForm form, const VectorXd& coef) {
  const int q = cache.size();
  MatrixXd out;
  for (int k = 0; k < q; ++k) {
    const VectorXd col = (g_sum(cache.plus[k], policy, criterion, config, form, coef) -
                          g_sum(cache.minus[k], policy, criterion, config, form, coef)) /
                         (2.0 * cache.steps[k]);
    if (k == 0) out.resize(col.size(), q);
    if (!col.allFinite()) {
      throw NumericalError("non-finite W-operator entry in parameter coordinate " + std::to_string(k + 1));
    }
    out.col(k) = col;
  }
  return out;
}

SandwichComponents variance_discounted(const EvalDesign& design, const PolicyParams& policy,
                                       const VConfig& config, const PerturbationCache* cache,
                                       const MatrixXd& fisher_mean, WForm form) {
  const DiscountedFit fit = solve_discounted(design, policy, config);
  const VectorXd w = importance_weights(design, policy, config.weight_cap);
  const VectorXd delta = design.u + config.gamma * design.val_next * fit.alpha - design.val * fit.alpha;
  const VectorXd c = w.cwiseProduct(delta);
  const double n = design.num_subjects;
  SandwichComponents s;
  s.num_subjects = design.num_subjects;
  s.bread = fit.c1;
  const MatrixXd cphi = design.val.array().colwise() * c.array();
  s.meat = cphi.transpose() * cphi / n;
  if (cache && cache->size() > 0) s.w3 = w_operator(*cache, policy, Criterion::discounted, config, form, fit.alpha);
  s.m = design.ref_mean();
  s.estimate = s.m.dot(fit.alpha);
  return assemble(std::move(s), fisher_mean);
}

SandwichComponents variance_average(const EvalDesign& design, const PolicyParams& policy,
                                    const VConfig& config, const PerturbationCache* cache,
                                    const MatrixXd& fisher_mean, WForm form) {
  const AverageFit fit = solve_average(design, policy, config);
  const VectorXd w = importance_weights(design, policy, config.weight_cap);
  VectorXd delta = design.u + (design.val_next - design.val) * fit.beta;
  delta.array() -= fit.value;
  const VectorXd c = w.cwiseProduct(delta);
  const double n = design.num_subjects;
  const auto dv = design.val.cols();
  MatrixXd cpsi(design.size(), dv + 1);
  cpsi.col(0) = c;
  cpsi.rightCols(dv) = design.val.array().colwise() * c.array();
  SandwichComponents s;
  s.num_subjects = design.num_subjects;
  s.bread = fit.d1;
  s.meat = cpsi.transpose() * cpsi / n;
  if (cache && cache->size() > 0) {
    VectorXd coef(dv + 1);
    coef << fit.value, fit.beta;
    s.w3 = w_operator(*cache, policy, Criterion::average, config, form, coef);
  }
  s.m = VectorXd::Zero(dv + 1);
  s.m[0] = 1.0;
  s.estimate = fit.value;
  return assemble(std::move(s), fisher_mean);
}

SandwichComponents value_variance(const EvalDesign& design, const PolicyParams& policy,
                                  Criterion criterion, const VConfig& config,
                                  const PerturbationCache* cache, const MatrixXd& fisher_mean,
                                  WForm form) {
  return criterion == Criterion::discounted
             ? variance_discounted(design, policy, config, cache, fisher_mean, form)
             : variance_average(design, policy, config, cache, fisher_mean, form);
}

// ---------------------------------------------------------------------------

PolicyCovariance policy_param_covariance(const std::function<double(const VectorXd&)>& objective,
                                         const std::function<VectorXd(const VectorXd&)>& pointwise,
                                         const VectorXd& xi_hat, double step) {
  const auto q = xi_hat.size();
  PolicyCovariance out;
  out.step = step;
  MatrixXd hess(q, q);
  const double f0 = objective(xi_hat);
  const auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    VectorXd x = xi_hat;
    x[i] += si * step;
    x[j] += sj * step;
    return objective(x);
  };
  for (Eigen::Index i = 0; i < q; ++i) {
    hess(i, i) = (at(i, 1.0, i, 0.0) - 2.0 * f0 + at(i, -1.0, i, 0.0)) / (step * step);
    for (Eigen::Index j = 0; j < i; ++j) {
      hess(i, j) = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) +
                    at(i, -1.0, j, -1.0)) / (4.0 * step * step);
      hess(j, i) = hess(i, j);
    }
  }
  if (!hess.allFinite()) throw NumericalError("non-finite Hessian of the value surface");
  out.sigma1 = -hess;
  const MatrixXd grads = central_jacobian(pointwise, xi_hat, step);  // R x q
  out.sigma2 = grads.transpose() * grads / static_cast<double>(grads.rows());

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(out.sigma1);
  out.min_curvature = q > 0 ? eig.eigenvalues().minCoeff() : 0.0;
  VectorXd lam = eig.eigenvalues();
  if (out.min_curvature <= 1e-8) {
    out.flat = true;
    const double floor = std::max(1e-8, 1e-3 * lam.cwiseAbs().maxCoeff());
    lam = lam.cwiseAbs().cwiseMax(floor);
  }
  const MatrixXd inv = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  out.cov = inv * out.sigma2 * inv;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

PolicyCovariance policy_param_covariance(const EvalDesign& design, const PolicyParams& policy,
                                         Criterion criterion, const VConfig& config,
                                         double penalty, double step) {
  const auto with = [&](const VectorXd& x) {
    PolicyParams p = policy;
    p.set_free(x);
    return p;
  };
  const auto objective = [&](const VectorXd& x) {
    return policy_value(design, with(x), criterion, config) - penalty * x.squaredNorm();
  };
  const VectorXd sqrt_w = design.ref_weights.cwiseSqrt() *
                          std::sqrt(static_cast<double>(design.ref_weights.size()));
  const auto pointwise = [&](const VectorXd& x) -> VectorXd {
    const PolicyParams p = with(x);
    if (criterion == Criterion::discounted) {
      return sqrt_w.cwiseProduct(design.ref_val * solve_discounted(design, p, config).alpha);
    }
    const AverageFit fit = solve_average(design, p, config);
    VectorXd h = design.ref_val * fit.beta;
    h.array() += fit.value;
    return sqrt_w.cwiseProduct(h);
  };
  return policy_param_covariance(objective, pointwise, policy.free(), step);
}

// ---------------------------------------------------------------------------

MatrixXd halton(int count, int dim, int skip) {
  static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                               43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101};
  const int max_dim = static_cast<int>(sizeof(primes) / sizeof(primes[0]));
  if (dim > max_dim) throw ValidationError("Halton sequence supports at most 26 dimensions");
  MatrixXd out(count, dim);
  for (int i = 0; i < count; ++i) {
    for (int d = 0; d < dim; ++d) {
      const int b = primes[d];
      double f = 1.0, r = 0.0;
      for (long idx = i + skip; idx > 0; idx /= b) {
        f /= b;
        r += f * static_cast<double>(idx % b);
      }
      out(i, d) = r;
    }
  }
  return out;
}

double chi2_quantile(double df, double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

ProjectionCi projection_ci(const VectorXd& xi_hat, const MatrixXd& sigma_xi,
                           const ValueVarianceFn& evaluator, int n, double eta,
                           const CiConfig& config) {
  if (!(eta > 0.0 && eta < 0.5)) throw ValidationError("eta must lie in (0, 0.5)");
  if (n < 1) throw ValidationError("sample size must be positive");
  const auto q = xi_hat.size();
  if (sigma_xi.rows() != q || sigma_xi.cols() != q) throw ValidationError("covariance has wrong shape");
  ProjectionCi ci;
  ci.eta = eta;
  ci.level = 1.0 - 2.0 * eta;
  ci.dim = static_cast<int>(q);
  ci.chi2 = q > 0 ? chi2_quantile(static_cast<double>(q), 1.0 - eta) : 0.0;
  ci.z = normal_quantile(1.0 - eta / 2.0);

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (sigma_xi + sigma_xi.transpose()));
  VectorXd lam = q > 0 ? VectorXd(eig.eigenvalues().cwiseMax(0.0)) : VectorXd();
  MatrixXd axes = q > 0 ? MatrixXd(eig.eigenvectors() * lam.cwiseSqrt().asDiagonal()) : MatrixXd();
  if (q > config.full_dim_limit) {
    // eigenvalues ascend, keep the largest
    axes = axes.rightCols(config.top_axes).eval();
  }
  const int s = static_cast<int>(axes.cols());
  ci.sampled_dim = s;
  const bool degenerate = q == 0 || lam.maxCoeff() <= 0.0;

  std::vector<VectorXd> points{xi_hat};
  if (!degenerate && config.points > 0) {
    const double radius = std::sqrt(ci.chi2 / static_cast<double>(n));
    const MatrixXd h = halton(config.points, s + 1);
    for (int i = 0; i < config.points; ++i) {
      VectorXd u(s);
      for (int d = 0; d < s; ++d) u[d] = normal_quantile(std::clamp(h(i, d), 1e-12, 1.0 - 1e-12));
      const double norm = u.norm();
      if (norm == 0.0) continue;
      u /= norm;
      const bool boundary = i < config.points / 2;
      const double r = boundary ? 1.0 : std::pow(h(i, s), 1.0 / s);
      points.push_back(xi_hat + radius * r * (axes * u));
    }
  }

  std::vector<double> lo(points.size()), hi(points.size()), est(points.size()), var(points.size());
  std::vector<char> ok(points.size(), 0);
  parallel_for(points.size(), config.threads, [&](std::size_t i) {
    try {
      const auto [v, s2] = evaluator(points[i]);
      if (!std::isfinite(v) || !std::isfinite(s2) || s2 < 0.0) return;
      const double half = ci.z * std::sqrt(s2 / static_cast<double>(n));
      est[i] = v;
      var[i] = s2;
      lo[i] = v - half;
      hi[i] = v + half;
      ok[i] = 1;
    } catch (const std::exception&) {
    }
  });
  if (!ok[0]) throw NumericalError("value evaluator failed at the estimated policy parameters");
  ci.estimate = est[0];
  ci.wald_lower = lo[0];
  ci.wald_upper = hi[0];
  ci.lower = lo[0];
  ci.upper = hi[0];
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!ok[i]) {
      ++ci.skipped;
      continue;
    }
    ++ci.evaluated;
    ci.lower = std::min(ci.lower, lo[i]);
    ci.upper = std::max(ci.upper, hi[i]);
  }
  if (ci.skipped > config.max_failure_fraction * static_cast<double>(points.size())) {
    throw NumericalError("projection interval: " + std::to_string(ci.skipped) + " of " +
                         std::to_string(points.size()) + " sampled policies failed to evaluate");
  }
  return ci;
}

std::string to_string(WForm f) { return f == WForm::utility ? "utility" : "residual"; }

WForm parse_w_form(const std::string& s) {
  if (s == "utility") return WForm::utility;
  if (s == "residual") return WForm::residual;
  throw ValidationError("unknown W form '" + s + "'");
}

}  // namespace pomdp_dtr
