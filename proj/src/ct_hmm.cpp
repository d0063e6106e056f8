#include "pomdp_dtr/ct_hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/expm.hpp"
#include "pomdp_dtr/optim.hpp"
#include "pomdp_dtr/parallel.hpp"

namespace pomdp_dtr {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string fmt_state(int m) { return std::to_string(m + 1); }

/// Per-state Cholesky factors and normalizing constants.
class EmissionCache {
 public:
  explicit EmissionCache(const EmissionParams& params) : params_(params) {
    const auto k = params.states.size();
    chol_.reserve(k);
    chol_init_.reserve(k);
    for (std::size_t m = 0; m < k; ++m) {
      chol_.push_back(factor(params.states[m].sigma, static_cast<int>(m)));
      chol_init_.push_back(params.tie_covariances
                               ? chol_.back()
                               : factor(params.states[m].sigma_init, static_cast<int>(m)));
    }
  }

  /// Log-density; `j` selects the initial (j == 0) or autoregressive form.
  double logdensity(int m, const Eigen::Ref<const VectorXd>& x, const VectorXd* x_prev,
                    VectorXd* residual = nullptr) const {
    const auto& st = params_.states[m];
    const Factor& f = x_prev ? chol_[m] : chol_init_[m];
    VectorXd r = x;
    if (!x_prev) {
      r -= st.mu;
    } else {
      r.noalias() -= st.psi * (*x_prev);
      if (params_.ar_intercept) r -= st.mu;
    }
    const VectorXd z = f.l.triangularView<Eigen::Lower>().solve(r);
    if (residual) *residual = std::move(r);
    return f.log_norm - 0.5 * z.squaredNorm();
  }

  const MatrixXd& inverse(int m, bool initial) const {
    return initial ? chol_init_[m].inv : chol_[m].inv;
  }

 private:
  struct Factor {
    MatrixXd l;
    MatrixXd inv;
    double log_norm = 0.0;
  };

  static Factor factor(const MatrixXd& sigma, int m) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success || !sigma.allFinite()) {
      throw NonSpdError("covariance of state " + fmt_state(m) + " is not positive definite");
    }
    Factor f;
    f.l = llt.matrixL();
    const double logdet = 2.0 * f.l.diagonal().array().log().sum();
    f.log_norm = -0.5 * (static_cast<double>(sigma.rows()) * kLog2Pi + logdet);
    f.inv = llt.solve(MatrixXd::Identity(sigma.rows(), sigma.cols()));
    return f;
  }

  const EmissionParams& params_;
  std::vector<Factor> chol_;
  std::vector<Factor> chol_init_;
};

/// Gradient pieces in natural coordinates, summed over subjects.
struct GradAccumulator {
  std::vector<MatrixXd> d_rate;      // dl/dQ_a
  std::vector<VectorXd> d_mu;
  std::vector<MatrixXd> d_psi;
  std::vector<MatrixXd> d_sigma;     // dl/dSigma (symmetric form)
  std::vector<MatrixXd> d_sigma_init;
  VectorXd d_logit;

  GradAccumulator(int k, int l, int p)
      : d_rate(l, MatrixXd::Zero(k, k)),
        d_mu(k, VectorXd::Zero(p)),
        d_psi(k, MatrixXd::Zero(p, p)),
        d_sigma(k, MatrixXd::Zero(p, p)),
        d_sigma_init(k, MatrixXd::Zero(p, p)),
        d_logit(VectorXd::Zero(k)) {}

  void add(const GradAccumulator& o) {
    for (std::size_t a = 0; a < d_rate.size(); ++a) d_rate[a] += o.d_rate[a];
    for (std::size_t m = 0; m < d_mu.size(); ++m) {
      d_mu[m] += o.d_mu[m];
      d_psi[m] += o.d_psi[m];
      d_sigma[m] += o.d_sigma[m];
      d_sigma_init[m] += o.d_sigma_init[m];
    }
    d_logit += o.d_logit;
  }
};

/// Scaled forward pass, optionally followed by the backward pass that fills
/// `acc` with expected complete-data score contributions.
double subject_pass(const Trajectory& traj, const ModelParams& params,
                    const EmissionCache& cache, std::vector<VectorXd>* beliefs,
                    GradAccumulator* acc) {
  const int k = params.num_states;
  const int jn = traj.length();
  MatrixXd alpha(jn, k);
  MatrixXd escaled(jn, k);
  VectorXd c(jn);
  std::vector<MatrixXd> trans(static_cast<std::size_t>(std::max(0, jn - 1)));
  double loglik = 0.0;

  VectorXd le(k);
  for (int j = 0; j < jn; ++j) {
    VectorXd prev;
    const VectorXd* prev_ptr = nullptr;
    if (j > 0) {
      prev = traj.x(j - 1);
      prev_ptr = &prev;
    }
    for (int m = 0; m < k; ++m) le[m] = cache.logdensity(m, traj.obs.row(j).transpose(), prev_ptr);
    const double shift = le.maxCoeff();
    VectorXd e = (le.array() - shift).exp();
    flush_subnormals(e);
    escaled.row(j) = e.transpose();
    VectorXd pred;
    if (j == 0) {
      pred = params.init_dist;
    } else {
      const double dt = traj.times[j] - traj.times[j - 1];
      trans[j - 1] = transition_matrix(params.rates[traj.actions[j - 1]], dt);
      pred = trans[j - 1].transpose() * alpha.row(j - 1).transpose();
    }
    const VectorXd unnorm = pred.cwiseProduct(escaled.row(j).transpose());
    c[j] = unnorm.sum();
    if (!(c[j] > 0.0) || !std::isfinite(c[j]) || !std::isfinite(shift)) {
      throw DegenerateObservationError("subject " + traj.subject_id +
                                           ": zero likelihood at visit " + std::to_string(j + 1),
                                       j + 1);
    }
    VectorXd filtered = unnorm / c[j];
    flush_subnormals(filtered);
    alpha.row(j) = filtered.transpose();
    loglik += std::log(c[j]) + shift;
  }

  if (beliefs) {
    beliefs->resize(jn);
    for (int j = 0; j < jn; ++j) (*beliefs)[j] = alpha.row(j).transpose();
  }
  if (!acc) return loglik;

  const int p = params.obs_dim;
  MatrixXd beta = MatrixXd::Ones(jn, k);
  for (int j = jn - 1; j >= 1; --j) {
    const VectorXd eb = escaled.row(j).transpose().cwiseProduct(beta.row(j).transpose());
    // dl/dP_j(k, l) = alpha_{j-1}(k) e_j(l) beta_j(l) / c_j
    const MatrixXd g = alpha.row(j - 1).transpose() * eb.transpose() / c[j];
    const int a = traj.actions[j - 1];
    const double dt = traj.times[j] - traj.times[j - 1];
    const MatrixXd& q = params.rates[a];
    acc->d_rate[a] += dt * expm_frechet(dt * q.transpose(), g);
    beta.row(j - 1) = (trans[j - 1] * eb / c[j]).transpose();
  }

  VectorXd resid(p);
  for (int j = 0; j < jn; ++j) {
    VectorXd prev;
    const VectorXd* prev_ptr = nullptr;
    if (j > 0) {
      prev = traj.x(j - 1);
      prev_ptr = &prev;
    }
    const bool initial = j == 0;
    for (int m = 0; m < k; ++m) {
      const double w = alpha(j, m) * beta(j, m);
      if (w == 0.0) continue;
      cache.logdensity(m, traj.obs.row(j).transpose(), prev_ptr, &resid);
      const MatrixXd& inv = cache.inverse(m, initial);
      const VectorXd s = inv * resid;
      if (initial || params.emission.ar_intercept) acc->d_mu[m] += w * s;
      if (!initial) acc->d_psi[m] += w * s * prev.transpose();
      MatrixXd& ds = (initial && !params.emission.tie_covariances) ? acc->d_sigma_init[m]
                                                                   : acc->d_sigma[m];
      ds += 0.5 * w * (s * s.transpose() - inv);
    }
  }
  const VectorXd post0 = alpha.row(0).transpose().cwiseProduct(beta.row(0).transpose());
  acc->d_logit += post0 - params.init_dist;
  return loglik;
}

/// Lower-triangle Cholesky coordinates: entries (i, j) with i >= j, row-major.
template <class F>
void for_lower(int p, F&& f) {
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) f(i, j);
}

}  // namespace

// ---------------------------------------------------------------------------

void validate_rate_matrix(const MatrixXd& q) {
  if (q.rows() != q.cols()) throw ValidationError("rate matrix must be square");
  if (!q.allFinite()) throw ValidationError("rate matrix has non-finite entries");
  const double scale = std::max(1.0, q.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < q.rows(); ++k) {
    for (Eigen::Index l = 0; l < q.cols(); ++l) {
      if (k != l && q(k, l) < 0.0) {
        throw ValidationError("rate matrix entry (" + std::to_string(k + 1) + "," +
                              std::to_string(l + 1) + ") is negative");
      }
    }
    if (std::abs(q.row(k).sum()) > 1e-8 * scale) {
      throw ValidationError("rate matrix row " + std::to_string(k + 1) + " does not sum to zero");
    }
  }
}

MatrixXd transition_matrix(const MatrixXd& rate, double dt) {
  if (!(dt >= 0.0)) throw ValidationError("transition duration must be nonnegative");
  validate_rate_matrix(rate);
  if (dt == 0.0) return MatrixXd::Identity(rate.rows(), rate.cols());
  MatrixXd p = expm(dt * rate);
  return p.cwiseMax(0.0);
}

void ModelParams::validate() const {
  if (num_states < 1 || num_actions < 1 || obs_dim < 1) {
    throw ValidationError("model dimensions K, L, p must be positive");
  }
  if (static_cast<int>(rates.size()) != num_actions) {
    throw ValidationError("expected one rate matrix per action");
  }
  for (int a = 0; a < num_actions; ++a) {
    if (rates[a].rows() != num_states) {
      throw ValidationError("rate matrix for action " + std::to_string(a + 1) + " is not K x K");
    }
    validate_rate_matrix(rates[a]);
  }
  if (static_cast<int>(emission.states.size()) != num_states) {
    throw ValidationError("expected emission parameters for every latent state");
  }
  for (int m = 0; m < num_states; ++m) {
    const auto& st = emission.states[m];
    const auto check = [&](bool ok, const char* what) {
      if (!ok) throw ValidationError(std::string(what) + " of state " + fmt_state(m) + " has wrong shape");
    };
    check(st.mu.size() == obs_dim, "mean");
    check(st.psi.rows() == obs_dim && st.psi.cols() == obs_dim, "AR matrix");
    check(st.sigma.rows() == obs_dim && st.sigma.cols() == obs_dim, "covariance");
    if (!emission.tie_covariances) {
      check(st.sigma_init.rows() == obs_dim && st.sigma_init.cols() == obs_dim,
            "initial covariance");
    }
  }
  if (init_dist.size() != num_states || (init_dist.array() < 0.0).any() ||
      std::abs(init_dist.sum() - 1.0) > 1e-10) {
    throw ValidationError("initial distribution must be a probability vector of length K");
  }
}

void Trajectory::validate(int num_actions) const {
  const int jn = length();
  const auto where = [&](int j) {
    return "subject " + subject_id + ", visit " + std::to_string(j + 1);
  };
  if (jn < 2) throw ValidationError("subject " + subject_id + ": fewer than two visits");
  if (static_cast<int>(actions.size()) != jn || obs.rows() != jn) {
    throw ValidationError("subject " + subject_id + ": times, actions and observations differ in length");
  }
  if (times[0] != 0.0) throw ValidationError(where(0) + ": first visit time must be 0");
  for (int j = 0; j < jn; ++j) {
    if (!std::isfinite(times[j])) throw ValidationError(where(j) + ": non-finite time");
    if (j > 0 && !(times[j] > times[j - 1])) {
      throw ValidationError(where(j) + ": visit times must be strictly increasing");
    }
    if (actions[j] < 0 || actions[j] >= num_actions) {
      throw ValidationError(where(j) + ": action out of range");
    }
  }
  if (!obs.allFinite()) throw ValidationError("subject " + subject_id + ": non-finite observation");
}

double emission_logdensity(const EmissionParams& params, int m, const VectorXd& x,
                           const std::optional<VectorXd>& x_prev) {
  if (m < 0 || m >= static_cast<int>(params.states.size())) {
    throw ValidationError("latent state index out of range");
  }
  const auto p = params.states[m].mu.size();
  if (x.size() != p || (x_prev && x_prev->size() != p)) {
    throw ValidationError("observation dimension does not match emission parameters");
  }
  EmissionParams single;
  single.tie_covariances = params.tie_covariances;
  single.ar_intercept = params.ar_intercept;
  single.states = {params.states[m]};
  const EmissionCache cache(single);
  return cache.logdensity(0, x, x_prev ? &*x_prev : nullptr);
}

FilterResult forward_filter(const Trajectory& traj, const ModelParams& params) {
  const EmissionCache cache(params.emission);
  FilterResult out;
  out.loglik = subject_pass(traj, params, cache, &out.beliefs, nullptr);
  return out;
}

double log_likelihood(const Dataset& data, const ModelParams& params, int threads) {
  if (data.empty()) throw ValidationError("dataset is empty");
  const EmissionCache cache(params.emission);
  std::vector<double> parts(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    parts[i] = subject_pass(data[i], params, cache, nullptr, nullptr);
  });
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

// ---------------------------------------------------------------------------

ParameterCodec::ParameterCodec(const ModelParams& shape)
    : k_(shape.num_states),
      l_(shape.num_actions),
      p_(shape.obs_dim),
      tie_(shape.emission.tie_covariances),
      intercept_(shape.emission.ar_intercept) {
  const int tri = p_ * (p_ + 1) / 2;
  mu_off_ = l_ * k_ * (k_ - 1);
  psi_off_ = mu_off_ + k_ * p_;
  chol_off_ = psi_off_ + k_ * p_ * p_;
  chol_init_off_ = chol_off_ + k_ * tri;
  init_off_ = chol_init_off_ + (tie_ ? 0 : k_ * tri);
  size_ = init_off_ + (k_ - 1);
}

VectorXd ParameterCodec::encode(const ModelParams& params) const {
  VectorXd theta(size_);
  int idx = 0;
  for (int a = 0; a < l_; ++a)
    for (int k = 0; k < k_; ++k)
      for (int l = 0; l < k_; ++l)
        if (k != l) theta[idx++] = std::log(std::max(params.rates[a](k, l), 1e-10));
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i) theta[idx++] = params.emission.states[m].mu[i];
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j) theta[idx++] = params.emission.states[m].psi(i, j);
  const auto put_chol = [&](const MatrixXd& sigma, int m) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NonSpdError("covariance of state " + fmt_state(m) + " is not positive definite");
    }
    const MatrixXd lo = llt.matrixL();
    for_lower(p_, [&](int i, int j) { theta[idx++] = i == j ? std::log(lo(i, i)) : lo(i, j); });
  };
  for (int m = 0; m < k_; ++m) put_chol(params.emission.states[m].sigma, m);
  if (!tie_)
    for (int m = 0; m < k_; ++m) put_chol(params.emission.states[m].sigma_init, m);
  for (int m = 0; m + 1 < k_; ++m) {
    theta[idx++] = std::log(std::max(params.init_dist[m], 1e-300)) -
                   std::log(std::max(params.init_dist[k_ - 1], 1e-300));
  }
  return theta;
}

ModelParams ParameterCodec::decode(const VectorXd& theta) const {
  ModelParams out;
  out.num_states = k_;
  out.num_actions = l_;
  out.obs_dim = p_;
  out.emission.tie_covariances = tie_;
  out.emission.ar_intercept = intercept_;
  int idx = 0;
  out.rates.assign(l_, MatrixXd::Zero(k_, k_));
  for (int a = 0; a < l_; ++a) {
    for (int k = 0; k < k_; ++k) {
      for (int l = 0; l < k_; ++l) {
        if (k == l) continue;
        out.rates[a](k, l) = std::exp(theta[idx++]);
      }
      out.rates[a](k, k) = 0.0;
      out.rates[a](k, k) = -out.rates[a].row(k).sum();
    }
  }
  out.emission.states.resize(k_);
  for (int m = 0; m < k_; ++m) {
    auto& st = out.emission.states[m];
    st.mu.resize(p_);
    for (int i = 0; i < p_; ++i) st.mu[i] = theta[idx++];
  }
  for (int m = 0; m < k_; ++m) {
    auto& st = out.emission.states[m];
    st.psi.resize(p_, p_);
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j) st.psi(i, j) = theta[idx++];
  }
  const auto get_chol = [&]() {
    MatrixXd lo = MatrixXd::Zero(p_, p_);
    for_lower(p_, [&](int i, int j) { lo(i, j) = i == j ? std::exp(theta[idx++]) : theta[idx++]; });
    return MatrixXd(lo * lo.transpose());
  };
  for (int m = 0; m < k_; ++m) out.emission.states[m].sigma = get_chol();
  if (!tie_)
    for (int m = 0; m < k_; ++m) out.emission.states[m].sigma_init = get_chol();
  VectorXd logits = VectorXd::Zero(k_);
  for (int m = 0; m + 1 < k_; ++m) logits[m] = theta[idx++];
  const double top = logits.maxCoeff();
  out.init_dist = (logits.array() - top).exp();
  out.init_dist /= out.init_dist.sum();
  return out;
}

std::vector<std::string> ParameterCodec::names() const {
  std::vector<std::string> n;
  const auto s = [](int v) { return std::to_string(v + 1); };
  for (int a = 0; a < l_; ++a)
    for (int k = 0; k < k_; ++k)
      for (int l = 0; l < k_; ++l)
        if (k != l) n.push_back("log_q[a=" + s(a) + "](" + s(k) + "," + s(l) + ")");
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i) n.push_back("mu[" + s(m) + "](" + s(i) + ")");
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j) n.push_back("psi[" + s(m) + "](" + s(i) + "," + s(j) + ")");
  const auto chol_names = [&](const std::string& tag) {
    for (int m = 0; m < k_; ++m)
      for_lower(p_, [&](int i, int j) {
        n.push_back((i == j ? "log_" + tag : tag) + "[" + s(m) + "](" + s(i) + "," + s(j) + ")");
      });
  };
  chol_names("chol");
  if (!tie_) chol_names("chol_init");
  for (int m = 0; m + 1 < k_; ++m) n.push_back("init_logit(" + s(m) + ")");
  return n;
}

VectorXd ParameterCodec::natural(const ModelParams& params) const {
  std::vector<double> v;
  for (int a = 0; a < l_; ++a)
    for (int k = 0; k < k_; ++k)
      for (int l = 0; l < k_; ++l)
        if (k != l) v.push_back(params.rates[a](k, l));
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i) v.push_back(params.emission.states[m].mu[i]);
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j) v.push_back(params.emission.states[m].psi(i, j));
  for (int m = 0; m < k_; ++m)
    for_lower(p_, [&](int i, int j) { v.push_back(params.emission.states[m].sigma(i, j)); });
  if (!tie_)
    for (int m = 0; m < k_; ++m)
      for_lower(p_, [&](int i, int j) { v.push_back(params.emission.states[m].sigma_init(i, j)); });
  for (int m = 0; m + 1 < k_; ++m) v.push_back(params.init_dist[m]);
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> ParameterCodec::natural_names() const {
  std::vector<std::string> n;
  const auto s = [](int v) { return std::to_string(v + 1); };
  for (int a = 0; a < l_; ++a)
    for (int k = 0; k < k_; ++k)
      for (int l = 0; l < k_; ++l)
        if (k != l) n.push_back("q[a=" + s(a) + "](" + s(k) + "," + s(l) + ")");
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i) n.push_back("mu[" + s(m) + "](" + s(i) + ")");
  for (int m = 0; m < k_; ++m)
    for (int i = 0; i < p_; ++i)
      for (int j = 0; j < p_; ++j) n.push_back("psi[" + s(m) + "](" + s(i) + "," + s(j) + ")");
  for (int m = 0; m < k_; ++m)
    for_lower(p_, [&](int i, int j) { n.push_back("sigma[" + s(m) + "](" + s(i) + "," + s(j) + ")"); });
  if (!tie_)
    for (int m = 0; m < k_; ++m)
      for_lower(p_, [&](int i, int j) {
        n.push_back("sigma_init[" + s(m) + "](" + s(i) + "," + s(j) + ")");
      });
  for (int m = 0; m + 1 < k_; ++m) n.push_back("init(" + s(m) + ")");
  return n;
}

MatrixXd ParameterCodec::natural_jacobian(const VectorXd& theta) const {
  const VectorXd base = natural(decode(theta));
  MatrixXd jac(base.size(), size_);
  for (int c = 0; c < size_; ++c) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta[c]));
    VectorXd tp = theta, tm = theta;
    tp[c] += h;
    tm[c] -= h;
    jac.col(c) = (natural(decode(tp)) - natural(decode(tm))) / (2.0 * h);
  }
  return jac;
}

double log_likelihood_gradient(const Dataset& data, const ModelParams& params,
                               VectorXd& gradient, int threads) {
  if (data.empty()) throw ValidationError("dataset is empty");
  const int k = params.num_states, l = params.num_actions, p = params.obs_dim;
  const EmissionCache cache(params.emission);
  std::vector<double> parts(data.size());
  std::vector<GradAccumulator> accs(data.size(), GradAccumulator(k, l, p));
  parallel_for(data.size(), threads, [&](std::size_t i) {
    parts[i] = subject_pass(data[i], params, cache, nullptr, &accs[i]);
  });
  GradAccumulator total(k, l, p);
  for (const auto& a : accs) total.add(a);

  const ParameterCodec codec(params);
  gradient.setZero(codec.size());
  int idx = 0;
  for (int a = 0; a < l; ++a)
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c)
        if (r != c) {
          const double q = params.rates[a](r, c);
          gradient[idx++] = q * (total.d_rate[a](r, c) - total.d_rate[a](r, r));
        }
  for (int m = 0; m < k; ++m)
    for (int i = 0; i < p; ++i) gradient[idx++] = total.d_mu[m][i];
  for (int m = 0; m < k; ++m)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) gradient[idx++] = total.d_psi[m](i, j);
  const auto chol_grad = [&](const MatrixXd& sigma, const MatrixXd& dsig) {
    const MatrixXd lo = Eigen::LLT<MatrixXd>(sigma).matrixL();
    const MatrixXd dl = 2.0 * dsig * lo;
    for_lower(p, [&](int i, int j) { gradient[idx++] = i == j ? dl(i, i) * lo(i, i) : dl(i, j); });
  };
  for (int m = 0; m < k; ++m) chol_grad(params.emission.states[m].sigma, total.d_sigma[m]);
  if (!params.emission.tie_covariances)
    for (int m = 0; m < k; ++m)
      chol_grad(params.emission.states[m].sigma_init, total.d_sigma_init[m]);
  for (int m = 0; m + 1 < k; ++m) gradient[idx++] = total.d_logit[m];
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

// ---------------------------------------------------------------------------

MleResult fit_mle(const Dataset& data, const ModelParams& init, const MleConfig& config) {
  if (data.empty()) throw ValidationError("dataset is empty");
  init.validate();
  for (const auto& t : data) t.validate(init.num_actions);
  const ParameterCodec codec(init);
  double visits = 0.0;
  for (const auto& t : data) visits += t.length();

  MleResult best;
  best.params = init;
  double loglik_init = 0.0;
  try {
    loglik_init = log_likelihood(data, init, config.threads);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("log-likelihood at initial parameters: ") + e.what());
  }
  if (!std::isfinite(loglik_init)) throw NumericalError("non-finite log-likelihood at initial parameters");
  best.report.loglik_init = loglik_init;
  best.report.loglik = loglik_init;

  const GradientObjective objective = [&](const VectorXd& theta, VectorXd& grad) {
    try {
      const ModelParams params = codec.decode(theta);
      const double ll = log_likelihood_gradient(data, params, grad, config.threads);
      grad *= -1.0 / visits;
      return -ll / visits;
    } catch (const NumericalError&) {
      grad.setZero(theta.size());
      return std::numeric_limits<double>::infinity();
    }
  };

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const VectorXd theta0 = codec.encode(init);
  BfgsOptions opts;
  opts.max_iterations = config.max_iterations;
  opts.gradient_tolerance = config.gradient_tolerance;
  const int starts = std::max(1, config.restarts);
  for (int s = 0; s < starts; ++s) {
    VectorXd start = theta0;
    if (s > 0)
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += config.jitter * normal(rng);
    const BfgsResult res = minimize_bfgs(objective, start, opts);
    best.report.iterations += res.iterations;
    best.report.evaluations += res.evaluations;
    if (!std::isfinite(res.value)) continue;
    const double ll = -res.value * visits;
    if (ll > best.report.loglik) {
      best.params = codec.decode(res.x);
      best.report.loglik = ll;
      best.report.gradient_norm = res.gradient.lpNorm<Eigen::Infinity>();
      best.report.converged = res.converged;
      best.report.best_start = s;
    }
  }
  best.report.starts = starts;
  return best;
}

FisherReport fisher_information(const Dataset& data, const ModelParams& params,
                                const FisherConfig& config) {
  const ParameterCodec codec(params);
  const VectorXd theta = codec.encode(params);
  const int n = codec.size();
  MatrixXd hess(n, n);
  VectorXd gp(n), gm(n);
  for (int c = 0; c < n; ++c) {
    const double h = config.relative_step * std::max(1.0, std::abs(theta[c]));
    VectorXd tp = theta, tm = theta;
    tp[c] += h;
    tm[c] -= h;
    log_likelihood_gradient(data, codec.decode(tp), gp, config.threads);
    log_likelihood_gradient(data, codec.decode(tm), gm, config.threads);
    hess.col(c) = (gp - gm) / (2.0 * h);
  }
  FisherReport out;
  out.num_subjects = static_cast<int>(data.size());
  out.step = config.relative_step;
  out.total = -0.5 * (hess + hess.transpose());
  out.mean = out.total / static_cast<double>(out.num_subjects);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(out.mean);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  if (out.min_eigenvalue < config.eigen_floor) {
    out.repaired = true;
    const VectorXd clipped = eig.eigenvalues().cwiseMax(config.eigen_floor);
    out.mean = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    out.mean = 0.5 * (out.mean + out.mean.transpose()).eval();
    out.total = out.mean * static_cast<double>(out.num_subjects);
  }
  out.jacobian = codec.natural_jacobian(theta);
  return out;
}

// ---------------------------------------------------------------------------

ModelParams permute_states(const ModelParams& params, const std::vector<int>& perm) {
  const int k = params.num_states;
  if (static_cast<int>(perm.size()) != k) throw ValidationError("permutation has wrong length");
  ModelParams out = params;
  for (int a = 0; a < params.num_actions; ++a)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) out.rates[a](i, j) = params.rates[a](perm[i], perm[j]);
  for (int i = 0; i < k; ++i) {
    out.emission.states[i] = params.emission.states[perm[i]];
    out.init_dist[i] = params.init_dist[perm[i]];
  }
  return out;
}

AlignResult align_labels(const ModelParams& params) {
  const int k = params.num_states;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  const auto& st = params.emission.states;
  const auto less = [&](int a, int b) {
    return std::lexicographical_compare(st[a].mu.data(), st[a].mu.data() + st[a].mu.size(),
                                        st[b].mu.data(), st[b].mu.data() + st[b].mu.size());
  };
  std::stable_sort(perm.begin(), perm.end(), less);
  AlignResult out;
  for (int i = 0; i + 1 < k; ++i) {
    if (!less(perm[i], perm[i + 1])) out.tie = true;
  }
  out.permutation = perm;
  out.params = permute_states(params, perm);
  return out;
}

AlignResult align_to_reference(const ModelParams& params, const ModelParams& reference) {
  const int k = params.num_states;
  if (reference.num_states != k || reference.obs_dim != params.obs_dim) {
    throw ValidationError("reference model has different dimensions");
  }
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  const auto cost = [&](const std::vector<int>& pr) {
    double c = 0.0;
    for (int i = 0; i < k; ++i)
      c += (params.emission.states[pr[i]].mu - reference.emission.states[i].mu).squaredNorm();
    return c;
  };
  std::vector<int> best = perm;
  double best_cost = cost(perm);
  if (k <= 8) {
    while (std::next_permutation(perm.begin(), perm.end())) {
      const double c = cost(perm);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    }
  } else {
    // greedy assignment for large K
    std::vector<bool> used(k, false);
    for (int i = 0; i < k; ++i) {
      int pick = -1;
      double d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        if (used[j]) continue;
        const double dj = (params.emission.states[j].mu - reference.emission.states[i].mu).squaredNorm();
        if (dj < d) { d = dj; pick = j; }
      }
      used[pick] = true;
      best[i] = pick;
    }
  }
  AlignResult out;
  out.permutation = best;
  out.params = permute_states(params, best);
  return out;
}

ModelParams initial_guess(const Dataset& data, int num_states, int num_actions, bool ar_intercept,
                          bool tie_covariances) {
  if (data.empty()) throw ValidationError("no trajectories");
  if (num_states < 1 || num_actions < 1) throw ValidationError("K and L must be positive");
  const auto p = data.front().obs.cols();
  Eigen::Index total = 0;
  double span = 0.0;
  for (const auto& t : data) {
    if (t.obs.cols() != p) throw ValidationError("subject " + t.subject_id + ": observation width differs");
    total += t.obs.rows();
    span += t.times.back() - t.times.front();
  }
  if (total < num_states) throw ValidationError("fewer visits than latent states");
  MatrixXd x(total, p);
  Eigen::Index row = 0;
  for (const auto& t : data) {
    x.middleRows(row, t.obs.rows()) = t.obs;
    row += t.obs.rows();
  }
  const VectorXd mean = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - mean.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centered.transpose() * centered / static_cast<double>(total));
  const VectorXd axis = eig.eigenvectors().col(p - 1);
  const VectorXd score = centered * axis;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  for (Eigen::Index i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });

  ModelParams m;
  m.num_states = num_states;
  m.num_actions = num_actions;
  m.obs_dim = static_cast<int>(p);
  m.emission.ar_intercept = ar_intercept;
  m.emission.tie_covariances = tie_covariances;
  for (int k = 0; k < num_states; ++k) {
    const auto lo = total * k / num_states, hi = total * (k + 1) / num_states;
    MatrixXd g(hi - lo, p);
    for (auto i = lo; i < hi; ++i) g.row(i - lo) = x.row(order[static_cast<std::size_t>(i)]);
    StateEmission e;
    e.mu = g.colwise().mean().transpose();
    const MatrixXd gc = g.rowwise() - e.mu.transpose();
    e.sigma = gc.transpose() * gc / std::max<double>(1.0, static_cast<double>(g.rows() - 1));
    e.sigma += (1e-3 + 1e-2 * e.sigma.diagonal().mean()) * MatrixXd::Identity(p, p);
    e.psi = MatrixXd::Zero(p, p);
    if (!tie_covariances) e.sigma_init = e.sigma;
    m.emission.states.push_back(std::move(e));
  }
  const double mean_span = span / static_cast<double>(data.size());
  const double leave = mean_span > 0.0 ? 1.0 / mean_span : 1.0;
  MatrixXd q = MatrixXd::Constant(num_states, num_states, num_states > 1 ? leave / (num_states - 1) : 0.0);
  q.diagonal().setConstant(num_states > 1 ? -leave : 0.0);
  m.rates.assign(static_cast<std::size_t>(num_actions), q);
  m.init_dist = VectorXd::Constant(num_states, 1.0 / num_states);
  m.validate();
  return m;
}

}  // namespace pomdp_dtr
