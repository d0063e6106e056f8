#include "pomdp_dtr/belief_transform.hpp"

#include <cmath>
#include <set>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/parallel.hpp"

namespace pomdp_dtr {

double evaluate_utility(const UtilitySpec& spec, const SummaryState& s, int a,
                        const SummaryState& s_next, int num_actions) {
  double u = 0.0;
  switch (spec.kind) {
    case UtilityKind::neg_abs:
      u = spec.constant;
      for (int i : spec.indices) {
        if (i < 0 || i >= s_next.x.size()) throw ValidationError("utility index out of range");
        u -= std::abs(s_next.x[i]);
      }
      break;
    case UtilityKind::belief_match:
      if (static_cast<int>(spec.group.size()) != s.belief.size()) {
        throw ValidationError("utility group map must have one entry per latent state");
      }
      for (Eigen::Index m = 0; m < s.belief.size(); ++m) {
        u += s.belief[m] * (spec.group[m] == a ? 1.0 : -1.0);
      }
      break;
    case UtilityKind::custom_linear: {
      const auto k = s.belief.size(), p = s.x.size();
      const Eigen::Index width = 1 + k + 2 * p + num_actions;
      if (spec.coefficients.size() != width) {
        throw ValidationError("custom utility needs " + std::to_string(width) + " coefficients");
      }
      VectorXd z(width);
      z << 1.0, s.belief, s.x, s_next.x, VectorXd::Zero(num_actions);
      z[1 + k + 2 * p + a] = 1.0;
      u = spec.coefficients.dot(z);
      break;
    }
  }
  return u;
}

std::vector<MdpTuple> tuples_from_beliefs(const Dataset& data,
                                          const std::vector<std::vector<VectorXd>>& beliefs,
                                          const UtilitySpec& uspec, int num_actions,
                                          const PropensityFn& known) {
  std::vector<MdpTuple> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Trajectory& t = data[i];
    for (int j = 0; j + 1 < t.length(); ++j) {
      MdpTuple tp;
      tp.subject_id = t.subject_id;
      tp.subject = static_cast<int>(i);
      tp.j = j + 1;
      tp.s = {beliefs[i][j], t.x(j)};
      tp.s_next = {beliefs[i][j + 1], t.x(j + 1)};
      tp.a = t.actions[j];
      tp.u = evaluate_utility(uspec, tp.s, tp.a, tp.s_next, num_actions);
      if (!std::isfinite(tp.u)) {
        throw NumericalError("non-finite utility for subject " + t.subject_id + ", visit " +
                             std::to_string(j + 1));
      }
      if (known) tp.behavior_prob = known(tp.s)[tp.a];
      out.push_back(std::move(tp));
    }
  }
  return out;
}

std::vector<MdpTuple> build_mdp_dataset(const Dataset& data, const ModelParams& params,
                                        const UtilitySpec& uspec, const PropensityFn& known,
                                        int threads) {
  std::vector<std::vector<VectorXd>> beliefs(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    if (data[i].length() < 2) {
      throw ValidationError("subject " + data[i].subject_id + ": fewer than two visits");
    }
    beliefs[i] = forward_filter(data[i], params).beliefs;
  });
  return tuples_from_beliefs(data, beliefs, uspec, params.num_actions, known);
}

// ---------------------------------------------------------------------------

namespace {

struct LogitFit {
  MatrixXd coef;
  MatrixXd cov;
  bool converged = false;
  double min_prob = 1.0;
};

MatrixXd softmax_rows(const MatrixXd& scores) {
  MatrixXd p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    p.row(i) = (scores.row(i).array() - top).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

LogitFit fit_logit(const MatrixXd& x, const std::vector<int>& y, int l, double ridge,
                   bool intercept, const PropensityConfig& cfg) {
  const auto n = x.rows();
  const auto d = x.cols();
  const auto q = (l - 1) * d;
  VectorXd beta = VectorXd::Zero(q);
  VectorXd pen = VectorXd::Constant(q, ridge);
  if (intercept)
    for (int a = 0; a + 1 < l; ++a) pen[a * d] = 0.0;
  const auto coef_of = [&](const VectorXd& b) {
    MatrixXd c = MatrixXd::Zero(l, d);
    for (int a = 0; a + 1 < l; ++a) c.row(a) = b.segment(a * d, d).transpose();
    return c;
  };
  const auto objective = [&](const VectorXd& b) {
    const MatrixXd p = softmax_rows(x * coef_of(b).transpose());
    double f = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) f -= std::log(std::max(p(i, y[i]), 1e-300));
    return f / static_cast<double>(n) + 0.5 * (pen.array() * b.array().square()).sum();
  };
  LogitFit fit;
  MatrixXd hess(q, q);
  double f = objective(beta);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const MatrixXd p = softmax_rows(x * coef_of(beta).transpose());
    VectorXd grad = pen.cwiseProduct(beta);
    hess = pen.asDiagonal();
    for (int a = 0; a + 1 < l; ++a) {
      VectorXd r(n);
      for (Eigen::Index i = 0; i < n; ++i) r[i] = p(i, a) - (y[i] == a ? 1.0 : 0.0);
      grad.segment(a * d, d) += x.transpose() * r / static_cast<double>(n);
      for (int b = 0; b + 1 < l; ++b) {
        VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = p(i, a) * ((a == b ? 1.0 : 0.0) - p(i, b));
        hess.block(a * d, b * d, d, d) +=
            x.transpose() * w.asDiagonal() * x / static_cast<double>(n);
      }
    }
    const VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    VectorXd next = beta - step;
    double fn = objective(next);
    while (!(fn <= f) && t > 1e-8) {
      t *= 0.5;
      next = beta - t * step;
      fn = objective(next);
    }
    beta = next;
    const double decrease = f - fn;
    f = fn;
    if (grad.lpNorm<Eigen::Infinity>() < cfg.tolerance || (decrease >= 0.0 && decrease < 1e-14)) {
      fit.converged = true;
      break;
    }
  }
  fit.coef = coef_of(beta);
  fit.cov = hess.ldlt().solve(MatrixXd::Identity(q, q)) / static_cast<double>(n);
  const MatrixXd p = softmax_rows(x * fit.coef.transpose());
  fit.min_prob = p.minCoeff();
  return fit;
}

}  // namespace

VectorXd PropensityModel::probs(const SummaryState& s) const {
  const VectorXd scores = coef * basis_features(s, basis);
  const double top = scores.maxCoeff();
  VectorXd p = (scores.array() - top).exp();
  p /= p.sum();
  return floor_renormalize(p, floor);
}

PropensityModel estimate_propensity(const std::vector<MdpTuple>& tuples, const BasisSpec& basis,
                                    int num_actions, const PropensityConfig& config) {
  if (tuples.empty()) throw ValidationError("no tuples for propensity estimation");
  std::set<int> seen;
  std::vector<int> y;
  std::vector<SummaryState> states;
  for (const auto& t : tuples) {
    if (t.a < 0 || t.a >= num_actions) throw ValidationError("action out of range");
    seen.insert(t.a);
    y.push_back(t.a);
    states.push_back(t.s);
  }
  if (static_cast<int>(seen.size()) < num_actions) {
    throw ValidationError("propensity model needs every action to be observed");
  }
  const MatrixXd x = basis_matrix(states, basis);
  PropensityModel model;
  model.num_actions = num_actions;
  model.basis = basis;
  model.floor = config.floor;
  double ridge = config.ridge;
  LogitFit fit;
  for (int attempt = 0;; ++attempt) {
    fit = fit_logit(x, y, num_actions, ridge, basis.intercept, config);
    const bool separated = fit.min_prob < 1e-6 && fit.coef.norm() > 1e2;
    if (!separated) break;
    model.separation_warning = true;
    if (attempt >= config.max_refits) break;
    ridge *= 10.0;
    ++model.refits;
  }
  model.ridge = ridge;
  model.coef = fit.coef;
  model.converged = fit.converged;
  const int d = basis.dim();
  model.se = MatrixXd::Zero(num_actions, d);
  for (int a = 0; a + 1 < num_actions; ++a)
    for (int c = 0; c < d; ++c) model.se(a, c) = std::sqrt(std::max(0.0, fit.cov(a * d + c, a * d + c)));
  return model;
}

void attach_propensity(std::vector<MdpTuple>& tuples, const PropensityModel& model) {
  for (auto& t : tuples) t.behavior_prob = model.probs(t.s)[t.a];
}

int count_subjects(const std::vector<MdpTuple>& tuples) {
  std::set<int> ids;
  for (const auto& t : tuples) ids.insert(t.subject);
  return static_cast<int>(ids.size());
}

std::string to_string(UtilityKind k) {
  switch (k) {
    case UtilityKind::neg_abs: return "neg_abs";
    case UtilityKind::belief_match: return "belief_match";
    case UtilityKind::custom_linear: return "custom_linear";
  }
  return "neg_abs";
}

UtilityKind parse_utility_kind(const std::string& s) {
  if (s == "neg_abs") return UtilityKind::neg_abs;
  if (s == "belief_match") return UtilityKind::belief_match;
  if (s == "custom_linear") return UtilityKind::custom_linear;
  throw ValidationError("unknown utility kind '" + s + "'");
}

}  // namespace pomdp_dtr
