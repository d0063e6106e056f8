#include "pomdp_dtr/regime.hpp"

#include <algorithm>
#include <cmath>

#include "pomdp_dtr/errors.hpp"

namespace pomdp_dtr {

int BasisSpec::linear_terms() const {
  const int nb = inputs == BasisInputs::x ? 0 : std::max(0, num_states - 1);
  const int nx = inputs == BasisInputs::belief ? 0 : obs_dim;
  return nb + nx;
}

int BasisSpec::dim() const {
  const int z = linear_terms();
  const int quad = kind == BasisKind::quadratic ? z * (z + 1) / 2 : 0;
  return (intercept ? 1 : 0) + z + quad;
}

std::vector<std::string> BasisSpec::names() const {
  std::vector<std::string> lin;
  if (inputs != BasisInputs::x)
    for (int k = 0; k + 1 < num_states; ++k) lin.push_back("b" + std::to_string(k + 1));
  if (inputs != BasisInputs::belief)
    for (int i = 0; i < obs_dim; ++i) lin.push_back("x" + std::to_string(i + 1));
  std::vector<std::string> out;
  if (intercept) out.push_back("1");
  out.insert(out.end(), lin.begin(), lin.end());
  if (kind == BasisKind::quadratic)
    for (std::size_t i = 0; i < lin.size(); ++i)
      for (std::size_t k = i; k < lin.size(); ++k) out.push_back(lin[i] + "*" + lin[k]);
  return out;
}

VectorXd basis_features(const SummaryState& s, const BasisSpec& spec) {
  const int z = spec.linear_terms();
  VectorXd lin(z);
  int idx = 0;
  if (spec.inputs != BasisInputs::x) {
    if (s.belief.size() != spec.num_states) throw ValidationError("belief has wrong length for basis");
    for (int k = 0; k + 1 < spec.num_states; ++k) lin[idx++] = s.belief[k];
  }
  if (spec.inputs != BasisInputs::belief) {
    if (s.x.size() != spec.obs_dim) throw ValidationError("observation has wrong length for basis");
    for (int i = 0; i < spec.obs_dim; ++i) lin[idx++] = s.x[i];
  }
  VectorXd out(spec.dim());
  idx = 0;
  if (spec.intercept) out[idx++] = 1.0;
  out.segment(idx, z) = lin;
  idx += z;
  if (spec.kind == BasisKind::quadratic)
    for (int i = 0; i < z; ++i)
      for (int k = i; k < z; ++k) out[idx++] = lin[i] * lin[k];
  return out;
}

MatrixXd basis_matrix(const std::vector<SummaryState>& states, const BasisSpec& spec) {
  MatrixXd out(static_cast<Eigen::Index>(states.size()), spec.dim());
  for (std::size_t i = 0; i < states.size(); ++i) out.row(i) = basis_features(states[i], spec).transpose();
  return out;
}

PolicyParams PolicyParams::zeros(int num_actions, const BasisSpec& basis, PolicyKind kind,
                                 double floor) {
  PolicyParams p;
  p.num_actions = num_actions;
  p.basis = basis;
  p.kind = kind;
  p.floor = floor;
  p.xi = MatrixXd::Zero(num_actions, basis.dim());
  return p;
}

VectorXd PolicyParams::free() const {
  const int d = basis.dim();
  VectorXd v(free_size());
  for (int a = 0; a + 1 < num_actions; ++a) v.segment(a * d, d) = xi.row(a).transpose();
  return v;
}

void PolicyParams::set_free(const VectorXd& v) {
  const int d = basis.dim();
  if (v.size() != free_size()) throw ValidationError("policy parameter vector has wrong length");
  xi.setZero(num_actions, d);
  for (int a = 0; a + 1 < num_actions; ++a) xi.row(a) = v.segment(a * d, d).transpose();
}

void PolicyParams::validate() const {
  if (num_actions < 2) throw ValidationError("a policy needs at least two actions");
  if (xi.rows() != num_actions || xi.cols() != basis.dim()) {
    throw ValidationError("policy coefficient matrix must be L x d");
  }
  if (!xi.row(num_actions - 1).isZero(0.0)) throw ValidationError("last policy row must be zero");
  if (!(floor >= 0.0) || floor >= 1.0 / num_actions) {
    throw ValidationError("policy floor must lie in [0, 1/L)");
  }
}

VectorXd floor_renormalize(const VectorXd& probs, double floor) {
  const auto n = probs.size();
  if (floor <= 0.0) return probs;
  if (floor * static_cast<double>(n) > 1.0) throw ValidationError("floor too large for action count");
  VectorXd out = probs;
  std::vector<bool> fixed(n, false);
  for (Eigen::Index iter = 0; iter <= n; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!fixed[i] && out[i] < floor) {
        fixed[i] = true;
        changed = true;
      }
    }
    double free_raw = 0.0;
    int nfixed = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fixed[i]) ++nfixed;
      else free_raw += probs[i];
    }
    const double free_mass = 1.0 - floor * nfixed;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fixed[i]) out[i] = floor;
      else out[i] = free_raw > 0.0 ? probs[i] * free_mass / free_raw : free_mass / (n - nfixed);
    }
    if (!changed) break;
  }
  return out;
}

namespace {

void probs_from_scores(const PolicyParams& policy, const Eigen::Ref<const VectorXd>& scores,
                       Eigen::Ref<VectorXd> out) {
  const auto l = scores.size();
  if (policy.kind == PolicyKind::deterministic) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < l; ++a)
      if (scores[a] > scores[best]) best = a;
    out.setZero();
    out[best] = 1.0;
    return;
  }
  const double top = scores.maxCoeff();
  double total = 0.0;
  double smallest = 1.0;
  for (Eigen::Index a = 0; a < l; ++a) {
    out[a] = std::exp(scores[a] - top);
    total += out[a];
  }
  for (Eigen::Index a = 0; a < l; ++a) {
    out[a] /= total;
    smallest = std::min(smallest, out[a]);
  }
  if (policy.floor > 0.0 && smallest < policy.floor) out = floor_renormalize(out, policy.floor);
}

}  // namespace

VectorXd policy_probs_features(const PolicyParams& policy, const VectorXd& phi) {
  if (phi.size() != policy.xi.cols()) throw ValidationError("feature length does not match policy");
  const VectorXd scores = policy.xi * phi;
  VectorXd out(policy.num_actions);
  probs_from_scores(policy, scores, out);
  return out;
}

VectorXd policy_probs(const PolicyParams& policy, const SummaryState& s) {
  return policy_probs_features(policy, basis_features(s, policy.basis));
}

MatrixXd policy_probs_matrix(const PolicyParams& policy, const MatrixXd& features) {
  if (features.cols() != policy.xi.cols()) throw ValidationError("feature width does not match policy");
  const MatrixXd scores = features * policy.xi.transpose();
  MatrixXd out(features.rows(), policy.num_actions);
  VectorXd row(policy.num_actions);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    probs_from_scores(policy, scores.row(i).transpose(), row);
    out.row(i) = row.transpose();
  }
  return out;
}

std::string to_string(BasisKind k) { return k == BasisKind::linear ? "linear" : "quadratic"; }

std::string to_string(BasisInputs k) {
  switch (k) {
    case BasisInputs::both: return "both";
    case BasisInputs::belief: return "belief";
    case BasisInputs::x: return "x";
  }
  return "both";
}

std::string to_string(PolicyKind k) {
  return k == PolicyKind::stochastic ? "stochastic" : "deterministic";
}

BasisKind parse_basis_kind(const std::string& s) {
  if (s == "linear") return BasisKind::linear;
  if (s == "quadratic") return BasisKind::quadratic;
  throw ValidationError("unknown basis kind '" + s + "'");
}

BasisInputs parse_basis_inputs(const std::string& s) {
  if (s == "both") return BasisInputs::both;
  if (s == "belief") return BasisInputs::belief;
  if (s == "x") return BasisInputs::x;
  throw ValidationError("unknown basis inputs '" + s + "'");
}

PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "stochastic") return PolicyKind::stochastic;
  if (s == "deterministic") return PolicyKind::deterministic;
  throw ValidationError("unknown policy kind '" + s + "'");
}

}  // namespace pomdp_dtr
