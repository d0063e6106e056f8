#include "pomdp_dtr/v_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pomdp_dtr/errors.hpp"
#include "pomdp_dtr/optim.hpp"
#include "pomdp_dtr/parallel.hpp"

namespace pomdp_dtr {

std::string to_string(Criterion c) { return c == Criterion::discounted ? "discounted" : "average"; }

Criterion parse_criterion(const std::string& s) {
  if (s == "discounted") return Criterion::discounted;
  if (s == "average") return Criterion::average;
  throw ValidationError("unknown criterion '" + s + "'");
}

ReferenceDistribution ReferenceDistribution::empirical_initial(const std::vector<MdpTuple>& tuples) {
  ReferenceDistribution r;
  for (const auto& t : tuples)
    if (t.j == 1) r.states.push_back(t.s);
  if (r.states.empty()) throw ValidationError("no initial tuples for the reference distribution");
  r.weights = VectorXd::Constant(static_cast<Eigen::Index>(r.states.size()),
                                 1.0 / static_cast<double>(r.states.size()));
  return r;
}

ReferenceDistribution ReferenceDistribution::point_mass(const SummaryState& s) {
  ReferenceDistribution r;
  r.states = {s};
  r.weights = VectorXd::Ones(1);
  return r;
}

void ReferenceDistribution::validate() const {
  if (states.empty() || weights.size() != static_cast<Eigen::Index>(states.size())) {
    throw ValidationError("reference distribution needs one weight per state");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-10) {
    throw ValidationError("reference weights must be nonnegative and sum to one");
  }
}

EvalDesign make_design(const std::vector<MdpTuple>& tuples, const BasisSpec& policy_basis,
                       const BasisSpec& value_basis, const ReferenceDistribution& reference,
                       int num_actions) {
  if (tuples.empty()) throw ValidationError("no tuples");
  reference.validate();
  EvalDesign d;
  d.num_actions = num_actions;
  d.num_subjects = count_subjects(tuples);
  d.policy_basis = policy_basis;
  d.value_basis = value_basis;
  const auto n = static_cast<Eigen::Index>(tuples.size());
  d.pol.resize(n, policy_basis.dim());
  d.val.resize(n, value_basis.dim());
  d.val_next.resize(n, value_basis.dim());
  d.u.resize(n);
  d.prop.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const MdpTuple& t = tuples[i];
    if (t.a < 0 || t.a >= num_actions) throw ValidationError("tuple action out of range");
    if (!(t.behavior_prob > 0.0) || t.behavior_prob > 1.0 + 1e-12) {
      throw ValidationError("tuple behavior probability must lie in (0, 1]");
    }
    d.pol.row(i) = basis_features(t.s, policy_basis).transpose();
    d.val.row(i) = basis_features(t.s, value_basis).transpose();
    d.val_next.row(i) = basis_features(t.s_next, value_basis).transpose();
    d.u[i] = t.u;
    d.prop[i] = t.behavior_prob;
    d.action.push_back(t.a);
    d.subject.push_back(t.subject);
  }
  d.ref_val = basis_matrix(reference.states, value_basis);
  flush_subnormals(d.pol);
  flush_subnormals(d.val);
  flush_subnormals(d.val_next);
  flush_subnormals(d.ref_val);
  d.ref_weights = reference.weights;
  return d;
}

VectorXd importance_weights(const EvalDesign& design, const PolicyParams& policy, double cap) {
  const MatrixXd probs = policy_probs_matrix(policy, design.pol);
  VectorXd w(design.size());
  for (int i = 0; i < design.size(); ++i) {
    w[i] = std::min(probs(i, design.action[i]) / design.prop[i], cap);
  }
  return w;
}

namespace {

struct LinearSolve {
  VectorXd x;
  double condition = 0.0;
  double residual = 0.0;
};

LinearSolve solve_checked(const MatrixXd& a, const VectorXd& b, double limit, const char* what) {
  Eigen::PartialPivLU<MatrixXd> lu(a);
  const double rc = lu.rcond();
  LinearSolve out;
  out.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!std::isfinite(out.condition) || out.condition > limit) {
    throw IllPosedError(std::string(what) + " is ill-conditioned (condition " +
                        std::to_string(out.condition) + "); try a smaller basis");
  }
  out.x = lu.solve(b);
  const double scale = std::max(b.norm(), a.norm() * out.x.norm());
  out.residual = scale > 0.0 ? (a * out.x - b).norm() / scale : 0.0;
  return out;
}

}  // namespace

DiscountedFit solve_discounted(const EvalDesign& design, const PolicyParams& policy,
                               const VConfig& config) {
  if (!(config.gamma >= 0.0 && config.gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
  const VectorXd w = importance_weights(design, policy, config.weight_cap);
  const double n = design.num_subjects;
  const MatrixXd wphi = design.val.array().colwise() * w.array();
  DiscountedFit fit;
  fit.gamma = config.gamma;
  fit.weight_cap = config.weight_cap;
  fit.c1 = wphi.transpose() * (design.val - config.gamma * design.val_next) / n;
  fit.c0 = wphi.transpose() * design.u / n;
  const LinearSolve s = solve_checked(fit.c1, fit.c0, config.condition_limit, "discounted system");
  fit.alpha = s.x;
  fit.condition = s.condition;
  fit.residual = s.residual;
  return fit;
}

DiscountedFit solve_discounted(const std::vector<MdpTuple>& tuples, const PolicyParams& policy,
                               const BasisSpec& value_basis, const VConfig& config) {
  const auto ref = ReferenceDistribution::empirical_initial(tuples);
  return solve_discounted(make_design(tuples, policy.basis, value_basis, ref, policy.num_actions),
                          policy, config);
}

double value_discounted(const DiscountedFit& fit, const ReferenceDistribution& reference,
                        const BasisSpec& value_basis) {
  reference.validate();
  VectorXd m = VectorXd::Zero(value_basis.dim());
  for (std::size_t i = 0; i < reference.states.size(); ++i) {
    m += reference.weights[static_cast<Eigen::Index>(i)] * basis_features(reference.states[i], value_basis);
  }
  return m.dot(fit.alpha);
}

AverageFit solve_average(const EvalDesign& design, const PolicyParams& policy,
                         const VConfig& config) {
  if (design.value_basis.intercept) {
    throw ValidationError("average criterion requires a value basis without intercept");
  }
  const VectorXd w = importance_weights(design, policy, config.weight_cap);
  const double n = design.num_subjects;
  const auto dv = design.val.cols();
  const auto rows = design.size();
  MatrixXd psi1(rows, dv + 1);
  psi1.col(0).setOnes();
  psi1.rightCols(dv) = design.val;
  MatrixXd rhs(rows, dv + 1);
  rhs.col(0).setOnes();
  rhs.rightCols(dv) = design.val - design.val_next;
  const MatrixXd wpsi = psi1.array().colwise() * w.array();
  AverageFit fit;
  fit.weight_cap = config.weight_cap;
  fit.d1 = wpsi.transpose() * rhs / n;
  fit.d0 = wpsi.transpose() * design.u / n;
  const LinearSolve s = solve_checked(fit.d1, fit.d0, config.condition_limit, "average system");
  fit.value = s.x[0];
  fit.beta = s.x.tail(dv);
  fit.condition = s.condition;
  fit.residual = s.residual;
  return fit;
}

AverageFit solve_average(const std::vector<MdpTuple>& tuples, const PolicyParams& policy,
                         const BasisSpec& value_basis, const VConfig& config) {
  const auto ref = ReferenceDistribution::empirical_initial(tuples);
  return solve_average(make_design(tuples, policy.basis, value_basis, ref, policy.num_actions),
                       policy, config);
}

double policy_value(const EvalDesign& design, const PolicyParams& policy, Criterion criterion,
                    const VConfig& config) {
  if (criterion == Criterion::discounted) {
    return design.ref_mean().dot(solve_discounted(design, policy, config).alpha);
  }
  return solve_average(design, policy, config).value;
}

double min_softmax_probability(const EvalDesign& design, const PolicyParams& policy) {
  PolicyParams raw = policy;
  raw.kind = PolicyKind::stochastic;
  raw.floor = 0.0;
  return policy_probs_matrix(raw, design.pol).minCoeff();
}

// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  VectorXd x;
  double objective = -std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool failed = true;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  return std::lexicographical_compare(a.x.data(), a.x.data() + a.x.size(), b.x.data(),
                                      b.x.data() + b.x.size());
}

void polish(Candidate& c, const std::function<double(const VectorXd&)>& obj) {
  for (int pass = 0; pass < 3; ++pass) {
    bool improved = false;
    for (Eigen::Index i = 0; i < c.x.size(); ++i) {
      for (double step : {0.5, 0.25, 0.125, 0.0625}) {
        for (double sgn : {1.0, -1.0}) {
          VectorXd trial = c.x;
          trial[i] += sgn * step;
          const double v = obj(trial);
          ++c.evaluations;
          if (std::isfinite(v) && v > c.objective + 1e-12) {
            c.x = trial;
            c.objective = v;
            improved = true;
          }
        }
      }
    }
    if (!improved) break;
  }
}

}  // namespace

SearchResult optimize_policy(const EvalDesign& design, const PolicyParams& shape,
                             Criterion criterion, const VConfig& config,
                             const SearchConfig& search) {
  shape.validate();
  const bool stochastic = shape.kind == PolicyKind::stochastic;
  SearchResult result;
  result.penalty = stochastic ? search.penalty : 0.0;
  const int dim = shape.free_size();
  const int restarts = std::max(1, search.restarts);
  VectorXd warm = shape.free();

  for (int round = 0;; ++round) {
    const double lambda = result.penalty;
    const auto objective = [&](const VectorXd& x) {
      PolicyParams p = shape;
      p.set_free(x);
      try {
        const double v = policy_value(design, p, criterion, config);
        return std::isfinite(v) ? v - lambda * x.squaredNorm()
                                : -std::numeric_limits<double>::infinity();
      } catch (const NumericalError&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    std::vector<Candidate> cands(restarts);
    parallel_for(cands.size(), search.threads, [&](std::size_t r) {
      std::mt19937_64 rng(search.seed * 1000003ULL + r * 7919ULL + static_cast<std::uint64_t>(round));
      std::uniform_real_distribution<double> unif(-search.box, search.box);
      VectorXd x0 = warm;
      if (r > 0)
        for (int i = 0; i < dim; ++i) x0[i] = unif(rng);
      NelderMeadOptions nm;
      nm.max_evaluations = search.max_evaluations;
      nm.initial_step = search.initial_step;
      const NelderMeadResult res =
          minimize_nelder_mead([&](const VectorXd& x) { return -objective(x); }, x0, nm);
      Candidate& c = cands[r];
      c.x = res.x;
      c.objective = -res.value;
      c.evaluations = res.evaluations;
      c.failed = !std::isfinite(c.objective);
    });
    Candidate best;
    best.x = warm;
    for (auto& c : cands) {
      result.evaluations += c.evaluations;
      if (c.failed) {
        ++result.failed_restarts;
        continue;
      }
      if (best.failed || better(c, best)) best = c;
    }
    result.restarts += restarts;
    if (best.failed) {
      throw NumericalError("policy search failed: objective non-finite at every restart (" +
                           std::to_string(restarts) + " restarts, " +
                           std::to_string(result.evaluations) + " evaluations)");
    }
    if (search.polish) {
      best.evaluations = 0;
      polish(best, objective);
      result.evaluations += best.evaluations;
    }
    result.policy = shape;
    result.policy.set_free(best.x);
    result.objective = best.objective;
    result.value = policy_value(design, result.policy, criterion, config);
    result.min_probability = policy_probs_matrix(result.policy, design.pol).minCoeff();
    result.raw_min_probability = min_softmax_probability(design, result.policy);
    result.tuning_rounds = round;
    if (!stochastic || result.min_probability >= search.min_probability ||
        round >= search.max_tuning_rounds) {
      break;
    }
    result.penalty *= 10.0;
    warm = best.x;
  }
  return result;
}

}  // namespace pomdp_dtr
