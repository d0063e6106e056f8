#include "pomdp_dtr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace pomdp_dtr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

BfgsResult minimize_bfgs(const GradientObjective& fg, VectorXd x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult out;
  out.x = std::move(x0);
  out.gradient = VectorXd::Zero(n);
  out.value = fg(out.x, out.gradient);
  out.evaluations = 1;
  if (!std::isfinite(out.value)) return out;

  MatrixXd h_inv = MatrixXd::Identity(n, n);
  bool scaled = false;
  int stall = 0;
  VectorXd trial_grad(n);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (out.gradient.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) {
      out.converged = true;
      break;
    }
    VectorXd dir = -h_inv * out.gradient;
    double slope = out.gradient.dot(dir);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      dir = -out.gradient;
      slope = -out.gradient.squaredNorm();
    }
    double step = 1.0;
    if (!scaled) step = std::min(1.0, 1.0 / std::max(1e-12, out.gradient.lpNorm<Eigen::Infinity>()));

    VectorXd trial;
    double trial_value = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = out.x + step * dir;
      trial_value = fg(trial, trial_grad);
      ++out.evaluations;
      if (std::isfinite(trial_value) && trial_value <= out.value + 1e-4 * step * slope &&
          trial_grad.allFinite()) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    out.iterations = iter + 1;
    if (!accepted) break;

    const VectorXd s = trial - out.x;
    const VectorXd y = trial_grad - out.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h_inv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const VectorXd hy = h_inv * y;
      // H+ = (I - rho s y')H(I - rho y s') + rho s s'
      h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
               rho * (hy * s.transpose() + s * hy.transpose());
    }

    const double change = out.value - trial_value;
    out.x = std::move(trial);
    out.value = trial_value;
    out.gradient = trial_grad;
    if (change <= options.function_tolerance * (1.0 + std::abs(out.value))) {
      if (++stall >= options.stall_window) {
        out.converged = true;
        break;
      }
    } else {
      stall = 0;
    }
  }
  if (out.gradient.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) out.converged = true;
  return out;
}

NelderMeadResult minimize_nelder_mead(const Objective& f, VectorXd x0,
                                      const NelderMeadOptions& options) {
  const auto n = static_cast<int>(x0.size());
  const double dim = std::max(1, n);
  // Gao & Han adaptive coefficients
  const double reflect = 1.0;
  const double expand = 1.0 + 2.0 / dim;
  const double contract = 0.75 - 1.0 / (2.0 * dim);
  const double shrink = 1.0 - 1.0 / dim;

  NelderMeadResult out;
  auto eval = [&](const VectorXd& x) {
    ++out.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<VectorXd> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  values[0] = eval(x0);
  for (int i = 0; i < n; ++i) {
    simplex[i + 1][i] += options.initial_step;
    values[i + 1] = eval(simplex[i + 1]);
  }
  std::vector<int> order(n + 1);

  while (out.evaluations < options.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return values[a] < values[b]; });
    const int best = order.front();
    const int worst = order.back();
    const int second = order[n > 0 ? n - 1 : 0];

    double spread = 0.0;
    for (int i = 0; i <= n; ++i) {
      spread = std::max(spread, (simplex[i] - simplex[best]).lpNorm<Eigen::Infinity>());
    }
    const bool flat = std::isfinite(values[worst]) &&
                      std::abs(values[worst] - values[best]) <=
                          options.value_tolerance * (1.0 + std::abs(values[best]));
    if (n == 0 || (flat && spread <= options.point_tolerance)) {
      out.converged = true;
      break;
    }

    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= dim;

    const VectorXd xr = centroid + reflect * (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr < values[best]) {
      const VectorXd xe = centroid + expand * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const VectorXd xc = outside ? VectorXd(centroid + contract * (xr - centroid))
                                : VectorXd(centroid - contract * (centroid - simplex[worst]));
    const double fc = eval(xc);
    if (fc < (outside ? fr : values[worst])) {
      simplex[worst] = xc;
      values[worst] = fc;
      continue;
    }
    for (int i = 0; i <= n; ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + shrink * (simplex[i] - simplex[best]);
      values[i] = eval(simplex[i]);
    }
  }

  const auto it = std::min_element(values.begin(), values.end());
  out.x = simplex[static_cast<std::size_t>(it - values.begin())];
  out.value = *it;
  return out;
}

}  // namespace pomdp_dtr
