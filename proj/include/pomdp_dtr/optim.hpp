#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace pomdp_dtr {

/// Objective returning f(x) and writing the gradient into the second argument.
using GradientObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using Objective = std::function<double(const Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;   // on the infinity norm
  double function_tolerance = 1e-12;  // relative change, checked over a stall window
  int stall_window = 8;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Quasi-Newton minimization with an Armijo backtracking line search.
/// Non-finite trial values are treated as failed steps.
BfgsResult minimize_bfgs(const GradientObjective& fg, Eigen::VectorXd x0,
                         const BfgsOptions& options = {});

struct NelderMeadOptions {
  int max_evaluations = 2000;
  double initial_step = 0.5;
  double value_tolerance = 1e-9;
  double point_tolerance = 1e-7;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex search (adaptive coefficients for larger
/// dimensions). Non-finite objective values rank as +infinity.
NelderMeadResult minimize_nelder_mead(const Objective& f, Eigen::VectorXd x0,
                                      const NelderMeadOptions& options = {});

/// Replaces subnormal entries by zero. Subnormal arithmetic is slow on x86.
template <typename Derived>
void flush_subnormals(Eigen::DenseBase<Derived>& m) {
  m = m.unaryExpr([](double v) { return std::abs(v) < std::numeric_limits<double>::min() ? 0.0 : v; });
}

}  // namespace pomdp_dtr
