#pragma once

#include <Eigen/Dense>

namespace pomdp_dtr {

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant (degree 3..13 chosen from the 1-norm, Higham 2005).
Eigen::MatrixXd expm(const Eigen::MatrixXd& a);

/// Fréchet derivative L(A, E) = d/dt exp(A + tE) at t = 0, read off the
/// upper-right block of exp([[A, E], [0, A]]).
Eigen::MatrixXd expm_frechet(const Eigen::MatrixXd& a, const Eigen::MatrixXd& e);

}  // namespace pomdp_dtr
