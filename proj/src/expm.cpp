#include "pomdp_dtr/expm.hpp"

#include <array>
#include <cmath>

namespace pomdp_dtr {
namespace {

using Eigen::MatrixXd;

constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};

// theta_m for m = 3, 5, 7, 9, 13
constexpr std::array<double, 5> kTheta = {1.495585217958292e-2, 2.539398330063230e-1,
                                          9.504178996162932e-1, 2.097847961257068e0,
                                          5.371920351148152e0};

MatrixXd solve_pade(const MatrixXd& u, const MatrixXd& v) {
  // r = (V - U)^{-1} (V + U)
  return (v - u).partialPivLu().solve(v + u);
}

MatrixXd pade_low(const MatrixXd& a, int m) {
  static const double c3[] = {120, 60, 12, 1};
  static const double c5[] = {30240, 15120, 3360, 420, 30, 1};
  static const double c7[] = {17297280, 8648640, 1995840, 277200, 25200, 1512, 56, 1};
  static const double c9[] = {17643225600, 8821612800, 2075673600, 302702400, 30270240,
                              2162160,     110880,     3960,       90,        1};
  const double* c = m == 3 ? c3 : m == 5 ? c5 : m == 7 ? c7 : c9;
  const Eigen::Index n = a.rows();
  const MatrixXd ident = MatrixXd::Identity(n, n);
  const MatrixXd a2 = a * a;
  MatrixXd pow = ident;
  MatrixXd u_inner = MatrixXd::Zero(n, n);
  MatrixXd v = MatrixXd::Zero(n, n);
  for (int k = 0; k <= m; k += 2) {
    // pow = A^{k}
    u_inner += c[k + 1] * pow;
    v += c[k] * pow;
    pow = pow * a2;
  }
  return solve_pade(a * u_inner, v);
}

MatrixXd pade13(const MatrixXd& a) {
  const Eigen::Index n = a.rows();
  const auto& b = kPade13;
  const MatrixXd ident = MatrixXd::Identity(n, n);
  const MatrixXd a2 = a * a;
  const MatrixXd a4 = a2 * a2;
  const MatrixXd a6 = a4 * a2;
  const MatrixXd u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 +
                          b[5] * a4 + b[3] * a2 + b[1] * ident);
  const MatrixXd v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                     b[2] * a2 + b[0] * ident;
  return solve_pade(u, v);
}

}  // namespace

MatrixXd expm(const MatrixXd& a) {
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  if (norm == 0.0) return MatrixXd::Identity(a.rows(), a.cols());
  constexpr std::array<int, 4> kLow = {3, 5, 7, 9};
  for (std::size_t i = 0; i < kLow.size(); ++i) {
    if (norm <= kTheta[i]) return pade_low(a, kLow[i]);
  }
  int squarings = 0;
  if (norm > kTheta[4]) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta[4])));
  }
  MatrixXd r = pade13(a / std::ldexp(1.0, squarings));
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

MatrixXd expm_frechet(const MatrixXd& a, const MatrixXd& e) {
  const Eigen::Index n = a.rows();
  // L is linear in E; normalize so E does not inflate the squaring count.
  const double scale = e.cwiseAbs().maxCoeff();
  if (scale == 0.0) return MatrixXd::Zero(n, n);
  MatrixXd block = MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = a;
  block.bottomRightCorner(n, n) = a;
  block.topRightCorner(n, n) = e / scale;
  return scale * expm(block).topRightCorner(n, n);
}

}  // namespace pomdp_dtr
