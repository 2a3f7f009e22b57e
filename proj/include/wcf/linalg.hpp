#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wcf/errors.hpp"

namespace wcf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Relative symmetry test: ||M - M^T||_max <= tol * max(1, ||M||_max).
inline bool is_symmetric(const Mat& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Ascending eigenvalues of a symmetric matrix.
inline Vec sym_eigenvalues(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Symmetric PSD square root; eigenvalues below tol * max are clamped to zero.
inline Mat psd_sqrt(const Mat& m, double tol = 1e-12) {
  if (m.size() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m));
  Vec ev = es.eigenvalues();
  const double top = std::max(0.0, ev.maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    ev(i) = ev(i) <= tol * top ? 0.0 : std::sqrt(ev(i));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Kronecker product I_2 (x) M: two diagonal copies of M.
inline Mat block_diag2(const Mat& m) {
  Mat out = Mat::Zero(2 * m.rows(), 2 * m.cols());
  out.topLeftCorner(m.rows(), m.cols()) = m;
  out.bottomRightCorner(m.rows(), m.cols()) = m;
  return out;
}

inline double log_sum_exp(std::span<const double> xs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : xs) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

inline constexpr double kQuadratureAbsTolerance = 1e-14;

/// Adaptive Gauss-Kronrod (15-point) integral of a smooth integrand.  Refinement stops once the
/// error estimate is below rel_tol * L1 or kQuadratureAbsTolerance, whichever is larger; without
/// the absolute floor, integrals over short intervals chase roundoff down to the depth limit.
template <class F>
double integrate(F&& f, double lo, double hi, double rel_tol = 1e-12) {
  if (hi == lo) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  double err = 0, l1 = 0;
  const double coarse = gauss_kronrod<double, 15>::integrate(f, lo, hi, 0, 0.0, &err, &l1);
  if (err <= std::max(rel_tol * l1, kQuadratureAbsTolerance)) return coarse;
  const double tol = l1 > 0 ? std::max(rel_tol, kQuadratureAbsTolerance / l1) : rel_tol;
  return gauss_kronrod<double, 15>::integrate(f, lo, hi, 15, tol);
}

}  // namespace wcf
