#pragma once

// Linear SDE signal  d theta = (alpha + beta theta) dt + sigma dB  and its exact
// Gaussian discretization over a fixed horizon.

#include <unsupported/Eigen/MatrixFunctions>

#include <random>

#include "wcf/linalg.hpp"

namespace wcf {

struct ModelParams {
  Vec alpha;        // drift offset
  Mat beta;         // drift slope, p x p
  double sigma = 0; // diffusion coefficient
  double delta = 1; // inter-observation time

  int dim() const { return static_cast<int>(alpha.size()); }

  void validate() const {
    if (alpha.size() == 0) throw InvalidParameter("model: dimension must be positive");
    if (beta.rows() != alpha.size() || beta.cols() != alpha.size())
      throw DimensionMismatch("model: beta must be p x p with p = length(alpha)");
    if (!alpha.allFinite() || !beta.allFinite() || !std::isfinite(sigma) || !std::isfinite(delta))
      throw InvalidParameter("model: non-finite parameter");
    if (sigma < 0) throw InvalidParameter("model: sigma must be >= 0");
    if (!(delta > 0)) throw InvalidParameter("model: delta must be > 0");
  }
};

inline ModelParams make_model(Vec alpha, Mat beta, double sigma, double delta) {
  ModelParams m{std::move(alpha), std::move(beta), sigma, delta};
  m.validate();
  return m;
}

/// One-step law  theta' ~ N(a + B theta, noise_cov).  noise_factor L satisfies L L^T = noise_cov.
struct DiscreteTransition {
  Vec a;
  Mat B;
  Mat noise_cov;
  Mat noise_factor;

  int dim() const { return static_cast<int>(a.size()); }
};

/// Factor a symmetric PSD matrix as L L^T through a pivoted LDL^T.
/// Tiny negative pivots (rounding) are clamped; genuinely indefinite input throws.
inline Mat factor_psd(const Mat& cov) {
  const auto p = cov.rows();
  if (cov.cols() != p) throw DimensionMismatch("factor_psd: matrix not square");
  if (p == 0 || cov.isZero(0.0)) return Mat::Zero(p, p);
  Eigen::LDLT<Mat> ldlt(symmetrize(cov));
  if (ldlt.info() != Eigen::Success) throw NumericError("factor_psd: LDLT failed");
  Vec d = ldlt.vectorD();
  const double top = std::max(d.cwiseAbs().maxCoeff(), cov.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < p; ++i) {
    if (d(i) < -1e-12 * top) throw NumericError("factor_psd: matrix is indefinite");
    d(i) = std::sqrt(std::max(d(i), 0.0));
  }
  Mat l = ldlt.matrixL();
  Mat f = l * d.asDiagonal();
  return ldlt.transpositionsP().transpose() * f;
}

inline DiscreteTransition make_transition(Vec a, Mat b, Mat noise_cov) {
  detail::require_dim(b.rows(), a.size(), "transition B rows");
  detail::require_dim(b.cols(), a.size(), "transition B cols");
  detail::require_dim(noise_cov.rows(), a.size(), "transition noise rows");
  detail::require_dim(noise_cov.cols(), a.size(), "transition noise cols");
  DiscreteTransition t{std::move(a), std::move(b), std::move(noise_cov), {}};
  t.noise_factor = factor_psd(t.noise_cov);
  return t;
}

/// Zero-horizon transition (identity map, no noise).
inline DiscreteTransition identity_transition(int p) {
  return DiscreteTransition{Vec::Zero(p), Mat::Identity(p, p), Mat::Zero(p, p), Mat::Zero(p, p)};
}

/// Exact moments of the SDE over `horizon`: B = e^{h beta}, a = int_0^h e^{s beta} alpha ds,
/// noise_cov = sigma^2 int_0^h e^{s beta} e^{s beta^T} ds.  The two integrals come from
/// exponentials of augmented block matrices (Van Loan).
inline DiscreteTransition discretize(const ModelParams& params, double horizon) {
  params.validate();
  if (!(horizon > 0) || !std::isfinite(horizon))
    throw InvalidParameter("discretize: horizon must be positive and finite");
  const int p = params.dim();

  Mat b = (params.beta * horizon).exp();

  Mat drift = Mat::Zero(p + 1, p + 1);
  drift.topLeftCorner(p, p) = params.beta * horizon;
  drift.topRightCorner(p, 1) = params.alpha * horizon;
  Vec a = drift.exp().topRightCorner(p, 1);

  Mat cov = Mat::Zero(p, p);
  if (params.sigma > 0) {
    Mat vl = Mat::Zero(2 * p, 2 * p);
    vl.topLeftCorner(p, p) = -params.beta * horizon;
    vl.topRightCorner(p, p) = Mat::Identity(p, p) * (params.sigma * params.sigma * horizon);
    vl.bottomRightCorner(p, p) = params.beta.transpose() * horizon;
    Mat e = vl.exp();
    Mat phi = e.bottomRightCorner(p, p).transpose();
    cov = symmetrize(phi * e.topRightCorner(p, p));
  }
  if (!b.allFinite() || !a.allFinite() || !cov.allFinite())
    throw NumericError("discretize: non-finite transition (horizon too long for beta?)");
  return make_transition(std::move(a), std::move(b), std::move(cov));
}

/// Spectral quantities of beta entering the contraction rate.
class SpectralProfile {
 public:
  explicit SpectralProfile(const ModelParams& params) : beta_(params.beta), sigma_(params.sigma) {
    if (!beta_.allFinite()) throw InvalidParameter("spectral: non-finite beta");
    lambda_sig = sym_eigenvalues(-0.5 * (beta_ + beta_.transpose()))(0);
  }

  /// Smallest eigenvalue of -(beta + beta^T)/2.
  double lambda_sig = 0;

  /// Extreme eigenvalues of e^{beta t}(e^{beta t})^T, i.e. squared extreme singular values.
  std::pair<double, double> lambda_beta(double t) const {
    if (t == 0) return {1.0, 1.0};
    Mat e = (beta_ * t).exp();
    Eigen::JacobiSVD<Mat> svd(e);
    const Vec& s = svd.singularValues();
    return {s(s.size() - 1) * s(s.size() - 1), s(0) * s(0)};
  }
  double lambda_beta_min(double t) const { return lambda_beta(t).first; }
  double lambda_beta_max(double t) const { return lambda_beta(t).second; }

  /// int_0^t lambda_beta_max(s) ds.
  double integrated_lambda_beta_max(double t) const {
    if (t <= 0) return 0.0;
    return integrate([this](double s) { return lambda_beta_max(s); }, 0.0, t);
  }

  /// Lambda_t = sigma^2 int_0^t lambda_beta_max(s) ds.
  double capital_lambda(double t) const { return sigma_ * sigma_ * integrated_lambda_beta_max(t); }

  double sigma() const { return sigma_; }

 private:
  Mat beta_;
  double sigma_;
};

inline SpectralProfile spectral(const ModelParams& params) { return SpectralProfile(params); }

/// Two independent copies of the signal on R^{2p}.
inline ModelParams tensor_double(const ModelParams& params) {
  ModelParams out;
  out.alpha.resize(2 * params.dim());
  out.alpha << params.alpha, params.alpha;
  out.beta = block_diag2(params.beta);
  out.sigma = params.sigma;
  out.delta = params.delta;
  return out;
}

template <class Rng>
Vec standard_normal(int n, Rng& rng) {
  std::normal_distribution<double> nd;
  Vec z(n);
  for (int i = 0; i < n; ++i) z(i) = nd(rng);
  return z;
}

template <class Rng>
Vec sample_step(const DiscreteTransition& t, const Vec& state, Rng& rng) {
  detail::require_dim(state.size(), t.dim(), "sample_step state");
  return t.a + t.B * state + t.noise_factor * standard_normal(t.dim(), rng);
}

}  // namespace wcf
