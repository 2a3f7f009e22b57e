#pragma once

// Observation likelihoods g_k(theta, y_k) with a strong log-concavity parameter lambda_g:
// theta -> log g + (lambda_g / 2) |theta|^2 is concave.

#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "wcf/linalg.hpp"

namespace wcf {

enum class LikelihoodKind { gaussian_linear, logistic_glm, poisson_glm, constant };

inline std::string to_string(LikelihoodKind k) {
  switch (k) {
    case LikelihoodKind::gaussian_linear: return "gaussian_linear";
    case LikelihoodKind::logistic_glm: return "logistic_glm";
    case LikelihoodKind::poisson_glm: return "poisson_glm";
    case LikelihoodKind::constant: return "constant";
  }
  return "unknown";
}

inline LikelihoodKind likelihood_kind_from_string(const std::string& s) {
  if (s == "gaussian_linear") return LikelihoodKind::gaussian_linear;
  if (s == "logistic_glm") return LikelihoodKind::logistic_glm;
  if (s == "poisson_glm") return LikelihoodKind::poisson_glm;
  if (s == "constant") return LikelihoodKind::constant;
  throw InvalidParameter("unknown likelihood kind: " + s);
}

struct Observation {
  int step = 0;
  Vec value;
};

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class LikelihoodModel {
 public:
  /// g == 1; `obs_dim` is the expected length of observation vectors.
  static LikelihoodModel constant(int state_dim, int obs_dim = 0) {
    LikelihoodModel m(LikelihoodKind::constant, state_dim, obs_dim);
    return m;
  }

  /// y ~ N(H theta, R).
  static LikelihoodModel gaussian(Mat h, Mat r) {
    if (r.rows() != h.rows() || r.cols() != h.rows())
      throw DimensionMismatch("gaussian likelihood: R must be n x n with n = rows(H)");
    if (!h.allFinite() || !r.allFinite()) throw InvalidParameter("gaussian likelihood: non-finite");
    if (!is_symmetric(r, 1e-12)) throw InvalidParameter("gaussian likelihood: R not symmetric");
    LikelihoodModel m(LikelihoodKind::gaussian_linear, static_cast<int>(h.cols()),
                      static_cast<int>(h.rows()));
    Eigen::LLT<Mat> llt(symmetrize(r));
    if (llt.info() != Eigen::Success) throw InvalidParameter("gaussian likelihood: R not positive definite");
    m.r_inv_ = llt.solve(Mat::Identity(r.rows(), r.rows()));
    m.r_inv_ = symmetrize(m.r_inv_);
    m.r_chol_ = llt.matrixL();
    double logdet = 0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) logdet += 2 * std::log(m.r_chol_(i, i));
    m.log_norm_ = -0.5 * (logdet + static_cast<double>(r.rows()) * std::log(2 * std::numbers::pi));
    m.h_ = std::move(h);
    m.r_ = std::move(r);
    Mat info = m.h_.transpose() * m.r_inv_ * m.h_;
    m.lambda_g_ = std::max(0.0, sym_eigenvalues(info)(0));
    return m;
  }

  /// Bernoulli GLM with logit link; covariates[k] is the n x p matrix x_k (a single matrix is shared by all steps).
  static LikelihoodModel logistic(std::vector<Mat> covariates) {
    return glm(LikelihoodKind::logistic_glm, std::move(covariates));
  }

  /// Poisson GLM with log link.
  static LikelihoodModel poisson(std::vector<Mat> covariates) {
    return glm(LikelihoodKind::poisson_glm, std::move(covariates));
  }

  LikelihoodKind kind() const { return kind_; }
  int state_dim() const { return state_dim_; }
  int obs_dim() const { return obs_dim_; }
  const Mat& H() const { return h_; }
  const Mat& R() const { return r_; }
  const Mat& R_inv() const { return r_inv_; }
  const Mat& R_chol() const { return r_chol_; }
  double gaussian_log_norm() const { return log_norm_; }
  const std::vector<Mat>& covariates() const { return covariates_; }

  const Mat& covariates_at(int step) const {
    if (covariates_.size() == 1) return covariates_.front();
    if (step < 0 || static_cast<std::size_t>(step) >= covariates_.size())
      throw InvalidParameter("likelihood: no covariates for step " + std::to_string(step));
    return covariates_[static_cast<std::size_t>(step)];
  }

  /// lambda_g(k).  The family parameter does not depend on k for these kinds.
  double lambda_g(int /*step*/ = 0) const { return lambda_g_; }

 private:
  LikelihoodModel(LikelihoodKind kind, int state_dim, int obs_dim)
      : kind_(kind), state_dim_(state_dim), obs_dim_(obs_dim) {}

  static LikelihoodModel glm(LikelihoodKind kind, std::vector<Mat> covariates) {
    if (covariates.empty()) throw InvalidParameter("glm likelihood: no covariates");
    const auto n = covariates.front().rows();
    const auto p = covariates.front().cols();
    for (const auto& x : covariates) {
      if (x.rows() != n || x.cols() != p) throw DimensionMismatch("glm likelihood: ragged covariates");
      if (!x.allFinite()) throw InvalidParameter("glm likelihood: non-finite covariates");
    }
    LikelihoodModel m(kind, static_cast<int>(p), static_cast<int>(n));
    m.covariates_ = std::move(covariates);
    return m;
  }

  LikelihoodKind kind_;
  int state_dim_ = 0;
  int obs_dim_ = 0;
  Mat h_, r_, r_inv_, r_chol_;
  double log_norm_ = 0;
  std::vector<Mat> covariates_;
  double lambda_g_ = 0;
};

namespace detail {
inline void check_obs(const LikelihoodModel& m, const Vec& theta, const Observation& obs) {
  require_dim(theta.size(), m.state_dim(), "likelihood theta");
  require_dim(obs.value.size(), m.obs_dim(), "likelihood observation");
}
}  // namespace detail

inline double log_g(const LikelihoodModel& m, const Vec& theta, const Observation& obs) {
  detail::check_obs(m, theta, obs);
  switch (m.kind()) {
    case LikelihoodKind::constant:
      return 0.0;
    case LikelihoodKind::gaussian_linear: {
      Vec r = obs.value - m.H() * theta;
      return m.gaussian_log_norm() - 0.5 * r.dot(m.R_inv() * r);
    }
    case LikelihoodKind::logistic_glm: {
      Vec eta = m.covariates_at(obs.step) * theta;
      double s = 0;
      for (Eigen::Index i = 0; i < eta.size(); ++i) s += obs.value(i) * eta(i) - softplus(eta(i));
      return s;
    }
    case LikelihoodKind::poisson_glm: {
      Vec eta = m.covariates_at(obs.step) * theta;
      double s = 0;
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        s += obs.value(i) * eta(i) - std::exp(eta(i)) - std::lgamma(obs.value(i) + 1.0);
      return s;
    }
  }
  return 0.0;
}

inline Vec grad_log_g(const LikelihoodModel& m, const Vec& theta, const Observation& obs) {
  detail::check_obs(m, theta, obs);
  switch (m.kind()) {
    case LikelihoodKind::constant:
      return Vec::Zero(theta.size());
    case LikelihoodKind::gaussian_linear:
      return m.H().transpose() * (m.R_inv() * (obs.value - m.H() * theta));
    case LikelihoodKind::logistic_glm: {
      const Mat& x = m.covariates_at(obs.step);
      Vec eta = x * theta;
      Vec resid(eta.size());
      for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = obs.value(i) - sigmoid(eta(i));
      return x.transpose() * resid;
    }
    case LikelihoodKind::poisson_glm: {
      const Mat& x = m.covariates_at(obs.step);
      Vec eta = x * theta;
      Vec resid(eta.size());
      for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = obs.value(i) - std::exp(eta(i));
      return x.transpose() * resid;
    }
  }
  return Vec::Zero(theta.size());
}

/// Largest lambda_g with g * exp(lambda_g |theta|^2 / 2) log-concave, per kind:
/// smallest eigenvalue of H^T R^{-1} H for gaussian_linear, 0 otherwise.
inline double strong_logconcavity_parameter(const LikelihoodModel& m) { return m.lambda_g(); }

template <class Rng>
Observation sample_observation(const LikelihoodModel& m, const Vec& theta, int step, Rng& rng) {
  detail::require_dim(theta.size(), m.state_dim(), "sample_observation theta");
  Observation obs{step, Vec::Zero(m.obs_dim())};
  switch (m.kind()) {
    case LikelihoodKind::constant:
      break;
    case LikelihoodKind::gaussian_linear: {
      std::normal_distribution<double> nd;
      Vec z(m.obs_dim());
      for (int i = 0; i < m.obs_dim(); ++i) z(i) = nd(rng);
      obs.value = m.H() * theta + m.R_chol() * z;
      break;
    }
    case LikelihoodKind::logistic_glm: {
      Vec eta = m.covariates_at(step) * theta;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int i = 0; i < m.obs_dim(); ++i) obs.value(i) = u(rng) < sigmoid(eta(i)) ? 1.0 : 0.0;
      break;
    }
    case LikelihoodKind::poisson_glm: {
      Vec eta = m.covariates_at(step) * theta;
      for (int i = 0; i < m.obs_dim(); ++i) {
        std::poisson_distribution<long> pd(std::exp(eta(i)));
        obs.value(i) = static_cast<double>(pd(rng));
      }
      break;
    }
  }
  return obs;
}

/// Likelihood of two independent copies: observations (y_1, y_2) of (theta_1, theta_2).
inline LikelihoodModel tensor_double(const LikelihoodModel& m) {
  switch (m.kind()) {
    case LikelihoodKind::constant:
      return LikelihoodModel::constant(2 * m.state_dim(), 2 * m.obs_dim());
    case LikelihoodKind::gaussian_linear:
      return LikelihoodModel::gaussian(block_diag2(m.H()), block_diag2(m.R()));
    case LikelihoodKind::logistic_glm:
    case LikelihoodKind::poisson_glm: {
      std::vector<Mat> xs;
      for (const auto& x : m.covariates()) xs.push_back(block_diag2(x));
      return m.kind() == LikelihoodKind::logistic_glm ? LikelihoodModel::logistic(std::move(xs))
                                                      : LikelihoodModel::poisson(std::move(xs));
    }
  }
  throw UnsupportedKind("tensor_double: unknown likelihood kind");
}

}  // namespace wcf
