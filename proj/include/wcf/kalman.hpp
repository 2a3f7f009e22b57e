#pragma once

// Exact filter for linear-Gaussian observations, and the closed-form W2 between Gaussians.

#include <vector>

#include "wcf/likelihood.hpp"
#include "wcf/signal_model.hpp"

namespace wcf {

/// Gaussian law N(mean, cov); a Dirac mass has zero covariance.
struct GaussianBelief {
  Vec mean;
  Mat cov;

  int dim() const { return static_cast<int>(mean.size()); }

  static GaussianBelief dirac(Vec at) {
    const auto p = at.size();
    return {std::move(at), Mat::Zero(p, p)};
  }
};

inline GaussianBelief predict(const GaussianBelief& belief, const DiscreteTransition& t) {
  detail::require_dim(belief.dim(), t.dim(), "predict");
  return {t.a + t.B * belief.mean, symmetrize(t.B * belief.cov * t.B.transpose() + t.noise_cov)};
}

/// Conjugate update with the Joseph-form covariance.
inline GaussianBelief update(const GaussianBelief& belief, const LikelihoodModel& model, const Observation& obs) {
  if (model.kind() == LikelihoodKind::constant) return belief;
  if (model.kind() != LikelihoodKind::gaussian_linear)
    throw UnsupportedKind("kalman update requires a gaussian_linear likelihood");
  detail::require_dim(belief.dim(), model.state_dim(), "update belief");
  detail::require_dim(obs.value.size(), model.obs_dim(), "update observation");
  const Mat& h = model.H();
  Mat s = symmetrize(h * belief.cov * h.transpose() + model.R());
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw NumericError("kalman update: singular innovation covariance");
  Mat gain = llt.solve(h * belief.cov).transpose();
  const auto p = belief.dim();
  Mat ikh = Mat::Identity(p, p) - gain * h;
  GaussianBelief out;
  out.mean = belief.mean + gain * (obs.value - h * belief.mean);
  out.cov = symmetrize(ikh * belief.cov * ikh.transpose() + gain * model.R() * gain.transpose());
  return out;
}

/// W2(N(m1, S1), N(m2, S2))^2 = |m1 - m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}).
inline double gaussian_w2(const GaussianBelief& b1, const GaussianBelief& b2) {
  detail::require_dim(b1.dim(), b2.dim(), "gaussian_w2");
  if (!is_symmetric(b1.cov, 1e-10) || !is_symmetric(b2.cov, 1e-10))
    throw InvalidParameter("gaussian_w2: covariance not symmetric");
  const double mean_term = (b1.mean - b2.mean).squaredNorm();
  // Equal covariances have Bures term exactly zero; computing it would leave O(sqrt(eps)) noise.
  if (b1.cov == b2.cov) return std::sqrt(mean_term);
  Mat r2 = psd_sqrt(b2.cov);
  Mat cross = psd_sqrt(r2 * b1.cov * r2);
  const double bures = (b1.cov + b2.cov - 2 * cross).trace();
  return std::sqrt(std::max(0.0, mean_term + bures));
}

/// pi_0, ..., pi_k: update at step 0, then predict/update for each later observation.
inline std::vector<GaussianBelief> filter_run(const GaussianBelief& init, const ModelParams& params,
                                              const LikelihoodModel& model,
                                              const std::vector<Observation>& observations) {
  detail::require_dim(init.dim(), params.dim(), "filter_run init");
  std::vector<GaussianBelief> out;
  if (observations.empty()) return out;
  const DiscreteTransition t = discretize(params, params.delta);
  out.reserve(observations.size());
  out.push_back(update(init, model, observations.front()));
  for (std::size_t k = 1; k < observations.size(); ++k)
    out.push_back(update(predict(out.back(), t), model, observations[k]));
  return out;
}

}  // namespace wcf
