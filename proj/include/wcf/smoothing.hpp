#pragma once

// One-dimensional grid machinery for filters with general initial laws: the backward weights
// phi_{j,k}, the kernels Q_k, the predictive laws eta_k, the constants varsigma_k, the
// future-reweighted (smoothing) Wasserstein distances, and the kernel-product form of the
// filter started from a point.

#include <optional>
#include <vector>

#include "wcf/grid.hpp"
#include "wcf/particle.hpp"
#include "wcf/transport.hpp"

namespace wcf {

/// phi_{j,k} on the grid.  `log_phi` is unnormalized; log_normalizer is
/// log eta_j phi_{j,k} = log pi_{j-1} P_Delta phi_{j,k} once normalize_weights has run.
struct BackwardWeight {
  int j = 0;
  int k = 0;
  Vec log_phi;
  double log_normalizer = 0;

  Vec log_normalized() const { return log_phi.array() - log_normalizer; }
};

namespace detail {
inline const Observation& obs_at(const std::vector<Observation>& obs, int step) {
  if (step < 0 || static_cast<std::size_t>(step) >= obs.size())
    throw InvalidParameter("smoothing: no observation for step " + std::to_string(step));
  return obs[static_cast<std::size_t>(step)];
}

inline Propagated checked_backward(const Vec& nodes, const Vec& log_f, const DiscreteTransition& t) {
  Propagated r = backward_apply(nodes, log_f, t);
  if (r.leakage > kLeakageTolerance)
    throw DomainError("backward operator: kernel mass leakage " + std::to_string(r.leakage) + " past grid boundary");
  return r;
}
}  // namespace detail

/// phi_{k,k} = g_k, phi_{j,k} = g_j P_Delta phi_{j+1,k}, for every j = 0..k (index j of the result).
/// `observations[i]` is y_i.
inline std::vector<BackwardWeight> phi_backward_all(const ModelParams& params, const LikelihoodModel& model,
                                                    const std::vector<Observation>& observations, int k,
                                                    const Vec& nodes) {
  if (params.dim() != 1) throw DimensionMismatch("phi_backward: one-dimensional models only");
  if (k < 0) throw InvalidParameter("phi_backward: k must be >= 0");
  const DiscreteTransition t = discretize(params, params.delta);
  std::vector<BackwardWeight> out(static_cast<std::size_t>(k + 1));
  Vec log_phi = log_likelihood_on_grid(model, detail::obs_at(observations, k), nodes);
  out[static_cast<std::size_t>(k)] = {k, k, log_phi, 0.0};
  for (int j = k - 1; j >= 0; --j) {
    log_phi = detail::checked_backward(nodes, log_phi, t).log_values +
              log_likelihood_on_grid(model, detail::obs_at(observations, j), nodes);
    out[static_cast<std::size_t>(j)] = {j, k, log_phi, 0.0};
  }
  return out;
}

inline BackwardWeight phi_backward(const ModelParams& params, const LikelihoodModel& model,
                                   const std::vector<Observation>& observations, int j, int k, const Vec& nodes) {
  if (j < 0 || j > k) throw InvalidParameter("phi_backward: need 0 <= j <= k");
  if (j == k) {
    if (params.dim() != 1) throw DimensionMismatch("phi_backward: one-dimensional models only");
    return {k, k, log_likelihood_on_grid(model, detail::obs_at(observations, k), nodes), 0.0};
  }
  return phi_backward_all(params, model, observations, k, nodes)[static_cast<std::size_t>(j)];
}

/// Predictive laws eta_k = pi_{k-1} P_Delta (eta_0 = mu0), constants varsigma_k = eta_k g_k and
/// filters pi_k started from the reference law mu0, all on one fixed grid.
struct SmoothingState {
  std::vector<GridDensity> eta_seq;
  std::vector<double> varsigma_seq;
  std::vector<GridDensity> filter_seq;
  GridDensity reference_init;

  Vec nodes() const { return reference_init.nodes; }
};

/// Default reference law: standard normal.
inline SmoothingState build_smoothing_state(const ModelParams& params, const LikelihoodModel& model,
                                            const std::vector<Observation>& observations, int horizon,
                                            const Vec& nodes, std::optional<GridDensity> mu0 = std::nullopt) {
  if (params.dim() != 1) throw DimensionMismatch("smoothing: one-dimensional models only");
  SmoothingState s;
  s.reference_init = mu0 ? normalize(*mu0) : gaussian_grid(nodes, 0.0, 1.0);
  const DiscreteTransition t = discretize(params, params.delta);
  GridDensity eta = s.reference_init;
  for (int k = 0; k <= horizon; ++k) {
    GridDensity post{eta.nodes, eta.log_values + log_likelihood_on_grid(model, detail::obs_at(observations, k), eta.nodes), false};
    const double log_vs = log_integral(post.nodes, post.log_values);
    s.eta_seq.push_back(eta);
    s.varsigma_seq.push_back(std::exp(log_vs));
    post.log_values.array() -= log_vs;
    post.normalized = true;
    s.filter_seq.push_back(post);
    if (k == horizon) break;
    Propagated next = forward_convolve(post, t, nodes);
    if (next.leakage > kLeakageTolerance) throw DomainError("smoothing: predictive mass leaks past grid");
    eta = normalize(GridDensity{nodes, std::move(next.log_values), false});
  }
  return s;
}

/// Sets log_normalizer of each weight to log eta_j phi_{j,k}.
inline void normalize_weights(std::vector<BackwardWeight>& weights, const SmoothingState& state) {
  for (auto& w : weights) {
    const auto& eta = state.eta_seq.at(static_cast<std::size_t>(w.j));
    w.log_normalizer = log_integral(eta.nodes, eta.log_values + w.log_phi);
  }
}

/// sup_theta |Q_j phi_{j,k} - varsigma_{j-1} phi_{j-1,k}| / (1 + |phi_{j-1,k}|) with normalized
/// weights, where Q_j f = g_{j-1} P_Delta f.
inline double eigen_residual(const SmoothingState& state, const ModelParams& params, const LikelihoodModel& model,
                             const std::vector<Observation>& observations, const BackwardWeight& wj,
                             const BackwardWeight& wjm1) {
  if (wjm1.j + 1 != wj.j || wj.k != wjm1.k) throw InvalidParameter("eigen_residual: need phi_{j,k} and phi_{j-1,k}");
  const Vec nodes = state.nodes();
  const DiscreteTransition t = discretize(params, params.delta);
  Vec log_q = detail::checked_backward(nodes, wj.log_normalized(), t).log_values +
              log_likelihood_on_grid(model, detail::obs_at(observations, wjm1.j), nodes);
  const double vs = state.varsigma_seq.at(static_cast<std::size_t>(wjm1.j));
  Vec prev = wjm1.log_normalized();
  double worst = 0;
  for (Eigen::Index i = 0; i < nodes.size(); ++i) {
    const double rhs = std::exp(prev(i));
    worst = std::max(worst, std::abs(std::exp(log_q(i)) - vs * rhs) / (1 + rhs));
  }
  return worst;
}

struct LogConcavityReport {
  double max_second_difference = 0;
  bool pass = false;
};

inline constexpr double kLogConcavityTolerance = 1e-6;

/// Largest discrete second difference of log f(theta) + lambda theta^2 / 2 on a uniform grid;
/// passes when it does not exceed 1e-6.
inline LogConcavityReport logconcavity_check(const Vec& nodes, const Vec& log_values, double lambda = 0) {
  detail::require_dim(log_values.size(), nodes.size(), "logconcavity_check");
  const auto n = nodes.size();
  if (n < 3) throw InvalidParameter("logconcavity_check: need at least three nodes");
  const double h = nodes(1) - nodes(0);
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    if (std::abs((nodes(i + 1) - nodes(i)) - h) > 1e-9 * std::max(1.0, std::abs(h)))
      throw InvalidParameter("logconcavity_check: grid must be uniform");
  LogConcavityReport rep;
  rep.max_second_difference = -std::numeric_limits<double>::infinity();
  auto f = [&](Eigen::Index i) { return log_values(i) + 0.5 * lambda * nodes(i) * nodes(i); };
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    rep.max_second_difference = std::max(rep.max_second_difference, f(i + 1) - 2 * f(i) + f(i - 1));
  rep.pass = rep.max_second_difference <= kLogConcavityTolerance;
  return rep;
}

/// Reweight a grid density by a positive weight and renormalize.
inline GridDensity reweight(const GridDensity& d, const Vec& log_weight) {
  detail::require_dim(log_weight.size(), d.size(), "reweight");
  if (!log_weight.allFinite()) throw InvalidParameter("reweight: weight must be strictly positive and finite");
  GridDensity out{d.nodes, d.log_values + log_weight, false};
  if (!std::isfinite(log_integral(out.nodes, out.log_values)))
    throw NumericError("reweight: zero total reweighted mass");
  return normalize(std::move(out));
}

/// W_q between (pi_a . w)/(pi_a w) and (pi_b . w)/(pi_b w).
inline double weighted_wasserstein(const GridDensity& pi_a, const GridDensity& pi_b, const Vec& log_weight, double q) {
  return wq_grid_1d(reweight(pi_a, log_weight), reweight(pi_b, log_weight), q);
}

/// log P_Delta phi on the grid (the weight of the future-reweighted distances).
inline Vec predictive_weight(const ModelParams& params, const Vec& nodes, const Vec& log_phi) {
  return detail::checked_backward(nodes, log_phi, discretize(params, params.delta)).log_values;
}

/// R_{1,k} ... R_{k,k} applied to the point theta, with
/// R_{j,k}(u, dv) = P_Delta(u, dv) phi_{j,k}(v) / P_Delta phi_{j,k}(u).
/// `weights` holds phi_{1,k}..phi_{k,k}; the result approximates the filter pi_k started at theta.
inline GridDensity r_kernel_compose(const std::vector<BackwardWeight>& weights, double theta,
                                    const ModelParams& params, const Vec& nodes) {
  if (params.dim() != 1) throw DimensionMismatch("r_kernel_compose: one-dimensional models only");
  if (weights.empty()) throw InvalidParameter("r_kernel_compose: need phi_{1,k}..phi_{k,k}");
  const DiscreteTransition t = discretize(params, params.delta);
  GridDensity cur = grid_predict_from_point(theta, t, nodes);
  cur.log_values += weights.front().log_phi;
  cur = normalize(std::move(cur));
  for (std::size_t i = 1; i < weights.size(); ++i) {
    const Vec& log_phi = weights[i].log_phi;
    Vec log_h = detail::checked_backward(nodes, log_phi, t).log_values;
    GridDensity src{nodes, cur.log_values - log_h, false};
    Propagated next = forward_convolve(src, t, nodes);
    cur = normalize(GridDensity{nodes, next.log_values + log_phi, false});
  }
  return cur;
}

/// |v^T F v + (u - v)^T S (u - v) - u^T C u - z^T (F + S) z| with C = F (F + S)^{-1} S and
/// z = v - (F + S)^{-1} S u.
inline double matrix_identity_check(const Mat& f, const Mat& s, const Vec& u, const Vec& v) {
  detail::require_dim(s.rows(), f.rows(), "matrix_identity_check");
  detail::require_dim(u.size(), f.rows(), "matrix_identity_check u");
  detail::require_dim(v.size(), f.rows(), "matrix_identity_check v");
  Mat fs = f + s;
  Eigen::FullPivLU<Mat> lu(fs);
  if (!lu.isInvertible()) throw NumericError("matrix_identity_check: F + S is singular");
  Mat c = f * lu.solve(s);
  Vec z = v - lu.solve(s * u);
  Vec d = u - v;
  return std::abs(v.dot(f * v) + d.dot(s * d) - u.dot(c * u) - z.dot(fs * z));
}

/// V(theta) = 1 + c |theta|.
inline double lyapunov_weight(double theta, double c = 1.0) { return 1 + c * std::abs(theta); }

/// sup_theta |f(theta) - g(theta)| / e^{V(theta)} for log-valued f, g on the grid.
inline double ev_norm_distance(const Vec& nodes, const Vec& log_f, const Vec& log_g, double c = 1.0) {
  double worst = 0;
  for (Eigen::Index i = 0; i < nodes.size(); ++i)
    worst = std::max(worst, std::abs(std::exp(log_f(i)) - std::exp(log_g(i))) / std::exp(lyapunov_weight(nodes(i), c)));
  return worst;
}

}  // namespace wcf
