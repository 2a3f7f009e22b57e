#pragma once

// Synchronous coupling of the h-process  d theta = (alpha + beta theta + sigma^2 grad log h(theta, t)) dt + sigma dB,
// h(., t) = P_{Delta - t} phi_{j,k}.  For linear-Gaussian observations phi_{j,k} and h are
// exponentials of quadratics, log h = -1/2 theta^T J theta + b^T theta + c.

#include <cstdint>
#include <random>
#include <vector>

#include "wcf/likelihood.hpp"
#include "wcf/rates.hpp"
#include "wcf/signal_model.hpp"

namespace wcf {

struct BackwardQuadratic {
  Mat J;
  Vec b;
  double c = 0;
  double valid_at = 0;  // time in [0, Delta]

  int dim() const { return static_cast<int>(b.size()); }

  double log_value(const Vec& theta) const { return -0.5 * theta.dot(J * theta) + b.dot(theta) + c; }

  static BackwardQuadratic zero(int p) { return {Mat::Zero(p, p), Vec::Zero(p), 0.0, 0.0}; }
};

/// log g_k as a quadratic in theta (gaussian_linear only).
inline BackwardQuadratic observation_quadratic(const LikelihoodModel& m, const Observation& obs) {
  if (m.kind() == LikelihoodKind::constant) return BackwardQuadratic::zero(m.state_dim());
  if (m.kind() != LikelihoodKind::gaussian_linear)
    throw UnsupportedKind("backward_potential: closed form needs gaussian_linear likelihoods, got " + to_string(m.kind()));
  detail::require_dim(obs.value.size(), m.obs_dim(), "observation_quadratic");
  const Mat& h = m.H();
  Vec riy = m.R_inv() * obs.value;
  return {symmetrize(h.transpose() * m.R_inv() * h), h.transpose() * riy,
          m.gaussian_log_norm() - 0.5 * obs.value.dot(riy), 0.0};
}

inline BackwardQuadratic add(BackwardQuadratic x, const BackwardQuadratic& y) {
  x.J += y.J;
  x.b += y.b;
  x.c += y.c;
  return x;
}

/// (P f)(theta) = E f(X), X ~ N(a + B theta, S), for log f quadratic with J positive semidefinite.
///
/// With m = a + B theta, r = b - J m and M = S (I + J S)^{-1}:
///   log P f = -1/2 m^T J m + b^T m + 1/2 r^T M r - 1/2 log det(I + S J) + c,
/// which is again quadratic in m and then in theta.
inline BackwardQuadratic propagate(const BackwardQuadratic& f, const DiscreteTransition& t) {
  detail::require_dim(f.dim(), t.dim(), "propagate");
  const int p = f.dim();
  const Mat id = Mat::Identity(p, p);
  Mat m_mat = Mat::Zero(p, p);
  double logdet = 0;
  if (!t.noise_cov.isZero(0.0)) {
    // M = S (I + J S)^{-1} = (I + S J)^{-1} S, symmetric since S and J are.
    Eigen::PartialPivLU<Mat> lu2(id + t.noise_cov * f.J);
    m_mat = symmetrize(lu2.solve(t.noise_cov));
    Vec diag = lu2.matrixLU().diagonal();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!(diag(i) != 0)) throw NumericError("propagate: singular I + S J");
      logdet += std::log(std::abs(diag(i)));
    }
  }
  // Quadratic in m.
  Mat jm = symmetrize(f.J - f.J * m_mat * f.J);
  Vec bm = f.b - f.J * (m_mat * f.b);
  const double cm = f.c + 0.5 * f.b.dot(m_mat * f.b) - 0.5 * logdet;
  // Substitute m = a + B theta.
  BackwardQuadratic out;
  out.J = symmetrize(t.B.transpose() * jm * t.B);
  out.b = t.B.transpose() * (bm - jm * t.a);
  out.c = cm + bm.dot(t.a) - 0.5 * t.a.dot(jm * t.a);
  out.valid_at = f.valid_at;
  return out;
}

/// Quadratic coefficients of log phi_{j,k}, phi_{k,k} = g_k, phi_{i,k} = g_i P_Delta phi_{i+1,k}.
/// `observations` holds y_j..y_k in order.
inline BackwardQuadratic phi_quadratic(const ModelParams& params, const LikelihoodModel& model,
                                       const std::vector<Observation>& observations) {
  if (observations.empty()) throw InvalidParameter("phi_quadratic: need at least one observation");
  const DiscreteTransition t = discretize(params, params.delta);
  BackwardQuadratic phi = observation_quadratic(model, observations.back());
  for (std::size_t i = observations.size() - 1; i-- > 0;)
    phi = add(propagate(phi, t), observation_quadratic(model, observations[i]));
  return phi;
}

/// h(., t) = P_{Delta - t} phi_{j,k} at every time in `times` (each within [0, Delta]).
inline std::vector<BackwardQuadratic> backward_potential(const ModelParams& params, const LikelihoodModel& model,
                                                         const std::vector<Observation>& observations,
                                                         const std::vector<double>& times) {
  const BackwardQuadratic phi = phi_quadratic(params, model, observations);
  std::vector<BackwardQuadratic> out;
  out.reserve(times.size());
  for (double t : times) {
    detail::check_time(params, t);
    const double rest = params.delta - t;
    BackwardQuadratic h = rest > 0 ? propagate(phi, discretize(params, rest)) : phi;
    h.valid_at = t;
    out.push_back(std::move(h));
  }
  return out;
}

inline Vec grad_log_h(const BackwardQuadratic& h, const Vec& theta) {
  detail::require_dim(theta.size(), h.dim(), "grad_log_h");
  return -h.J * theta + h.b;
}

inline constexpr int kPotentialGridNodes = 512;

inline std::vector<double> uniform_times(double delta, int count) {
  std::vector<double> ts(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) ts[static_cast<std::size_t>(i)] = delta * i / (count - 1);
  ts.back() = delta;
  return ts;
}

/// h-potentials on a uniform time grid over [0, Delta]; (J, b) linearly interpolated between nodes.
class PotentialPath {
 public:
  PotentialPath(std::vector<BackwardQuadratic> nodes, double delta) : nodes_(std::move(nodes)), delta_(delta) {
    if (nodes_.size() < 2) throw InvalidParameter("PotentialPath: need at least two nodes");
  }

  static PotentialPath build(const ModelParams& params, const LikelihoodModel& model,
                             const std::vector<Observation>& observations, int count = kPotentialGridNodes) {
    return PotentialPath(backward_potential(params, model, observations, uniform_times(params.delta, count)),
                         params.delta);
  }

  Vec grad_log_h(double t, const Vec& theta) const {
    const double pos = std::clamp(t / delta_, 0.0, 1.0) * static_cast<double>(nodes_.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(pos), nodes_.size() - 2);
    const double w = pos - static_cast<double>(i);
    const auto& lo = nodes_[i];
    const auto& hi = nodes_[i + 1];
    return (1 - w) * (-lo.J * theta + lo.b) + w * (-hi.J * theta + hi.b);
  }

  const std::vector<BackwardQuadratic>& nodes() const { return nodes_; }
  double delta() const { return delta_; }
  int dim() const { return nodes_.front().dim(); }

 private:
  std::vector<BackwardQuadratic> nodes_;
  double delta_;
};

struct CoupledPaths {
  std::vector<double> times;
  std::vector<Vec> path_a;
  std::vector<Vec> path_b;
};

namespace detail {
inline int coupling_steps(const PotentialPath& h, double dt) {
  if (!(dt > 0) || dt > h.delta() / 100 * (1 + 1e-12)) throw InvalidParameter("simulate_coupled: need 0 < dt <= Delta/100");
  return static_cast<int>(std::llround(h.delta() / dt));
}
}  // namespace detail

/// Euler-Maruyama for both h-process copies driven by the same Brownian increments.
inline CoupledPaths simulate_coupled(const Vec& theta0, const Vec& vartheta0, const PotentialPath& h,
                                     const ModelParams& params, double dt, std::uint64_t seed) {
  detail::require_dim(theta0.size(), params.dim(), "simulate_coupled theta0");
  detail::require_dim(vartheta0.size(), params.dim(), "simulate_coupled vartheta0");
  detail::require_dim(h.dim(), params.dim(), "simulate_coupled potentials");
  const int steps = detail::coupling_steps(h, dt);
  const double step = h.delta() / steps;
  const double s2 = params.sigma * params.sigma, sq = params.sigma * std::sqrt(step);
  std::mt19937_64 rng(seed);
  CoupledPaths out;
  out.times.reserve(static_cast<std::size_t>(steps + 1));
  out.path_a.reserve(static_cast<std::size_t>(steps + 1));
  out.path_b.reserve(static_cast<std::size_t>(steps + 1));
  Vec x = theta0, y = vartheta0;
  out.times.push_back(0);
  out.path_a.push_back(x);
  out.path_b.push_back(y);
  for (int n = 0; n < steps; ++n) {
    const double t = n * step;
    Vec noise = sq * standard_normal(params.dim(), rng);
    Vec dx = (params.alpha + params.beta * x + s2 * h.grad_log_h(t, x)) * step + noise;
    Vec dy = (params.alpha + params.beta * y + s2 * h.grad_log_h(t, y)) * step + noise;
    x += dx;
    y += dy;
    if (!x.allFinite() || !y.allFinite()) throw NumericError("simulate_coupled: integration diverged");
    out.times.push_back((n + 1) * step);
    out.path_a.push_back(x);
    out.path_b.push_back(y);
  }
  return out;
}

/// Terminal value of one h-process path; law approximates R_{j,k}(theta0, .).
template <class Rng>
Vec sample_h_terminal(const Vec& theta0, const PotentialPath& h, const ModelParams& params, double dt, Rng& rng) {
  const int steps = detail::coupling_steps(h, dt);
  const double step = h.delta() / steps;
  const double s2 = params.sigma * params.sigma, sq = params.sigma * std::sqrt(step);
  Vec x = theta0;
  for (int n = 0; n < steps; ++n) {
    x += (params.alpha + params.beta * x + s2 * h.grad_log_h(n * step, x)) * step +
         sq * standard_normal(params.dim(), rng);
  }
  if (!x.allFinite()) throw NumericError("sample_h_terminal: integration diverged");
  return x;
}

/// lambda(j, t) = lambda_sig + sigma^2 lambda_h(t) at each time.
inline std::vector<double> rate_curve(const ModelParams& params, double lambda_g, const std::vector<double>& times) {
  const SpectralProfile sp(params);
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(lambda_rate(sp, params, lambda_g, std::min(t, params.delta)));
  return out;
}

struct ContractionReport {
  double max_ratio = 0;
  double terminal_ratio = 0;
  double tolerance = 0;  // pass iff max_ratio <= 1 + tolerance
  bool pass = false;
};

/// max_t |theta_t - vartheta_t| / (exp(-int_0^t lambda(j, s) ds) |theta_0 - vartheta_0|), with the
/// rate integral by the trapezoid rule on the path grid.  Passes iff the maximum is <= 1 + C dt.
inline ContractionReport pathwise_contraction_check(const CoupledPaths& paths, const std::vector<double>& rate,
                                                    double dt, double slack_constant = 10.0) {
  const auto n = paths.times.size();
  if (paths.path_a.size() != n || paths.path_b.size() != n || rate.size() != n)
    throw SizeError("pathwise_contraction_check: grids are not aligned");
  if (n == 0) throw SizeError("pathwise_contraction_check: empty path");
  const double d0 = (paths.path_a[0] - paths.path_b[0]).norm();
  if (!(d0 > 0)) throw InvalidParameter("pathwise_contraction_check: zero initial separation");
  ContractionReport rep;
  rep.tolerance = slack_constant * dt;
  double integral = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) integral += 0.5 * (rate[i] + rate[i - 1]) * (paths.times[i] - paths.times[i - 1]);
    const double ratio = (paths.path_a[i] - paths.path_b[i]).norm() / (std::exp(-integral) * d0);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    rep.terminal_ratio = ratio;
  }
  rep.pass = rep.max_ratio <= 1 + rep.tolerance;
  return rep;
}

}  // namespace wcf
