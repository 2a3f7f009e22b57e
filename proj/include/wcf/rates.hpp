#pragma once

// Contraction rates for point-initialized filters:
//
//   lambda_h(t)  = lambda_g lambda_beta_min(D - t) / (1 + sigma^2 lambda_g int_t^D lambda_beta_max(D - s) ds)
//   lambda(j, t) = lambda_sig + sigma^2 lambda_h(t)            (lambda_g = lambda_g(j))
//
// and the cumulative factor  exp(-sum_{j=1}^k int_0^D lambda(j, t) dt).
//
// Note: for beta = -lambda I the matrix e^{beta t}(e^{beta t})^T equals e^{-2 lambda t} I, so both
// extreme eigenvalues are e^{-2 lambda t} (the time argument is part of the definition).

#include <map>
#include <vector>

#include "wcf/signal_model.hpp"

namespace wcf {

namespace detail {
inline void check_time(const ModelParams& params, double t) {
  const double slack = 1e-12 * std::max(1.0, params.delta);
  if (!(t >= -slack && t <= params.delta + slack))
    throw InvalidParameter("rate: t must lie in [0, delta]");
}
}  // namespace detail

inline double lambda_h(const SpectralProfile& sp, const ModelParams& params, double lambda_g, double t) {
  detail::check_time(params, t);
  if (lambda_g < 0) throw InvalidParameter("lambda_h: lambda_g must be >= 0");
  if (lambda_g == 0) return 0.0;
  const double rest = std::clamp(params.delta - t, 0.0, params.delta);
  // int_t^D lambda_beta_max(D - s) ds = int_0^{D - t} lambda_beta_max(u) du
  const double denom = 1.0 + params.sigma * params.sigma * lambda_g * sp.integrated_lambda_beta_max(rest);
  return lambda_g * sp.lambda_beta_min(rest) / denom;
}

inline double lambda_h(const ModelParams& params, double lambda_g, double t) {
  return lambda_h(spectral(params), params, lambda_g, t);
}

inline double lambda_rate(const SpectralProfile& sp, const ModelParams& params, double lambda_g, double t) {
  return sp.lambda_sig + params.sigma * params.sigma * lambda_h(sp, params, lambda_g, t);
}

inline double lambda_rate(const ModelParams& params, double lambda_g, double t) {
  return lambda_rate(spectral(params), params, lambda_g, t);
}

inline constexpr double kOuterQuadratureTolerance = 1e-10;

/// int_0^Delta lambda(j, t) dt.
inline double step_exponent(const SpectralProfile& sp, const ModelParams& params, double lambda_g) {
  if (lambda_g < 0) throw InvalidParameter("step_exponent: lambda_g must be >= 0");
  const double signal = sp.lambda_sig * params.delta;
  if (lambda_g == 0 || params.sigma == 0) return signal;
  const double s2 = params.sigma * params.sigma;
  // The integrand carries the inner quadrature's error, so the outer tolerance sits above it.
  return signal + s2 * integrate([&](double t) { return lambda_h(sp, params, lambda_g, t); }, 0.0, params.delta,
                                 kOuterQuadratureTolerance);
}

inline double step_exponent(const ModelParams& params, double lambda_g) {
  return step_exponent(spectral(params), params, lambda_g);
}

/// Closed form of step_exponent for beta = -lambda I:
/// Delta lambda + log(1 + sigma^2 lambda_g int_0^Delta e^{-2 lambda t} dt).
inline double isotropic_step_exponent(double lambda, double sigma, double lambda_g, double delta) {
  const double integral = lambda == 0 ? delta : -std::expm1(-2 * lambda * delta) / (2 * lambda);
  return delta * lambda + std::log1p(sigma * sigma * lambda_g * integral);
}

struct RateProfile {
  ModelParams model;
  std::vector<double> lambda_g_seq;           // lambda_g(j), j = 1..k
  std::vector<double> per_step_exponent;      // int_0^Delta lambda(j, t) dt, j = 1..k
  std::vector<double> cumulative_log_bound;   // entry k: -sum_{j<=k} per_step_exponent; entry 0 is 0

  int steps() const { return static_cast<int>(per_step_exponent.size()); }

  /// Bound factor after k steps.
  double factor(int k) const { return std::exp(cumulative_log_bound.at(static_cast<std::size_t>(k))); }
};

inline RateProfile cumulative_bound(const ModelParams& params, const std::vector<double>& lambda_g_seq) {
  params.validate();
  for (double lg : lambda_g_seq)
    if (!(lg >= 0)) throw InvalidParameter("cumulative_bound: lambda_g must be >= 0");
  const SpectralProfile sp(params);
  RateProfile out{params, lambda_g_seq, {}, {0.0}};
  std::map<double, double> cache;
  for (double lg : lambda_g_seq) {
    auto it = cache.find(lg);
    if (it == cache.end()) it = cache.emplace(lg, step_exponent(sp, params, lg)).first;
    out.per_step_exponent.push_back(it->second);
    out.cumulative_log_bound.push_back(out.cumulative_log_bound.back() - it->second);
  }
  return out;
}

}  // namespace wcf
