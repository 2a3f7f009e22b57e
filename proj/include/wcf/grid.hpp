#pragma once

// One-dimensional densities on node grids.  Values are kept as logs; every product of
// densities and kernels is a sum, and every integral a log-sum-exp over trapezoid weights.

#include <numbers>
#include <vector>

#include "wcf/likelihood.hpp"
#include "wcf/signal_model.hpp"

namespace wcf {

struct GridDensity {
  Vec nodes;       // strictly increasing
  Vec log_values;  // log density at nodes
  bool normalized = false;

  Eigen::Index size() const { return nodes.size(); }
};

inline Vec uniform_nodes(double lo, double hi, int count) {
  if (count < 2 || !(hi > lo)) throw InvalidParameter("uniform_nodes: need count >= 2 and hi > lo");
  return Vec::LinSpaced(count, lo, hi);
}

/// Trapezoid weights for (possibly non-uniform) nodes.
inline Vec trapezoid_weights(const Vec& nodes) {
  const auto n = nodes.size();
  if (n < 2) throw InvalidParameter("grid: need at least two nodes");
  Vec w = Vec::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = nodes(i + 1) - nodes(i);
    if (!(h > 0)) throw InvalidParameter("grid: nodes must be strictly increasing");
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

/// log of the trapezoid integral of exp(log_values).
inline double log_integral(const Vec& nodes, const Vec& log_values) {
  detail::require_dim(log_values.size(), nodes.size(), "grid log_integral");
  Vec w = trapezoid_weights(nodes);
  std::vector<double> terms(static_cast<std::size_t>(nodes.size()));
  for (Eigen::Index i = 0; i < nodes.size(); ++i) terms[static_cast<std::size_t>(i)] = log_values(i) + std::log(w(i));
  return log_sum_exp(terms);
}

inline GridDensity normalize(GridDensity d) {
  const double z = log_integral(d.nodes, d.log_values);
  if (!std::isfinite(z)) throw NumericError("grid normalize: zero or non-finite mass");
  d.log_values.array() -= z;
  d.normalized = true;
  return d;
}

inline double total_mass(const GridDensity& d) { return std::exp(log_integral(d.nodes, d.log_values)); }

inline double log_normal_pdf(double x, double mean, double var) {
  const double r = x - mean;
  return -0.5 * (r * r / var + std::log(2 * std::numbers::pi * var));
}

inline GridDensity gaussian_grid(const Vec& nodes, double mean, double var) {
  if (!(var > 0)) throw InvalidParameter("gaussian_grid: variance must be > 0");
  GridDensity d{nodes, Vec(nodes.size()), false};
  for (Eigen::Index i = 0; i < nodes.size(); ++i) d.log_values(i) = log_normal_pdf(nodes(i), mean, var);
  return normalize(std::move(d));
}

/// Mean and variance of a grid density (trapezoid rule).
inline std::pair<double, double> grid_moments(const GridDensity& d) {
  Vec w = trapezoid_weights(d.nodes);
  double m0 = 0, m1 = 0, m2 = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double f = std::exp(d.log_values(i)) * w(i);
    m0 += f;
    m1 += f * d.nodes(i);
    m2 += f * d.nodes(i) * d.nodes(i);
  }
  const double mean = m1 / m0;
  return {mean, std::max(0.0, m2 / m0 - mean * mean)};
}

namespace detail {
inline void require_scalar(const DiscreteTransition& t, const char* what) {
  if (t.dim() != 1) throw DimensionMismatch(std::string(what) + ": one-dimensional models only");
  if (!(t.noise_cov(0, 0) > 0)) throw InvalidParameter(std::string(what) + ": needs positive noise variance");
}
}  // namespace detail

/// Result of pushing a density through the transition kernel: log density at the output
/// nodes and the fraction of mass that falls outside them.
struct Propagated {
  Vec log_values;
  double leakage = 0;
};

/// (pi P)(v) = int pi(u) N(v; a + B u, S) du at every output node v.
inline Propagated forward_convolve(const GridDensity& in, const DiscreteTransition& t, const Vec& out_nodes) {
  detail::require_scalar(t, "forward_convolve");
  const double a = t.a(0), b = t.B(0, 0), var = t.noise_cov(0, 0);
  const double inv2v = 0.5 / var, lognorm = -0.5 * std::log(2 * std::numbers::pi * var);
  Vec w = trapezoid_weights(in.nodes);
  const auto n = in.size();
  Vec src(n), centre(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src(i) = in.log_values(i) + std::log(w(i));
    centre(i) = a + b * in.nodes(i);
  }
  const double src_max = src.maxCoeff();
  Vec lin(n);
  for (Eigen::Index i = 0; i < n; ++i) lin(i) = std::exp(src(i) - src_max);

  Propagated out{Vec(out_nodes.size()), 0.0};
  for (Eigen::Index j = 0; j < out_nodes.size(); ++j) {
    const double v = out_nodes(j);
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = v - centre(i);
      top = std::max(top, src(i) - r * r * inv2v);
    }
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = v - centre(i);
      s += std::exp(src(i) - r * r * inv2v - top);
    }
    out.log_values(j) = top + std::log(s) + lognorm;
  }
  const double in_mass = std::exp(log_integral(in.nodes, in.log_values));
  const double out_mass = std::exp(log_integral(out_nodes, out.log_values));
  out.leakage = std::max(0.0, 1.0 - out_mass / in_mass);
  return out;
}

/// (P f)(u) = int f(v) N(v; a + B u, S) dv at every node u (f given on `nodes`).
/// `leakage` is the largest kernel mass lost past the grid over all u.
inline Propagated backward_apply(const Vec& nodes, const Vec& log_f, const DiscreteTransition& t) {
  detail::require_scalar(t, "backward_apply");
  detail::require_dim(log_f.size(), nodes.size(), "backward_apply");
  const double a = t.a(0), b = t.B(0, 0), var = t.noise_cov(0, 0);
  const double inv2v = 0.5 / var, lognorm = -0.5 * std::log(2 * std::numbers::pi * var);
  Vec w = trapezoid_weights(nodes);
  const auto n = nodes.size();
  Vec src(n);
  for (Eigen::Index i = 0; i < n; ++i) src(i) = log_f(i) + std::log(w(i));

  Propagated out{Vec(n), 0.0};
  const double sd = std::sqrt(var);
  const double lo = nodes(0), hi = nodes(n - 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = a + b * nodes(j);
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = nodes(i) - c;
      top = std::max(top, src(i) - r * r * inv2v);
    }
    double s = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = nodes(i) - c;
      s += std::exp(src(i) - r * r * inv2v - top);
    }
    out.log_values(j) = top + std::log(s) + lognorm;
    const double outside = 0.5 * std::erfc((c - lo) / (sd * std::numbers::sqrt2)) +
                           0.5 * std::erfc((hi - c) / (sd * std::numbers::sqrt2));
    out.leakage = std::max(out.leakage, outside);
  }
  return out;
}

/// log g_k evaluated at every node (one-dimensional states).
inline Vec log_likelihood_on_grid(const LikelihoodModel& m, const Observation& obs, const Vec& nodes) {
  Vec out(nodes.size());
  Vec theta(1);
  for (Eigen::Index i = 0; i < nodes.size(); ++i) {
    theta(0) = nodes(i);
    out(i) = log_g(m, theta, obs);
  }
  return out;
}

}  // namespace wcf
