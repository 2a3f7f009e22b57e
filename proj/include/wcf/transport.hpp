#pragma once

// Wasserstein distances between equal-size, equally weighted point clouds and between
// one-dimensional grid densities.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "wcf/grid.hpp"

namespace wcf {

struct TransportPlan {
  std::vector<Eigen::Index> assignment;  // point i of cloud a goes to assignment[i] of cloud b
  double cost = 0;                       // (sum |x_i - y_sigma(i)|^q / N)^{1/q}
};

namespace detail {
inline void check_order(double q) {
  if (!(q >= 1) || !std::isfinite(q)) throw InvalidParameter("wasserstein: order q must be >= 1");
}
inline double powq(double x, double q) { return q == 1 ? x : q == 2 ? x * x : std::pow(x, q); }
inline double rootq(double x, double q) { return q == 1 ? x : q == 2 ? std::sqrt(x) : std::pow(x, 1.0 / q); }
}  // namespace detail

/// Monotone coupling cost; optimal in one dimension.  Inputs are sorted internally.
inline double wq_1d(std::vector<double> a, std::vector<double> b, double q) {
  detail::check_order(q);
  if (a.size() != b.size()) throw SizeError("wq_1d: sample sizes differ");
  if (a.empty()) return 0.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += detail::powq(std::abs(a[i] - b[i]), q);
  return detail::rootq(s / static_cast<double>(a.size()), q);
}

inline constexpr Eigen::Index kMaxExactTransport = 2048;

/// Optimal assignment between two clouds (rows are points) by the Hungarian method with
/// potentials, O(N^3).  Ties resolve to the lowest column index.
inline TransportPlan wq_exact(const Mat& a, const Mat& b, double q) {
  detail::check_order(q);
  if (a.rows() != b.rows()) throw SizeError("wq_exact: cloud sizes differ");
  detail::require_dim(b.cols(), a.cols(), "wq_exact");
  const Eigen::Index n = a.rows();
  if (n > kMaxExactTransport) throw SizeError("wq_exact: N exceeds 2048");
  TransportPlan plan;
  if (n == 0) return plan;

  Mat cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = detail::powq((a.row(i) - b.row(j)).norm(), q);

  // 1-based rows/columns; column 0 is the virtual start.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[js];
        if (cur < minv[js]) {
          minv[js] = cur;
          way[js] = j0;
        }
        if (minv[js] < delta) {
          delta = minv[js];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        const auto js = static_cast<std::size_t>(j);
        if (used[js]) {
          u[static_cast<std::size_t>(p[js])] += delta;
          v[js] -= delta;
        } else {
          minv[js] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index j = 1; j <= n; ++j) plan.assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) total += cost(i, plan.assignment[static_cast<std::size_t>(i)]);
  plan.cost = detail::rootq(total / static_cast<double>(n), q);
  return plan;
}

/// Average of wq_1d over `n_projections` uniformly random directions.
inline double sliced_wq(const Mat& a, const Mat& b, double q, int n_projections, std::uint64_t seed) {
  detail::check_order(q);
  if (a.rows() != b.rows()) throw SizeError("sliced_wq: cloud sizes differ");
  detail::require_dim(b.cols(), a.cols(), "sliced_wq");
  if (n_projections < 1) throw InvalidParameter("sliced_wq: need at least one projection");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const auto p = a.cols();
  double total = 0;
  std::vector<double> pa(static_cast<std::size_t>(a.rows())), pb(static_cast<std::size_t>(b.rows()));
  for (int k = 0; k < n_projections; ++k) {
    Vec dir(p);
    do {
      for (Eigen::Index c = 0; c < p; ++c) dir(c) = nd(rng);
    } while (dir.norm() == 0);
    dir.normalize();
    Eigen::Map<Vec>(pa.data(), a.rows()) = a * dir;
    Eigen::Map<Vec>(pb.data(), b.rows()) = b * dir;
    total += wq_1d(pa, pb, q);
  }
  return total / n_projections;
}

namespace detail {

// Piecewise-linear CDF through (nodes, F) with F from the cumulative trapezoid rule.
struct LinearCdf {
  Vec x, f;

  explicit LinearCdf(const GridDensity& d) : x(d.nodes), f(d.size()) {
    Vec w = trapezoid_weights(d.nodes);
    const double log_mass = log_integral(d.nodes, d.log_values);
    if (!d.normalized || std::abs(std::expm1(log_mass)) > 1e-6)
      throw InvalidParameter("wq_grid_1d: density is not normalized");
    f(0) = 0;
    for (Eigen::Index i = 1; i < d.size(); ++i) {
      const double h = d.nodes(i) - d.nodes(i - 1);
      f(i) = f(i - 1) + 0.5 * h * (std::exp(d.log_values(i - 1) - log_mass) + std::exp(d.log_values(i) - log_mass));
    }
    f /= f(d.size() - 1);
    f(d.size() - 1) = 1.0;
  }

  // Quantile on the segment containing (lo, hi) evaluated at the two ends.
  std::pair<double, double> quantile_pair(Eigen::Index& seg, double lo, double hi) const {
    while (seg + 2 < f.size() && f(seg + 1) <= lo) ++seg;
    const double f0 = f(seg), f1 = f(seg + 1);
    const double span = f1 - f0;
    auto at = [&](double u) { return span > 0 ? x(seg) + (x(seg + 1) - x(seg)) * (u - f0) / span : x(seg); };
    return {at(lo), at(hi)};
  }
};

// Exact integral over [0, len] of |l(s)|^q with l linear from l0 to l1.
inline double abs_linear_power_integral(double l0, double l1, double len, double q) {
  if (len <= 0) return 0.0;
  if (l0 == l1) return len * powq(std::abs(l0), q);
  if ((l0 > 0 && l1 < 0) || (l0 < 0 && l1 > 0)) {
    const double root = len * l0 / (l0 - l1);
    return abs_linear_power_integral(l0, 0.0, root, q) + abs_linear_power_integral(0.0, l1, len - root, q);
  }
  const double a0 = std::abs(l0), a1 = std::abs(l1);
  return len * (std::pow(a1, q + 1) - std::pow(a0, q + 1)) / ((q + 1) * (a1 - a0));
}

}  // namespace detail

/// W_q between two normalized grid densities via the quantile coupling
/// int_0^1 |F^{-1}(u) - G^{-1}(u)|^q du.  With piecewise-linear CDFs both quantile functions
/// are piecewise linear, so the integral is evaluated exactly on the merged breakpoints.
inline double wq_grid_1d(const GridDensity& fd, const GridDensity& gd, double q) {
  detail::check_order(q);
  const detail::LinearCdf fa(fd), fb(gd);
  std::vector<double> brk;
  brk.reserve(static_cast<std::size_t>(fa.f.size() + fb.f.size()));
  for (Eigen::Index i = 0; i < fa.f.size(); ++i) brk.push_back(fa.f(i));
  for (Eigen::Index i = 0; i < fb.f.size(); ++i) brk.push_back(fb.f(i));
  std::sort(brk.begin(), brk.end());
  brk.erase(std::unique(brk.begin(), brk.end()), brk.end());
  Eigen::Index sa = 0, sb = 0;
  double total = 0;
  for (std::size_t i = 0; i + 1 < brk.size(); ++i) {
    const double lo = brk[i], hi = brk[i + 1];
    if (!(hi > lo)) continue;
    const auto [a0, a1] = fa.quantile_pair(sa, lo, hi);
    const auto [b0, b1] = fb.quantile_pair(sb, lo, hi);
    total += detail::abs_linear_power_integral(a0 - b0, a1 - b1, hi - lo, q);
  }
  return detail::rootq(total, q);
}

}  // namespace wcf
