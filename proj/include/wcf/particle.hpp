#pragma once

// Bootstrap particle filter (systematic resampling every step) and the one-dimensional
// deterministic grid filter used as a quadrature reference.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "wcf/grid.hpp"

namespace wcf {

/// Equally weighted particles, one per row.
struct ParticleCloud {
  Mat points;  // N x p
  int step = 0;

  Eigen::Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
};

/// Order in which particles are laid out before systematic resampling.
/// `spatial` sorts by value in 1-D and along a Hilbert curve in higher dimension, so the
/// resampled output does not depend on the incoming particle order.
enum class ResampleOrder { index, spatial };

namespace detail {

// Hilbert index of (x, y) on a 2^bits x 2^bits grid.
inline std::uint64_t hilbert_d(std::uint32_t n, std::uint32_t x, std::uint32_t y) {
  std::uint64_t d = 0;
  for (std::uint32_t s = n / 2; s > 0; s /= 2) {
    const std::uint32_t rx = (x & s) > 0 ? 1u : 0u;
    const std::uint32_t ry = (y & s) > 0 ? 1u : 0u;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

inline std::vector<Eigen::Index> spatial_order(const Mat& pts) {
  const auto n = pts.rows();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (pts.cols() == 1) {
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return pts(i, 0) < pts(j, 0); });
    return idx;
  }
  // Hilbert curve through the first two whitened coordinates, ties broken lexicographically.
  // Whitening by the cloud's own mean and covariance, then the standard normal CDF, makes the
  // order invariant under affine maps of the cloud: a translated copy sorts identically.
  constexpr std::uint32_t side = 1u << 31;
  Mat first2 = pts.leftCols(2);
  const Eigen::RowVector2d mean = first2.colwise().mean();
  first2.rowwise() -= mean;
  Mat cov = first2.transpose() * first2 / static_cast<double>(n);
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() == Eigen::Success && llt.matrixL()(1, 1) > 0 && llt.matrixL()(0, 0) > 0)
    first2 = Mat(llt.matrixL().solve(first2.transpose())).transpose();
  auto quant = [&](Eigen::Index i, int c) {
    const double r = 0.5 * std::erfc(-first2(i, c) / std::numbers::sqrt2);
    return static_cast<std::uint32_t>(std::min<double>(side - 1, std::floor(r * side)));
  };
  std::vector<std::uint64_t> key(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) key[static_cast<std::size_t>(i)] = hilbert_d(side, quant(i, 0), quant(i, 1));
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) {
    const auto ki = key[static_cast<std::size_t>(i)], kj = key[static_cast<std::size_t>(j)];
    if (ki != kj) return ki < kj;
    for (Eigen::Index c = 0; c < pts.cols(); ++c)
      if (pts(i, c) != pts(j, c)) return pts(i, c) < pts(j, c);
    return false;
  });
  return idx;
}

}  // namespace detail

/// Systematic resampling: N slots (u + m)/N, m = 0..N-1, against cumulative normalized
/// weights taken in `order`.  Weights are normalized in log space.
inline std::vector<Eigen::Index> systematic_resample(const std::vector<double>& log_weights,
                                                     const std::vector<Eigen::Index>& order, double u) {
  const auto n = log_weights.size();
  if (n == 0) throw InvalidParameter("systematic_resample: no particles");
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) throw NumericError("systematic_resample: degenerate weights");
  std::vector<Eigen::Index> out(n);
  double cum = 0;
  std::size_t pos = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const double slot = (u + static_cast<double>(m)) / static_cast<double>(n);
    while (pos + 1 < n) {
      const double next = cum + std::exp(log_weights[static_cast<std::size_t>(order[pos])] - lse);
      if (next > slot) break;
      cum = next;
      ++pos;
    }
    out[m] = order[pos];
  }
  return out;
}

namespace detail {
template <class Rng>
ParticleCloud reweight_resample(const Mat& pts, const LikelihoodModel& model, const Observation& obs, Rng& rng,
                                ResampleOrder order, int step) {
  const auto n = pts.rows();
  std::vector<double> lw(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) lw[static_cast<std::size_t>(i)] = log_g(model, pts.row(i).transpose(), obs);
  std::vector<Eigen::Index> ord;
  if (order == ResampleOrder::spatial) {
    ord = spatial_order(pts);
  } else {
    ord.resize(static_cast<std::size_t>(n));
    std::iota(ord.begin(), ord.end(), Eigen::Index{0});
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto picks = systematic_resample(lw, ord, unif(rng));
  ParticleCloud out{Mat(n, pts.cols()), step};
  for (Eigen::Index i = 0; i < n; ++i) out.points.row(i) = pts.row(picks[static_cast<std::size_t>(i)]);
  return out;
}
}  // namespace detail

/// Propagate every particle through the transition, weight by g, resample N.
template <class Rng>
ParticleCloud bootstrap_step(const ParticleCloud& cloud, const DiscreteTransition& t, const LikelihoodModel& model,
                             const Observation& obs, Rng& rng, ResampleOrder order = ResampleOrder::spatial) {
  if (cloud.size() < 1) throw InvalidParameter("bootstrap_step: empty cloud");
  detail::require_dim(cloud.dim(), t.dim(), "bootstrap_step");
  const auto n = cloud.size();
  const int p = cloud.dim();
  Mat z(n, p);
  std::normal_distribution<double> nd;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < p; ++c) z(i, c) = nd(rng);
  Mat moved = (cloud.points * t.B.transpose()).rowwise() + t.a.transpose();
  moved += z * t.noise_factor.transpose();
  if (!moved.allFinite()) throw NumericError("bootstrap_step: non-finite particle");
  return detail::reweight_resample(moved, model, obs, rng, order, cloud.step + 1);
}

/// Draws N initial particles (rows) from the initial law.
using InitSampler = std::function<Mat(std::mt19937_64&, Eigen::Index)>;

inline InitSampler dirac_sampler(const Vec& at) {
  return [at](std::mt19937_64&, Eigen::Index n) { return Mat(at.transpose().replicate(n, 1)); };
}

inline InitSampler gaussian_sampler(const Vec& mean, const Mat& cov) {
  Mat l = factor_psd(cov);
  return [mean, l](std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> nd;
    Mat out(n, mean.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec z(mean.size());
      for (Eigen::Index c = 0; c < mean.size(); ++c) z(c) = nd(rng);
      out.row(i) = (mean + l * z).transpose();
    }
    return out;
  };
}

/// Particle approximations of pi_0..pi_k; deterministic given the seed.
inline std::vector<ParticleCloud> pf_run(const InitSampler& init, const ModelParams& params,
                                         const LikelihoodModel& model, const std::vector<Observation>& observations,
                                         Eigen::Index n, std::uint64_t seed,
                                         ResampleOrder order = ResampleOrder::spatial) {
  if (n < 1) throw InvalidParameter("pf_run: N must be >= 1");
  std::vector<ParticleCloud> out;
  if (observations.empty()) return out;
  std::mt19937_64 rng(seed);
  Mat pts = init(rng, n);
  detail::require_dim(pts.cols(), params.dim(), "pf_run init");
  out.push_back(detail::reweight_resample(pts, model, observations.front(), rng, order, 0));
  const DiscreteTransition t = discretize(params, params.delta);
  for (std::size_t k = 1; k < observations.size(); ++k)
    out.push_back(bootstrap_step(out.back(), t, model, observations[k], rng, order));
  return out;
}

inline Vec cloud_mean(const ParticleCloud& c) { return c.points.colwise().mean().transpose(); }

inline Mat cloud_cov(const ParticleCloud& c) {
  Mat centred = c.points.rowwise() - c.points.colwise().mean();
  return centred.transpose() * centred / static_cast<double>(std::max<Eigen::Index>(1, c.size() - 1));
}

// ---------------------------------------------------------------------------------------------
// Grid filter (p = 1)

inline constexpr int kDefaultGridNodes = 1 << 12;
inline constexpr double kGridHalfWidth = 8.0;  // predicted standard deviations
inline constexpr double kLeakageTolerance = 1e-6;

/// pi'(v) proportional to g(v, y) int N(v; a + B u, S) pi(u) du.  Without `out_nodes` the grid
/// spans the predicted mean +- 8 predicted standard deviations with 2^12 nodes.
inline GridDensity grid_filter_step(const GridDensity& density, const DiscreteTransition& t,
                                    const LikelihoodModel& model, const Observation& obs,
                                    std::optional<Vec> out_nodes = std::nullopt) {
  detail::require_scalar(t, "grid_filter_step");
  if (model.state_dim() != 1) throw DimensionMismatch("grid_filter_step: likelihood must be one-dimensional");
  if (!out_nodes) {
    const auto [m, v] = grid_moments(density);
    const double pm = t.a(0) + t.B(0, 0) * m;
    const double ps = std::sqrt(t.B(0, 0) * t.B(0, 0) * v + t.noise_cov(0, 0));
    out_nodes = uniform_nodes(pm - kGridHalfWidth * ps, pm + kGridHalfWidth * ps, kDefaultGridNodes);
  }
  Propagated pred = forward_convolve(density, t, *out_nodes);
  if (pred.leakage > kLeakageTolerance)
    throw DomainError("grid_filter_step: mass leakage " + std::to_string(pred.leakage) + " past grid boundary");
  GridDensity out{std::move(*out_nodes), std::move(pred.log_values), false};
  out.log_values += log_likelihood_on_grid(model, obs, out.nodes);
  return normalize(std::move(out));
}

/// Grid density of N(a + B theta, S) on `nodes`: the one-step prediction from a point.
inline GridDensity grid_predict_from_point(double theta, const DiscreteTransition& t, const Vec& nodes) {
  detail::require_scalar(t, "grid_predict_from_point");
  GridDensity d{nodes, Vec(nodes.size()), false};
  const double mean = t.a(0) + t.B(0, 0) * theta;
  for (Eigen::Index i = 0; i < nodes.size(); ++i) d.log_values(i) = log_normal_pdf(nodes(i), mean, t.noise_cov(0, 0));
  return d;
}

/// Grid filter pi_0..pi_k from a grid initial density.
inline std::vector<GridDensity> grid_filter_run(const GridDensity& init, const ModelParams& params,
                                                const LikelihoodModel& model,
                                                const std::vector<Observation>& observations,
                                                std::optional<Vec> fixed_nodes = std::nullopt) {
  std::vector<GridDensity> out;
  if (observations.empty()) return out;
  GridDensity first = init;
  first.log_values += log_likelihood_on_grid(model, observations.front(), first.nodes);
  out.push_back(normalize(std::move(first)));
  const DiscreteTransition t = discretize(params, params.delta);
  for (std::size_t k = 1; k < observations.size(); ++k)
    out.push_back(grid_filter_step(out.back(), t, model, observations[k], fixed_nodes));
  return out;
}

/// Grid filter from a Dirac initial law: pi_0 is the point itself (not representable on a
/// grid), so the returned sequence holds pi_1..pi_k.
inline std::vector<GridDensity> grid_filter_run_from_point(double theta, const ModelParams& params,
                                                           const LikelihoodModel& model,
                                                           const std::vector<Observation>& observations,
                                                           const Vec& nodes) {
  std::vector<GridDensity> out;
  if (observations.size() < 2) return out;
  const DiscreteTransition t = discretize(params, params.delta);
  GridDensity first = grid_predict_from_point(theta, t, nodes);
  first.log_values += log_likelihood_on_grid(model, observations[1], nodes);
  out.push_back(normalize(std::move(first)));
  for (std::size_t k = 2; k < observations.size(); ++k)
    out.push_back(grid_filter_step(out.back(), t, model, observations[k], nodes));
  return out;
}

}  // namespace wcf
