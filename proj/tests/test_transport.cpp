#include <gtest/gtest.h>

#include <algorithm>
#include <numbers>
#include <random>

#include "wcf/transport.hpp"

using namespace wcf;

namespace {

// Minimum over all N! assignments of (sum |x_i - y_sigma(i)|^q / N)^{1/q}.
double brute_force(const Mat& a, const Mat& b, double q) {
  std::vector<int> perm(static_cast<std::size_t>(a.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) s += std::pow((a.row(i) - b.row(perm[static_cast<std::size_t>(i)])).norm(), q);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / static_cast<double>(a.rows()), 1.0 / q);
}

Mat random_cloud(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat m(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < p; ++c) m(i, c) = nd(rng);
  return m;
}

std::vector<double> column(const Mat& m) { return {m.data(), m.data() + m.rows()}; }

}  // namespace

TEST(Wq1d, IdenticalAndShifted) {
  std::vector<double> a = {0.3, -1.0, 2.0, 0.0};
  EXPECT_EQ(wq_1d(a, a, 1), 0.0);
  std::vector<double> b = a;
  for (double& x : b) x += 1.25;
  for (double q : {1.0, 2.0, 3.5}) EXPECT_NEAR(wq_1d(a, b, q), 1.25, 1e-14);
  EXPECT_THROW(wq_1d(a, {1.0}, 1), SizeError);
  EXPECT_THROW(wq_1d(a, a, 0.5), InvalidParameter);
}

TEST(Wq1d, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index n = 1 + trial % 8;
    Mat a = random_cloud(n, 1, rng), b = random_cloud(n, 1, rng);
    for (double q : {1.0, 2.0}) EXPECT_NEAR(wq_1d(column(a), column(b), q), brute_force(a, b, q), 1e-12);
  }
}

TEST(WqExact, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + trial % 8, p = 1 + trial % 3;
    Mat a = random_cloud(n, p, rng), b = random_cloud(n, p, rng);
    const double q = trial % 2 ? 2.0 : 1.0;
    EXPECT_NEAR(wq_exact(a, b, q).cost, brute_force(a, b, q), 1e-12);
  }
}

TEST(WqExact, IdenticalCloudsAndOneDimension) {
  std::mt19937_64 rng(2);
  Mat a = random_cloud(6, 2, rng);
  const auto plan = wq_exact(a, a, 2);
  EXPECT_EQ(plan.cost, 0.0);
  for (std::size_t i = 0; i < plan.assignment.size(); ++i) EXPECT_EQ(plan.assignment[i], static_cast<Eigen::Index>(i));
  Mat x = random_cloud(7, 1, rng), y = random_cloud(7, 1, rng);
  EXPECT_NEAR(wq_exact(x, y, 1).cost, wq_1d(column(x), column(y), 1), 1e-12);
  EXPECT_THROW(wq_exact(Mat::Zero(2049, 1), Mat::Zero(2049, 1), 1), SizeError);
  EXPECT_THROW(wq_exact(Mat::Zero(3, 1), Mat::Zero(4, 1), 1), SizeError);
}

TEST(WqExact, AssignmentIsAPermutationAndCostIsConsistent) {
  std::mt19937_64 rng(23);
  Mat a = random_cloud(60, 3, rng), b = random_cloud(60, 3, rng);
  const auto plan = wq_exact(a, b, 1);
  std::vector<Eigen::Index> sorted = plan.assignment;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], static_cast<Eigen::Index>(i));
  double s = 0;
  for (Eigen::Index i = 0; i < 60; ++i) s += (a.row(i) - b.row(plan.assignment[static_cast<std::size_t>(i)])).norm();
  EXPECT_NEAR(plan.cost, s / 60, 1e-14);
}

TEST(SlicedWq, IdentityOneDimensionAndTranslation) {
  std::mt19937_64 rng(4);
  Mat a = random_cloud(100, 3, rng);
  EXPECT_EQ(sliced_wq(a, a, 1, 20, 1), 0.0);
  Mat x = random_cloud(50, 1, rng), y = random_cloud(50, 1, rng);
  for (std::uint64_t seed : {1u, 2u, 99u}) EXPECT_NEAR(sliced_wq(x, y, 2, 5, seed), wq_1d(column(x), column(y), 2), 1e-14);
  // A translation by c projects to |<u, c>|; on the unit sphere in R^3, E|<u, c>| = |c| / 2.
  Vec c(3);
  c << 1.0, -2.0, 0.5;
  Mat b = a.rowwise() + c.transpose();
  const double got = sliced_wq(a, b, 1, 10000, 5);
  EXPECT_LE(got, c.norm());
  EXPECT_NEAR(got, c.norm() / 2, 0.01 * c.norm() / 2);
}

TEST(WqGrid1d, IdentityAndGaussianOracles) {
  const Vec nodes = uniform_nodes(-12, 12, 4001);
  const auto f = gaussian_grid(nodes, 0.4, 1.0);
  EXPECT_NEAR(wq_grid_1d(f, f, 1), 0.0, 1e-15);
  const auto g = gaussian_grid(nodes, -0.9, 1.0);
  EXPECT_NEAR(wq_grid_1d(f, g, 1), 1.3, 1e-4);
  EXPECT_NEAR(wq_grid_1d(f, g, 2), 1.3, 1e-4);
  const auto h = gaussian_grid(nodes, -0.2, 2.25);
  EXPECT_NEAR(wq_grid_1d(f, h, 2), std::hypot(0.6, 0.5), 1e-4);
}

TEST(WqGrid1d, MatchesMidpointQuantileRule) {
  // Independent oracle: 10^4-point midpoint rule on the quantile functions, inverted segment by segment.
  const Vec nodes = uniform_nodes(-10, 10, 1001);
  GridDensity f = gaussian_grid(nodes, 0.0, 1.0);
  GridDensity g{nodes, Vec(nodes.size()), false};
  for (Eigen::Index i = 0; i < nodes.size(); ++i) g.log_values(i) = -std::abs(nodes(i) - 0.5) - 0.1 * nodes(i) * nodes(i);
  g = normalize(g);
  auto cdf = [&](const GridDensity& d) {
    Vec c(d.size());
    c(0) = 0;
    for (Eigen::Index i = 1; i < d.size(); ++i)
      c(i) = c(i - 1) + 0.5 * (nodes(i) - nodes(i - 1)) * (std::exp(d.log_values(i - 1)) + std::exp(d.log_values(i)));
    return Vec(c / c(d.size() - 1));
  };
  auto quantile = [&](const Vec& c, double u) {
    const auto it = std::upper_bound(c.data(), c.data() + c.size(), u);
    const auto i = std::clamp<Eigen::Index>(it - c.data(), 1, c.size() - 1);
    const double span = c(i) - c(i - 1);
    return span > 0 ? nodes(i - 1) + (nodes(i) - nodes(i - 1)) * (u - c(i - 1)) / span : nodes(i - 1);
  };
  const Vec cf = cdf(f), cg = cdf(g);
  const int m = 10000;
  double acc = 0;
  for (int i = 0; i < m; ++i) {
    const double u = (i + 0.5) / m;
    acc += std::abs(quantile(cf, u) - quantile(cg, u)) / m;
  }
  // The midpoint rule itself is only accurate to about 1e-4 near the steep tail quantiles.
  EXPECT_NEAR(wq_grid_1d(f, g, 1), acc, 1e-4);
}

TEST(WqGrid1d, RejectsUnnormalized) {
  const Vec nodes = uniform_nodes(-5, 5, 101);
  GridDensity f{nodes, Vec::Zero(nodes.size()), false};
  EXPECT_THROW(wq_grid_1d(f, f, 1), InvalidParameter);
}
