// Acceptance suite: one PASS/FAIL line per criterion. Arguments select criteria by number
// (e.g. `acceptance 1 6`); with none, all run. Exit status is 0 iff every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "wcf/wcf.hpp"

using namespace wcf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

ModelParams scalar_model(double beta, double sigma) {
  return make_model(Vec::Zero(1), Mat::Constant(1, 1, beta), sigma, 1.0);
}

std::vector<Observation> binary_obs(int count, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<Observation> out;
  for (int k = 0; k < count; ++k) out.push_back({k, Vec::Constant(1, coin(rng) ? 1.0 : 0.0)});
  return out;
}

LikelihoodModel logistic(double x) { return LikelihoodModel::logistic({Mat::Constant(1, 1, x)}); }

const Vec& wide_nodes() {
  static const Vec nodes = uniform_nodes(-12, 12, 2001);
  return nodes;
}

Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = nd(rng);
  return m;
}

// Squared W2 between Gaussians by the Bures formula, computed with Eigen's matrix square root.
double bures_w2_squared(const GaussianBelief& a, const GaussianBelief& b) {
  const Mat ra = symmetrize(a.cov).sqrt();
  const Mat cross = symmetrize(ra * b.cov * ra).sqrt();
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2 * cross.trace();
}

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

ExperimentReport run(const nlohmann::json& j) { return run_experiment(config_from_json(j)); }

std::string config_path(const std::string& name) { return std::string(WCF_CONFIG_DIR) + "/" + name; }

// ---------------------------------------------------------------------------------------------

Outcome rate_closed_forms() {
  const auto t0 = Clock::now();
  const double delta = 1.0;
  double worst = 0;
  for (double lam : {-1.0, 0.0, 0.5, 2.0})
    for (double s : {0.5, 1.0, 2.0})
      for (double lg : {0.5, 1.0, 3.0}) {
        // exp(-lam D) / (1 + s^2 lg int_0^D e^{-2 lam t} dt), so the exponent is lam D + log(1 + ...).
        const double integral = lam == 0 ? delta : -std::expm1(-2 * lam * delta) / (2 * lam);
        const double want = lam * delta + std::log1p(s * s * lg * integral);
        const double got = step_exponent(make_model(Vec::Zero(2), -lam * Mat::Identity(2, 2), s, delta), lg);
        worst = std::max(worst, std::abs(got - want));
      }
  double worst_prod = 0;
  std::vector<double> seq;
  for (int j = 1; j <= 12; ++j) seq.push_back(0.2 * j);
  for (double s : {0.5, 1.0, 2.0}) {
    const auto rp = cumulative_bound(make_model(Vec::Zero(3), Mat::Zero(3, 3), s, delta), seq);
    double prod = 1;
    for (int k = 1; k <= 12; ++k) {
      prod /= 1 + s * s * seq[static_cast<std::size_t>(k - 1)] * delta;
      worst_prod = std::max(worst_prod, std::abs(rp.factor(k) - prod));
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-8 && worst_prod <= 1e-8 && t < 1.0,
          "step exponent max err " + fmt(worst) + ", zero-rate product max err " + fmt(worst_prod) +
              " (tol 1e-8), " + fmt(t) + " s (limit 1 s)"};
}

Outcome kalman_domination() {
  const auto t0 = Clock::now();
  const int dims[] = {1, 2, 5, 10};
  const double rates[] = {0.5, 0.2, 0.05, -0.05, -0.1};
  double worst_excess = -std::numeric_limits<double>::infinity(), worst_bures = 0;
  int models = 0;
  for (int p : dims)
    for (double lam : rates) {
      std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(models++));
      const auto params = make_model(Vec::Zero(p), random_beta(p, lam, rng), 0.6 + 0.6 * std::uniform_real_distribution<>()(rng), 1.0);
      const auto model = random_gaussian_likelihood(p, rng);
      const int k = 50;
      const auto obs = generate_observations(params, model, Vec::Zero(p), k, 7 + static_cast<std::uint64_t>(models));
      const Vec theta = Vec::Constant(p, 1 / std::sqrt(static_cast<double>(p)));
      const auto fa = filter_run(GaussianBelief::dirac(theta), params, model, obs);
      const auto fb = filter_run(GaussianBelief::dirac(-theta), params, model, obs);
      std::vector<double> seq;
      for (int j = 1; j <= k; ++j) seq.push_back(model.lambda_g(j));
      const auto rp = cumulative_bound(params, seq);
      for (int j = 0; j <= k; ++j) {
        const auto js = static_cast<std::size_t>(j);
        const double d = gaussian_w2(fa[js], fb[js]);
        // Compared squared: the trace term cancels to roundoff, which a square root would amplify.
        const double scale = 1 + fa[js].cov.trace() + fb[js].cov.trace();
        worst_bures = std::max(worst_bures, std::abs(d * d - bures_w2_squared(fa[js], fb[js])) / scale);
        worst_excess = std::max(worst_excess, d - rp.factor(j) * 2.0);
      }
    }
  const double t = seconds_since(t0);
  return {worst_excess <= 1e-10 && worst_bures <= 1e-10 && t < 10.0,
          std::to_string(models) + " models, max (W2 - bound) " + fmt(worst_excess) + " (tol 1e-10), squared W2 vs Bures oracle " +
              fmt(worst_bures) + ", " + fmt(t) + " s (limit 10 s)"};
}

Outcome tightness() {
  double worst = 0;
  int cases = 0;
  for (int p : {1, 3, 6})
    for (double lam : {0.3, 1.0, 1.7}) {
      std::mt19937_64 rng(50 + static_cast<std::uint64_t>(cases++));
      const auto params = make_model(Vec::Zero(p), -lam * Mat::Identity(p, p), 0.0, 1.0);
      const auto model = random_gaussian_likelihood(p, rng);
      const auto obs = generate_observations(params, model, Vec::Zero(p), 20, 3);
      Vec theta = random_matrix(p, 1, rng).col(0), vartheta = random_matrix(p, 1, rng).col(0);
      const auto fa = filter_run(GaussianBelief::dirac(theta), params, model, obs);
      const auto fb = filter_run(GaussianBelief::dirac(vartheta), params, model, obs);
      std::vector<double> seq;
      for (int j = 1; j <= 20; ++j) seq.push_back(model.lambda_g(j));
      const auto rp = cumulative_bound(params, seq);
      for (int k = 0; k <= 20; ++k) {
        const double exact = std::exp(-k * lam) * (theta - vartheta).norm();
        const double d = gaussian_w2(fa[static_cast<std::size_t>(k)], fb[static_cast<std::size_t>(k)]);
        worst = std::max({worst, std::abs(d / exact - 1), std::abs(rp.factor(k) * (theta - vartheta).norm() / exact - 1)});
      }
    }
  return {worst <= 1e-10, std::to_string(cases) + " noiseless models, max |ratio - 1| " + fmt(worst) + " (tol 1e-10)"};
}

Outcome tensor_invariance() {
  double worst_gap = 0;
  bool dominated = true;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int m = 0; m < 10; ++m) {
    const int p = 1 + m % 3;
    const double lam = -0.1 + 0.9 * u(rng), sigma = 0.5 + u(rng);
    const auto params = make_model(Vec::Zero(p), random_beta(p, lam, rng), sigma, 1.0);
    const auto model = random_gaussian_likelihood(p, rng);
    std::vector<double> seq(30, model.lambda_g()), dseq(30, tensor_double(model).lambda_g());
    const auto a = cumulative_bound(params, seq), b = cumulative_bound(tensor_double(params), dseq);
    for (int k = 0; k <= 30; ++k) worst_gap = std::max(worst_gap, std::abs(a.factor(k) - b.factor(k)));
    // Doubled-model Kalman rows against the base model's bound column.
    const auto rep = run({{"scenario", "tensor_invariance"},
                          {"model", {{"dim", p}, {"beta", "random"}, {"lambda_sig", lam}, {"sigma", sigma}}},
                          {"likelihood", {{"kind", "gaussian_linear"}, {"random", true}}},
                          {"horizon", 30},
                          {"seed", 300 + m}});
    dominated = dominated && rep.all_pass();
  }
  return {worst_gap <= 1e-12 && dominated,
          "10 models, max bound gap " + fmt(worst_gap) + " (tol 1e-12), doubled Kalman dominated: " +
              (dominated ? "yes" : "no")};
}

Outcome pathwise_coupling() {
  const auto t0 = Clock::now();
  const auto one = run({{"scenario", "coupling_pathwise"},
                        {"model", {{"dim", 1}, {"beta", -0.6}, {"sigma", 1.0}}},
                        {"likelihood", {{"kind", "gaussian_linear"}, {"H", 1.2}, {"R", 0.5}}},
                        {"seed", 11},
                        {"options", {{"paths", 1000}, {"dt_fraction", 1e-3}, {"slack", 10}}}});
  auto three_cfg = load_config(config_path("couple.json"));
  three_cfg.options["paths"] = 1000;
  three_cfg.options["dt_fraction"] = 1e-3;
  const auto three = run_experiment(three_cfg);
  const double t = seconds_since(t0);
  const double worst = std::max(one.metadata.at("max_ratio_over_time").get<double>(),
                                three.metadata.at("max_ratio_over_time").get<double>());
  const bool ok = one.all_pass() && three.all_pass() && one.rows.size() == 1000 && three.rows.size() == 1000;
  return {ok && t < 30.0, "2000 paths (1-D and 3-D), max rate-normalized ratio " + fmt(worst) +
                              " (limit 1 + 10 dt = 1.01), " + fmt(t) + " s (limit 30 s)"};
}

Outcome pf_contraction() {
  std::ostringstream detail;
  bool ok = true;
  for (const char* name : {"pf_logistic_1d.json", "pf_logistic_2d.json"}) {
    const auto t0 = Clock::now();
    const auto c = load_config(config_path(name));
    const auto rep = run_experiment(c);
    const double t = seconds_since(t0);
    const double lam = rep.metadata.at("lambda_sig").get<double>();
    // Test-side bound: e^{-k Delta lambda_sig} (1 + 0.1) on the median ratio for k >= 5.
    double worst = 0;
    bool pass = std::abs(lam - 0.5) < 1e-12 && c.particles == (1 << 14) && c.replicates == 32 && c.horizon == 30;
    for (const auto& row : rep.rows) {
      if (row.k < 5) continue;
      const double ratio = row.distance / 2.0;
      const double limit = std::exp(-row.k * lam) * 1.1;
      worst = std::max(worst, ratio / limit);
      pass = pass && ratio <= limit;
    }
    pass = pass && t < 300.0;
    ok = ok && pass;
    detail << (c.model.value("dim", 1)) << "-D " << (pass ? "pass" : "FAIL") << " (worst ratio/limit " << fmt(worst)
           << ", " << fmt(t) << " s); ";
  }
  detail << "limit e^{-k lambda_sig}(1.1), N=2^14, 32 replicates, k=30";
  return {ok, detail.str()};
}

Outcome grid_identities() {
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // R-kernel composition vs direct grid filter from a point mass.
  double worst_compose = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto params = scalar_model(-0.5 - 0.5 * u(rng), 0.7 + 0.5 * u(rng));
    const auto m = logistic(0.5 + 1.5 * u(rng));
    const int k = 3 + trial % 4;
    const auto obs = binary_obs(k + 1, rng);
    const auto all = phi_backward_all(params, m, obs, k, wide_nodes());
    const std::vector<BackwardWeight> weights(all.begin() + 1, all.end());
    const double theta = 4 * u(rng) - 2;
    const auto composed = r_kernel_compose(weights, theta, params, wide_nodes());
    const auto filtered = grid_filter_run_from_point(theta, params, m, obs, wide_nodes());
    worst_compose = std::max(worst_compose, wq_grid_1d(composed, filtered.back(), 1));
  }
  // Eigen-relation residual.
  double worst_eigen = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto params = scalar_model(-0.5 - 0.5 * u(rng), 0.7 + 0.5 * u(rng));
    const auto m = logistic(0.5 + 1.5 * u(rng));
    const int k = 6;
    const auto obs = binary_obs(k + 1, rng);
    const auto state = build_smoothing_state(params, m, obs, k, wide_nodes());
    auto weights = phi_backward_all(params, m, obs, k, wide_nodes());
    normalize_weights(weights, state);
    for (int j = 1; j <= k; ++j)
      worst_eigen = std::max(worst_eigen, eigen_residual(state, params, m, obs, weights[static_cast<std::size_t>(j)],
                                                         weights[static_cast<std::size_t>(j - 1)]));
  }
  // Log-concavity: backward weights, transition of concave profiles, Prekopa marginals.
  int lc_pass = 0;
  const Vec& x = wide_nodes();
  for (int trial = 0; trial < 50; ++trial) {
    const auto params = scalar_model(-0.5 - 0.5 * u(rng), 0.5 + 0.7 * u(rng));
    const bool gaussian = trial % 2 == 1;
    const auto m = gaussian ? LikelihoodModel::gaussian(Mat::Constant(1, 1, 0.5 + u(rng)), Mat::Constant(1, 1, 0.3 + u(rng)))
                            : logistic(0.3 + 2 * u(rng));
    std::vector<Observation> obs;
    for (int k = 0; k < 5; ++k) obs.push_back({k, Vec::Constant(1, gaussian ? 2 * u(rng) - 1 : (u(rng) < 0.5 ? 0.0 : 1.0))});
    bool ok = true;
    for (const auto& w : phi_backward_all(params, m, obs, 4, x))
      ok = ok && logconcavity_check(x, w.log_phi, w.j == w.k ? m.lambda_g() : 0.0).pass;

    double a[3], c[3], b[3];
    for (int i = 0; i < 3; ++i) a[i] = 0.1 + 2 * u(rng), c[i] = 6 * u(rng) - 3, b[i] = 2 * u(rng);
    Vec lf(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double v = std::numeric_limits<double>::infinity();
      for (int q = 0; q < 3; ++q) v = std::min(v, b[q] - a[q] * (x(i) - c[q]) * (x(i) - c[q]));
      lf(i) = v;
    }
    const auto t = discretize(scalar_model(-1.5 * u(rng), 0.5 + u(rng)), 1.0);
    ok = ok && logconcavity_check(x, lf).pass && logconcavity_check(x, backward_apply(x, lf, t).log_values).pass;

    static const Vec xm = uniform_nodes(-6, 6, 601), ym = uniform_nodes(-15, 15, 3001);
    static const Vec wy = trapezoid_weights(ym);
    const double pp = 0.3 + u(rng), rr = 0.3 + u(rng), ss = (2 * u(rng) - 1) * std::sqrt(pp * rr), kk = 2 * u(rng) - 1;
    Vec marginal(xm.size());
    std::vector<double> terms(static_cast<std::size_t>(ym.size()));
    for (Eigen::Index i = 0; i < xm.size(); ++i) {
      for (Eigen::Index j = 0; j < ym.size(); ++j) {
        const double q = 0.5 * (pp * xm(i) * xm(i) + 2 * ss * xm(i) * ym(j) + rr * ym(j) * ym(j));
        terms[static_cast<std::size_t>(j)] = -q - softplus(xm(i) + ym(j) + kk) - softplus(ym(j) - 0.3 * xm(i)) + std::log(wy(j));
      }
      marginal(i) = log_sum_exp(terms);
    }
    ok = ok && logconcavity_check(xm, marginal).pass;
    lc_pass += ok ? 1 : 0;
  }
  return {worst_compose <= 1e-4 && worst_eigen <= 1e-6 && lc_pass == 50,
          "composition W1 " + fmt(worst_compose) + " (tol 1e-4), eigen residual " + fmt(worst_eigen) +
              " (tol 1e-6), log-concavity " + std::to_string(lc_pass) + "/50"};
}

Outcome smoothing_theorem() {
  const auto c = load_config(config_path("smooth.json"));
  const auto rep = run_experiment(c);
  const double lam = 0.5;
  double worst = 0;
  bool ok = c.horizon == 15 && c.option("smoothing_horizon", 0) == 20 && rep.rows.size() == 16;
  for (const auto& row : rep.rows) {
    const double limit = std::exp(-row.k * lam) * (1 + 1e-3);
    const double ratio = row.distance / rep.rows.front().distance;
    worst = std::max(worst, ratio / limit);
    ok = ok && ratio <= limit;
  }
  const double cauchy = rep.metadata.at("cauchy_gap").get<double>();
  ok = ok && cauchy <= 1e-3;
  return {ok, "k <= 15, L = 20, worst ratio/limit " + fmt(worst) + ", horizon truncation gap " + fmt(cauchy) + " (tol 1e-3)"};
}

Outcome transport_oracle() {
  std::mt19937_64 rng(123);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + trial % 8, p = 1 + (trial / 8) % 3;
    const Mat a = random_matrix(n, p, rng), b = random_matrix(n, p, rng);
    const double q = 1 + trial % 3;
    worst = std::max(worst, std::abs(wq_exact(a, b, q).cost - brute_force(a, b, q)));
  }
  return {worst <= 1e-12, "200 instances, max |exact - N! oracle| " + fmt(worst) + " (tol 1e-12)"};
}

Outcome matrix_identity() {
  std::mt19937_64 rng(321);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Mat f = symmetrize(random_matrix(5, 5, rng)), s = symmetrize(random_matrix(5, 5, rng));
    const Vec uu = random_matrix(5, 1, rng).col(0), vv = random_matrix(5, 1, rng).col(0);
    const double scale = (f.norm() + s.norm()) * (uu.squaredNorm() + vv.squaredNorm());
    worst = std::max(worst, matrix_identity_check(f, s, uu, vv) / scale);
  }
  return {worst <= 1e-9, "100 symmetric 5x5 instances, max residual/scale " + fmt(worst) + " (tol 1e-9)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"rate closed forms", rate_closed_forms},
      {"Kalman domination", kalman_domination},
      {"tightness", tightness},
      {"tensor invariance", tensor_invariance},
      {"pathwise coupling", pathwise_coupling},
      {"particle filter contraction", pf_contraction},
      {"grid identities", grid_identities},
      {"smoothing on grid", smoothing_theorem},
      {"exact transport", transport_oracle},
      {"matrix identity", matrix_identity}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: acceptance [criterion 1-%zu ...]\n", criteria.size());
      return 2;
    }
    selected.insert(id);
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    failed += out.pass ? 0 : 1;
    std::printf("AC%-2d %s  %s: %s\n", id, out.pass ? "PASS" : "FAIL", criteria[i].first, out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
