#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hdsa/oracle1d.hpp"
#include "hdsa/rng.hpp"
#include "test_support.hpp"

using hdsa::ScalarProblem;
using test_support::rel_err;

namespace {

// Synthetic data from a fixed truth, reproducible across cases.
Eigen::VectorXd make_data(const ScalarProblem& p, double m_true, double noise_scale,
                          std::uint64_t seed) {
  const auto xs = p.effective_sensors();
  hdsa::Gaussian gauss(seed);
  Eigen::VectorXd y(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k)
    y[k] = hdsa::forward_1d(p, m_true, p.theta_nominal, xs[k]) +
           noise_scale * p.noise_std * gauss();
  return y;
}

double central(double plus, double minus, double h) { return (plus - minus) / (2.0 * h); }

}  // namespace

TEST_CASE("default sensors sit at the first six sevenths of pi") {
  ScalarProblem p;
  const auto xs = p.effective_sensors();
  REQUIRE(xs.size() == 6);
  for (int k = 1; k <= 6; ++k) CHECK(xs[k - 1] == doctest::Approx(k * M_PI / 7.0));
  p.sensors = {0.5, 1.5};
  CHECK(p.effective_sensors() == std::vector<double>{0.5, 1.5});
}

TEST_CASE("the two modes separate under the reflection x -> pi - x") {
  // sin is symmetric about pi/2 while sin(2x) is antisymmetric, so the sum
  // and difference of reflected evaluations isolate the two modes
  // analytically. Each evaluation still rounds at eps * |F|, and whichever
  // mode is smaller at the test point absorbs that noise, so the bounds sit
  // a couple of orders above eps rather than at it.
  for (bool consistent : {false, true}) {
    ScalarProblem p;
    p.consistent_forward = consistent;
    const double m = 1.1, theta = -0.25;
    for (double x : {0.3, 0.9, 1.4}) {
      const double here = hdsa::forward_1d(p, m, theta, x);
      const double there = hdsa::forward_1d(p, m, theta, M_PI - x);
      const double first = std::exp(-std::exp(m)) * std::sin(x);
      CHECK(rel_err(0.5 * (here + there), first) <= 1e-12);
      const double second = consistent
                                ? std::exp(theta) * std::exp(-4.0 * std::exp(m))
                                : std::exp(-4.0 * theta * std::exp(m));
      CHECK(rel_err(0.5 * (here - there), second * std::sin(2.0 * x)) <= 1e-11);
    }
  }
}

TEST_CASE("closed-form forward derivatives match central differences") {
  const double h = 1e-6;
  for (bool consistent : {false, true}) {
    ScalarProblem p;
    p.consistent_forward = consistent;
    // Points where the variant's second mode is not microscopic next to the
    // first: exp(-4 exp(m)) needs small m, exp(-4 theta exp(m)) does not.
    const std::vector<std::pair<double, double>> points =
        consistent ? std::vector<std::pair<double, double>>{{0.1, -0.3}, {-0.5, 0.2}}
                   : std::vector<std::pair<double, double>>{{1.3, -0.3}, {0.7, 0.2}};
    for (auto [m, theta] : points) {
      for (double x : {0.4, 1.0, 2.2}) {
        const double dm = central(hdsa::forward_1d(p, m + h, theta, x),
                                  hdsa::forward_1d(p, m - h, theta, x), h);
        CHECK(rel_err(hdsa::forward_1d_dm(p, m, theta, x), dm) <= 1e-8);

        const double dmm = central(hdsa::forward_1d_dm(p, m + h, theta, x),
                                   hdsa::forward_1d_dm(p, m - h, theta, x), h);
        CHECK(rel_err(hdsa::forward_1d_dmm(p, m, theta, x), dmm) <= 1e-7);

        // The first mode is theta-independent and can bury the second mode,
        // so differencing in theta directly loses digits to cancellation.
        // The reflected combination (F(x) - F(pi - x)) / 2 cancels the first
        // mode analytically, but each evaluation still rounds at eps * |F|,
        // so the difference keeps an absolute noise floor of that size. The
        // test points above keep the second mode large enough that the floor
        // sits well below the tolerances.
        auto reflected = [&](double th) {
          return 0.5 * (hdsa::forward_1d(p, m, th, x) -
                        hdsa::forward_1d(p, m, th, M_PI - x));
        };
        auto reflected_dm = [&](double th) {
          return 0.5 * (hdsa::forward_1d_dm(p, m, th, x) -
                        hdsa::forward_1d_dm(p, m, th, M_PI - x));
        };
        const double dth = central(reflected(theta + h), reflected(theta - h), h);
        CHECK(rel_err(hdsa::forward_1d_dtheta(p, m, theta, x), dth) <= 1e-8);

        const double dmth = central(reflected_dm(theta + h), reflected_dm(theta - h), h);
        CHECK(rel_err(hdsa::forward_1d_dmtheta(p, m, theta, x), dmth) <= 1e-7);
      }
    }
  }
}

TEST_CASE("objective derivatives match central differences") {
  ScalarProblem p;
  const Eigen::VectorXd y = make_data(p, 1.45, 0.02, 5);
  const double m = 1.2, theta = p.theta_nominal, h = 1e-6;

  const double g = hdsa::objective_1d_dm(p, m, theta, y);
  CHECK(rel_err(g, central(hdsa::objective_1d(p, m + h, theta, y),
                           hdsa::objective_1d(p, m - h, theta, y), h)) <= 1e-7);
  CHECK(rel_err(hdsa::objective_1d_dmm(p, m, theta, y),
                central(hdsa::objective_1d_dm(p, m + h, theta, y),
                        hdsa::objective_1d_dm(p, m - h, theta, y), h)) <= 1e-7);
  CHECK(rel_err(hdsa::objective_1d_dmtheta(p, m, theta, y),
                central(hdsa::objective_1d_dm(p, m, theta + h, y),
                        hdsa::objective_1d_dm(p, m, theta - h, y), h)) <= 1e-7);

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(hdsa::objective_1d(p, m, theta, wrong), std::invalid_argument);
}

TEST_CASE("the MAP point is stationary and matches a fine grid argmax") {
  ScalarProblem p;
  const Eigen::VectorXd y = make_data(p, 1.5, 0.05, 11);
  const double m = hdsa::map_1d(p, p.theta_nominal, y);
  CHECK(std::abs(hdsa::objective_1d_dm(p, m, p.theta_nominal, y)) <= 1e-10);

  const int n = 4001;
  const double lo = 0.0, hi = 2.6;
  double best = lo, best_j = hdsa::objective_1d(p, lo, p.theta_nominal, y);
  for (int i = 1; i < n; ++i) {
    const double mi = lo + (hi - lo) * i / (n - 1);
    const double j = hdsa::objective_1d(p, mi, p.theta_nominal, y);
    if (j < best_j) {
      best_j = j;
      best = mi;
    }
  }
  CHECK(std::abs(m - best) <= (hi - lo) / (n - 1));
}

TEST_CASE("posterior density ratios reproduce the objective differences") {
  ScalarProblem p;
  const Eigen::VectorXd y = make_data(p, 1.3, 0.05, 13);
  Eigen::VectorXd grid(401);
  for (int i = 0; i < grid.size(); ++i) grid[i] = 0.2 + 2.2 * i / (grid.size() - 1.0);

  const Eigen::VectorXd pdf = hdsa::posterior_pdf(p, p.theta_nominal, y, grid);

  // Normalization under the same quadrature that defines it.
  double mass = 0.0;
  for (int i = 0; i + 1 < grid.size(); ++i)
    mass += 0.5 * (pdf[i] + pdf[i + 1]) * (grid[i + 1] - grid[i]);
  CHECK(rel_err(mass, 1.0) <= 1e-12);

  // Pointwise ratios are an independent check that does not depend on the
  // normalizer at all: pdf_i / pdf_j must equal exp(J_j - J_i).
  const double j_ref = hdsa::objective_1d(p, grid[200], p.theta_nominal, y);
  for (int i : {17, 111, 222, 333}) {
    const double expected =
        std::exp(j_ref - hdsa::objective_1d(p, grid[i], p.theta_nominal, y));
    CHECK(rel_err(pdf[i] / pdf[200], expected) <= 1e-12);
  }

  CHECK_THROWS_AS(hdsa::posterior_pdf(p, 0.0, y, grid.head(1).eval()),
                  std::invalid_argument);
}

TEST_CASE("a flat likelihood hands the posterior back to the prior") {
  ScalarProblem p;
  p.noise_std = 1e12;
  const Eigen::VectorXd y = make_data(p, 1.5, 0.0, 17);

  CHECK(std::abs(hdsa::map_1d(p, p.theta_nominal, y) - p.prior_mean) <= 1e-8);
  CHECK(std::abs(hdsa::scalar_map_sensitivity(p, p.theta_nominal, y)) <= 1e-15);

  Eigen::VectorXd grid(801);
  for (int i = 0; i < grid.size(); ++i) grid[i] = 0.0 + 2.6 * i / (grid.size() - 1.0);
  const Eigen::VectorXd pdf = hdsa::posterior_pdf(p, p.theta_nominal, y, grid);
  // Density ratios are free of the window-truncation constant, so they probe
  // the prior shape directly.
  for (int i : {100, 400, 700}) {
    const double gauss_ratio =
        std::exp(-0.5 * ((grid[i] - p.prior_mean) * (grid[i] - p.prior_mean) -
                         (grid[401] - p.prior_mean) * (grid[401] - p.prior_mean)) /
                 p.prior_variance);
    CHECK(rel_err(pdf[i] / pdf[401], gauss_ratio) <= 1e-9);
  }
}

TEST_CASE("map sensitivity formula agrees with re-solved finite differences") {
  for (bool consistent : {false, true}) {
    ScalarProblem p;
    p.consistent_forward = consistent;
    double m_true = 1.4;
    if (consistent) {
      // The amplitude-variant second mode decays like exp(-4 exp(m)), so its
      // theta channel only carries signal for small log-diffusivities and a
      // noise level on the scale of that mode.
      p.prior_mean = 0.0;
      p.noise_std = 0.05;
      m_true = 0.1;
    }
    const Eigen::VectorXd y = make_data(p, m_true, 0.05, 19);
    const double theta = p.theta_nominal;

    const double formula = hdsa::scalar_map_sensitivity(p, theta, y);
    const double h = 1e-6;
    const double fd =
        central(hdsa::map_1d(p, theta + h, y), hdsa::map_1d(p, theta - h, y), h);
    CHECK(std::abs(formula - fd) <= 1e-6 * std::max(1.0, std::abs(formula)));
    CHECK(std::abs(formula) > 1e-6);  // the channel is genuinely active
  }
}

TEST_CASE("a zero second mode freezes theta out of every sensitivity") {
  ScalarProblem p;
  p.second_mode_scale = 0.0;
  const Eigen::VectorXd y = make_data(p, 1.4, 0.05, 23);

  CHECK(hdsa::scalar_map_sensitivity(p, p.theta_nominal, y) == 0.0);
  hdsa::ScalarHdsaResult r = hdsa::scalar_hdsa(p, 5, 29);
  CHECK(r.risk_sensitivity == 0.0);
  CHECK(r.fd_risk_sensitivity == 0.0);
  CHECK(r.map_sensitivity == 0.0);
  CHECK(r.fd_map_sensitivity == 0.0);
  CHECK(r.bayes_risk > 0.0);  // the inverse problem itself is still nontrivial
}

TEST_CASE("both pipeline routes agree and runs are seed deterministic") {
  ScalarProblem p;
  hdsa::ScalarHdsaResult a = hdsa::scalar_hdsa(p, 10, 101);
  hdsa::ScalarHdsaResult b = hdsa::scalar_hdsa(p, 10, 101);
  CHECK(a.bayes_risk == b.bayes_risk);
  CHECK(a.risk_sensitivity == b.risk_sensitivity);
  CHECK(a.draws == b.draws);

  CHECK(std::abs(a.risk_sensitivity - a.fd_risk_sensitivity) <=
        1e-6 * std::max(1.0, std::abs(a.risk_sensitivity)));
  CHECK(std::abs(a.map_sensitivity - a.fd_map_sensitivity) <=
        1e-6 * std::max(1.0, std::abs(a.map_sensitivity)));
  CHECK(a.bayes_risk > 0.0);

  hdsa::ScalarHdsaResult c = hdsa::scalar_hdsa(p, 10, 102);
  CHECK(a.draws != c.draws);

  CHECK_THROWS_AS(hdsa::scalar_hdsa(p, 0, 1), std::invalid_argument);
}

TEST_CASE("perturbing theta moves the posterior peak and its spread") {
  ScalarProblem p;
  const Eigen::VectorXd y = make_data(p, 1.35, 0.05, 31);
  Eigen::VectorXd grid(2001);
  for (int i = 0; i < grid.size(); ++i) grid[i] = 0.0 + 2.6 * i / (grid.size() - 1.0);

  auto moments = [&](double theta) {
    const Eigen::VectorXd pdf = hdsa::posterior_pdf(p, theta, y, grid);
    double mean = 0.0, second = 0.0;
    for (int i = 0; i + 1 < grid.size(); ++i) {
      const double dx = grid[i + 1] - grid[i];
      mean += 0.5 * (grid[i] * pdf[i] + grid[i + 1] * pdf[i + 1]) * dx;
      second += 0.5 * (grid[i] * grid[i] * pdf[i] +
                       grid[i + 1] * grid[i + 1] * pdf[i + 1]) *
                dx;
    }
    return std::pair{mean, std::sqrt(std::max(0.0, second - mean * mean))};
  };

  const auto [mean0, std0] = moments(-0.30);
  const auto [mean1, std1] = moments(-0.29);
  const double map0 = hdsa::map_1d(p, -0.30, y);
  const double map1 = hdsa::map_1d(p, -0.29, y);

  CHECK(std::abs(map1 - map0) > 1e-5);
  CHECK(std::abs(mean1 - mean0) > 1e-5);
  CHECK(std::abs(std1 - std0) > 1e-6);
  // The direction of the peak shift follows the sensitivity formula.
  const double predicted = hdsa::scalar_map_sensitivity(p, -0.30, y) * 0.01;
  CHECK(std::abs((map1 - map0) - predicted) <= 0.2 * std::abs(predicted));
}
