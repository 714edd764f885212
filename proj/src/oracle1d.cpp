#include "hdsa/oracle1d.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "hdsa/rng.hpp"

namespace hdsa {

std::vector<double> ScalarProblem::effective_sensors() const {
  if (!sensors.empty()) return sensors;
  std::vector<double> s(6);
  for (int k = 1; k <= 6; ++k) s[k - 1] = k * M_PI / 7.0;
  return s;
}

double forward_1d(const ScalarProblem& p, double m, double theta, double x) {
  const double e = std::exp(m);
  const double first = std::exp(-e) * std::sin(x);
  if (p.consistent_forward)
    return first + p.second_mode_scale * std::exp(theta) * std::exp(-4.0 * e) *
                       std::sin(2.0 * x);
  return first + p.second_mode_scale * std::exp(-4.0 * theta * e) * std::sin(2.0 * x);
}

double forward_1d_dm(const ScalarProblem& p, double m, double theta, double x) {
  const double e = std::exp(m);
  const double first = -e * std::exp(-e) * std::sin(x);
  if (p.consistent_forward)
    return first + p.second_mode_scale * std::exp(theta) * (-4.0 * e) *
                       std::exp(-4.0 * e) * std::sin(2.0 * x);
  return first + p.second_mode_scale * (-4.0 * theta * e) *
                     std::exp(-4.0 * theta * e) * std::sin(2.0 * x);
}

double forward_1d_dmm(const ScalarProblem& p, double m, double theta, double x) {
  const double e = std::exp(m);
  const double first = (e * e - e) * std::exp(-e) * std::sin(x);
  if (p.consistent_forward)
    return first + p.second_mode_scale * std::exp(theta) * (16.0 * e * e - 4.0 * e) *
                       std::exp(-4.0 * e) * std::sin(2.0 * x);
  return first + p.second_mode_scale *
                     (16.0 * theta * theta * e * e - 4.0 * theta * e) *
                     std::exp(-4.0 * theta * e) * std::sin(2.0 * x);
}

double forward_1d_dtheta(const ScalarProblem& p, double m, double theta, double x) {
  const double e = std::exp(m);
  if (p.consistent_forward)
    return p.second_mode_scale * std::exp(theta) * std::exp(-4.0 * e) * std::sin(2.0 * x);
  return p.second_mode_scale * (-4.0 * e) * std::exp(-4.0 * theta * e) * std::sin(2.0 * x);
}

double forward_1d_dmtheta(const ScalarProblem& p, double m, double theta, double x) {
  const double e = std::exp(m);
  if (p.consistent_forward)
    return p.second_mode_scale * std::exp(theta) * (-4.0 * e) * std::exp(-4.0 * e) *
           std::sin(2.0 * x);
  return p.second_mode_scale * (16.0 * theta * e * e - 4.0 * e) *
         std::exp(-4.0 * theta * e) * std::sin(2.0 * x);
}

namespace {

void check_data(const ScalarProblem& p, const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != p.effective_sensors().size())
    throw std::invalid_argument("oracle1d: data size does not match sensor count");
}

}  // namespace

double objective_1d(const ScalarProblem& p, double m, double theta,
                    const Eigen::VectorXd& y) {
  check_data(p, y);
  const auto xs = p.effective_sensors();
  const double inv_noise = 1.0 / (p.noise_std * p.noise_std);
  double j = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = forward_1d(p, m, theta, xs[k]) - y[k];
    j += 0.5 * r * r * inv_noise;
  }
  const double dm = m - p.prior_mean;
  return j + 0.5 * dm * dm / p.prior_variance;
}

double objective_1d_dm(const ScalarProblem& p, double m, double theta,
                       const Eigen::VectorXd& y) {
  check_data(p, y);
  const auto xs = p.effective_sensors();
  const double inv_noise = 1.0 / (p.noise_std * p.noise_std);
  double g = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = forward_1d(p, m, theta, xs[k]) - y[k];
    g += r * forward_1d_dm(p, m, theta, xs[k]) * inv_noise;
  }
  return g + (m - p.prior_mean) / p.prior_variance;
}

double objective_1d_dmm(const ScalarProblem& p, double m, double theta,
                        const Eigen::VectorXd& y) {
  check_data(p, y);
  const auto xs = p.effective_sensors();
  const double inv_noise = 1.0 / (p.noise_std * p.noise_std);
  double h = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = forward_1d(p, m, theta, xs[k]) - y[k];
    const double fm = forward_1d_dm(p, m, theta, xs[k]);
    h += (fm * fm + r * forward_1d_dmm(p, m, theta, xs[k])) * inv_noise;
  }
  return h + 1.0 / p.prior_variance;
}

double objective_1d_dmtheta(const ScalarProblem& p, double m, double theta,
                            const Eigen::VectorXd& y) {
  check_data(p, y);
  const auto xs = p.effective_sensors();
  const double inv_noise = 1.0 / (p.noise_std * p.noise_std);
  double b = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = forward_1d(p, m, theta, xs[k]) - y[k];
    b += (forward_1d_dtheta(p, m, theta, xs[k]) * forward_1d_dm(p, m, theta, xs[k]) +
          r * forward_1d_dmtheta(p, m, theta, xs[k])) *
         inv_noise;
  }
  return b;
}

double map_1d(const ScalarProblem& p, double theta, const Eigen::VectorXd& y) {
  check_data(p, y);
  // Coarse scan over a wide prior-centered window to find the global basin;
  // the posterior can be multimodal.
  const double half_width = 8.0 * std::sqrt(p.prior_variance);
  const double lo = p.prior_mean - half_width, hi = p.prior_mean + half_width;
  const int n_scan = 801;
  double best_m = lo, best_j = objective_1d(p, lo, theta, y);
  for (int i = 1; i < n_scan; ++i) {
    const double m = lo + (hi - lo) * i / (n_scan - 1);
    const double j = objective_1d(p, m, theta, y);
    if (j < best_j) {
      best_j = j;
      best_m = m;
    }
  }

  // Safeguarded Newton polish within the bracketing scan cells.
  const double cell = (hi - lo) / (n_scan - 1);
  double a = best_m - cell, b = best_m + cell;
  double m = best_m;
  for (int it = 0; it < 200; ++it) {
    const double g = objective_1d_dm(p, m, theta, y);
    if (std::abs(g) <= 1e-13 * std::max(1.0, std::abs(m))) return m;
    const double h = objective_1d_dmm(p, m, theta, y);
    double next = (h > 0.0) ? m - g / h : m;
    if (!(next > a && next < b)) next = 0.5 * (a + b);  // bisection fallback
    if (g > 0.0)
      b = m;
    else
      a = m;
    m = next;
  }
  return m;
}

Eigen::VectorXd posterior_pdf(const ScalarProblem& p, double theta,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& grid) {
  check_data(p, y);
  if (grid.size() < 2) throw std::invalid_argument("posterior_pdf: grid too small");
  Eigen::VectorXd values(grid.size());
  double j_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    values[i] = objective_1d(p, grid[i], theta, y);
    j_min = std::min(j_min, values[i]);
  }
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    values[i] = std::exp(-(values[i] - j_min));
  double mass = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i)
    mass += 0.5 * (values[i] + values[i + 1]) * (grid[i + 1] - grid[i]);
  if (mass <= 0.0) throw std::runtime_error("posterior_pdf: vanishing density mass");
  return values / mass;
}

double scalar_map_sensitivity(const ScalarProblem& p, double theta,
                              const Eigen::VectorXd& y) {
  const double m = map_1d(p, theta, y);
  const double h = objective_1d_dmm(p, m, theta, y);
  if (h <= 0.0)
    throw std::runtime_error("scalar_map_sensitivity: indefinite Hessian at the MAP point");
  return -objective_1d_dmtheta(p, m, theta, y) / h;
}

ScalarHdsaResult scalar_hdsa(const ScalarProblem& p, int n_samples, std::uint64_t seed,
                             double fd_step, double data_noise_scale) {
  if (n_samples < 1) throw std::invalid_argument("scalar_hdsa: need samples");
  const auto xs = p.effective_sensors();
  const double prior_std = std::sqrt(p.prior_variance);
  const double theta = p.theta_nominal;

  ScalarHdsaResult out;
  double risk = 0.0, sens = 0.0, map_abs = 0.0;
  double risk_plus = 0.0, risk_minus = 0.0, fd_map_abs = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    Gaussian draw_gauss(derive_seed(seed, 2ull * i));
    Gaussian noise_gauss(derive_seed(seed, 2ull * i + 1));
    const double m_true = p.prior_mean + prior_std * draw_gauss();
    Eigen::VectorXd y(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k)
      y[k] = forward_1d(p, m_true, theta, xs[k]) +
             data_noise_scale * p.noise_std * noise_gauss();

    const double m_map = map_1d(p, theta, y);
    const double dmap = scalar_map_sensitivity(p, theta, y);
    out.draws.push_back(m_true);
    out.map_points.push_back(m_map);
    risk += (m_map - m_true) * (m_map - m_true);
    sens += dmap * (m_map - m_true);
    map_abs += std::abs(dmap);

    const double m_plus = map_1d(p, theta + fd_step, y);
    const double m_minus = map_1d(p, theta - fd_step, y);
    risk_plus += (m_plus - m_true) * (m_plus - m_true);
    risk_minus += (m_minus - m_true) * (m_minus - m_true);
    fd_map_abs += std::abs((m_plus - m_minus) / (2.0 * fd_step));
  }

  out.bayes_risk = risk / n_samples;
  out.risk_sensitivity = 2.0 * sens / n_samples;
  out.fd_risk_sensitivity = (risk_plus - risk_minus) / (2.0 * fd_step * n_samples);
  out.map_sensitivity = map_abs / n_samples;
  out.fd_map_sensitivity = fd_map_abs / n_samples;
  return out;
}

}  // namespace hdsa
