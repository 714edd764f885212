#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace hdsa {

/// One-dimensional diffusion surrogate with a scalar log-diffusivity m and a
/// scalar complementary parameter theta. The forward map at time 1 is
///   F(m, theta, x) = exp(-exp(m)) sin x + c exp(-4 theta exp(m)) sin 2x
/// with c = second_mode_scale. Setting consistent_forward replaces the
/// second mode by  c exp(theta) exp(-4 exp(m)) sin 2x, a variant whose
/// theta enters through the initial amplitude instead of the decay rate.
/// All derivatives are closed-form, so every sensitivity this module
/// produces can be cross-checked by exhaustive finite differences.
struct ScalarProblem {
  double prior_mean = 1.3;
  double prior_variance = 0.1;
  double theta_nominal = -0.3;
  double noise_std = 26.0;
  double second_mode_scale = 1.0;
  bool consistent_forward = false;
  std::vector<double> sensors;  // defaults to k*pi/7, k = 1..6

  std::vector<double> effective_sensors() const;
};

double forward_1d(const ScalarProblem& problem, double m, double theta, double x);

/// Closed-form derivatives of the forward map.
double forward_1d_dm(const ScalarProblem& problem, double m, double theta, double x);
double forward_1d_dmm(const ScalarProblem& problem, double m, double theta, double x);
double forward_1d_dtheta(const ScalarProblem& problem, double m, double theta, double x);
double forward_1d_dmtheta(const ScalarProblem& problem, double m, double theta, double x);

/// Negative log posterior and its m-derivatives at fixed theta and data.
double objective_1d(const ScalarProblem& problem, double m, double theta,
                    const Eigen::VectorXd& y);
double objective_1d_dm(const ScalarProblem& problem, double m, double theta,
                       const Eigen::VectorXd& y);
double objective_1d_dmm(const ScalarProblem& problem, double m, double theta,
                        const Eigen::VectorXd& y);
double objective_1d_dmtheta(const ScalarProblem& problem, double m, double theta,
                            const Eigen::VectorXd& y);

/// Global MAP point: coarse scan for the global basin followed by a
/// safeguarded Newton polish of the stationarity condition.
double map_1d(const ScalarProblem& problem, double theta, const Eigen::VectorXd& y);

/// Posterior density on a grid, normalized by the trapezoid rule.
Eigen::VectorXd posterior_pdf(const ScalarProblem& problem, double theta,
                              const Eigen::VectorXd& y, const Eigen::VectorXd& grid);

/// Scalar MAP sensitivity dm*/dtheta = -J_mtheta / J_mm at the MAP point.
double scalar_map_sensitivity(const ScalarProblem& problem, double theta,
                              const Eigen::VectorXd& y);

struct ScalarHdsaResult {
  double bayes_risk = 0.0;
  double risk_sensitivity = 0.0;      // implicit-function route
  double fd_risk_sensitivity = 0.0;   // exhaustive re-solve route
  double map_sensitivity = 0.0;       // mean |dm*/dtheta| over samples
  double fd_map_sensitivity = 0.0;
  std::vector<double> draws, map_points;
};

/// Full scalar analogue of the sampling pipeline: draws, synthesis at the
/// nominal theta, MAP solves, and both sensitivity routes. data_noise_scale
/// scales the synthesized noise (0 gives noiseless data).
ScalarHdsaResult scalar_hdsa(const ScalarProblem& problem, int n_samples,
                             std::uint64_t seed, double fd_step = 1e-6,
                             double data_noise_scale = 1.0);

}  // namespace hdsa
