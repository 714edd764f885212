#pragma once

#include <Eigen/Core>
#include <string>

namespace hdsa {

/// Auxiliary scalar channels, in the fixed storage order used everywhere:
/// components 0..11 of theta are these, components 12.. are the per-sensor
/// noise levels ("experimental" channel).
namespace aux {
enum Index {
  beta = 0,  // Robin heat transfer coefficient
  s1, s2, s3,           // boundary flux: amplitude, width, center
  f1, f2,               // interior source amplitudes
  w1, w2,               // first source center
  z1, z2,               // second source center
  gamma1, gamma2,       // source orientation angles
  count
};
const char* name(int idx);
int from_name(const std::string& name);  // -1 when unknown
}  // namespace aux

/// Nominal values of the auxiliary scalars plus fixed model constants.
struct AuxNominals {
  double beta = 1.0;
  double s1 = 30.0, s2 = 0.1, s3 = 0.65;
  double f1 = 100.0, f2 = 105.0;
  double w1 = 0.8, w2 = 0.25;
  double z1 = 0.5, z2 = 0.8;
  double gamma1 = -0.25 * 3.14159265358979323846, gamma2 = 0.15;
  double t_amb = 22.0;                     // ambient temperature (not uncertain)
  double sigma_x1 = 0.8, sigma_x2 = 0.1;   // source spreads (not uncertain)

  double get(int idx) const;
  void set(int idx, double value);
};

/// Complementary parameters of the inverse problem. Every uncertain scalar
/// rho is parametrized as  rho = rho_nominal * (1 + a * theta)  with theta
/// dimensionless, so sensitivities w.r.t. theta are comparable across
/// channels. Auxiliary scalars share one scale a; noise levels use a = 1.
class ComplementaryParams {
 public:
  ComplementaryParams(AuxNominals nominals, int n_sensors, double noise_std,
                      double aux_scale = 0.05);

  int n_aux() const { return aux::count; }
  int n_sensors() const { return static_cast<int>(sigma_nominal_.size()); }
  int dim() const { return n_aux() + n_sensors(); }
  const AuxNominals& nominals() const { return nominals_; }
  double aux_scale() const { return aux_scale_; }

  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(const Eigen::VectorXd& theta);
  void set_theta(int j, double value);
  bool theta_is_zero() const { return theta_.isZero(0.0); }
  bool is_experimental(int j) const { return j >= n_aux(); }

  /// Realized auxiliary value:  nominal * (1 + aux_scale * theta_j).
  double aux_value(int idx) const;
  /// Its derivative in theta_j:  nominal * aux_scale.
  double aux_dtheta(int idx) const;

  /// Realized noise standard deviation of one sensor.
  double sigma(int sensor) const;
  double sigma_nominal(int sensor) const { return sigma_nominal_[sensor]; }
  /// Diagonal of the noise precision Gamma^{-1} at the current theta.
  Eigen::VectorXd noise_precision_diag() const;
  /// d/dtheta of one precision diagonal entry:  -2 sigma_nom^-2 (1+theta)^-3.
  double noise_precision_dtheta(int sensor) const;

  /// Name of a theta component ("beta", ..., "sigma_07").
  std::string component_name(int j) const;

 private:
  AuxNominals nominals_;
  double aux_scale_;
  Eigen::VectorXd sigma_nominal_;
  Eigen::VectorXd theta_;
};

}  // namespace hdsa
