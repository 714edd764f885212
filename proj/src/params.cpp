#include "hdsa/params.hpp"

#include <cstdio>
#include <stdexcept>

namespace hdsa {

namespace aux {

namespace {
constexpr const char* kNames[count] = {"beta", "s1", "s2", "s3", "f1", "f2",
                                       "w1",   "w2", "z1", "z2", "gamma1", "gamma2"};
}

const char* name(int idx) {
  if (idx < 0 || idx >= count) throw std::out_of_range("aux::name: bad index");
  return kNames[idx];
}

int from_name(const std::string& n) {
  for (int i = 0; i < count; ++i)
    if (n == kNames[i]) return i;
  return -1;
}

}  // namespace aux

double AuxNominals::get(int idx) const {
  switch (idx) {
    case aux::beta: return beta;
    case aux::s1: return s1;
    case aux::s2: return s2;
    case aux::s3: return s3;
    case aux::f1: return f1;
    case aux::f2: return f2;
    case aux::w1: return w1;
    case aux::w2: return w2;
    case aux::z1: return z1;
    case aux::z2: return z2;
    case aux::gamma1: return gamma1;
    case aux::gamma2: return gamma2;
    default: throw std::out_of_range("AuxNominals::get: bad index");
  }
}

void AuxNominals::set(int idx, double value) {
  switch (idx) {
    case aux::beta: beta = value; break;
    case aux::s1: s1 = value; break;
    case aux::s2: s2 = value; break;
    case aux::s3: s3 = value; break;
    case aux::f1: f1 = value; break;
    case aux::f2: f2 = value; break;
    case aux::w1: w1 = value; break;
    case aux::w2: w2 = value; break;
    case aux::z1: z1 = value; break;
    case aux::z2: z2 = value; break;
    case aux::gamma1: gamma1 = value; break;
    case aux::gamma2: gamma2 = value; break;
    default: throw std::out_of_range("AuxNominals::set: bad index");
  }
}

ComplementaryParams::ComplementaryParams(AuxNominals nominals, int n_sensors,
                                         double noise_std, double aux_scale)
    : nominals_(nominals), aux_scale_(aux_scale) {
  if (n_sensors < 1)
    throw std::invalid_argument("ComplementaryParams: need at least one sensor");
  if (noise_std <= 0.0)
    throw std::invalid_argument("ComplementaryParams: noise_std must be positive");
  sigma_nominal_ = Eigen::VectorXd::Constant(n_sensors, noise_std);
  theta_ = Eigen::VectorXd::Zero(dim());
}

void ComplementaryParams::set_theta(const Eigen::VectorXd& theta) {
  if (theta.size() != dim())
    throw std::invalid_argument("ComplementaryParams::set_theta: size mismatch");
  theta_ = theta;
}

void ComplementaryParams::set_theta(int j, double value) {
  if (j < 0 || j >= dim())
    throw std::out_of_range("ComplementaryParams::set_theta: bad index");
  theta_[j] = value;
}

double ComplementaryParams::aux_value(int idx) const {
  return nominals_.get(idx) * (1.0 + aux_scale_ * theta_[idx]);
}

double ComplementaryParams::aux_dtheta(int idx) const {
  return nominals_.get(idx) * aux_scale_;
}

double ComplementaryParams::sigma(int sensor) const {
  const double s = sigma_nominal_[sensor] * (1.0 + theta_[n_aux() + sensor]);
  if (s <= 0.0)
    throw std::domain_error("ComplementaryParams::sigma: perturbation drives a noise level nonpositive");
  return s;
}

Eigen::VectorXd ComplementaryParams::noise_precision_diag() const {
  Eigen::VectorXd prec(n_sensors());
  for (int j = 0; j < n_sensors(); ++j) {
    const double s = sigma(j);
    prec[j] = 1.0 / (s * s);
  }
  return prec;
}

double ComplementaryParams::noise_precision_dtheta(int sensor) const {
  const double s0 = sigma_nominal_[sensor];
  const double onep = 1.0 + theta_[n_aux() + sensor];
  return -2.0 / (s0 * s0 * onep * onep * onep);
}

std::string ComplementaryParams::component_name(int j) const {
  if (j < 0 || j >= dim())
    throw std::out_of_range("ComplementaryParams::component_name: bad index");
  if (j < n_aux()) return aux::name(j);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sigma_%02d", j - n_aux() + 1);
  return buf;
}

}  // namespace hdsa
