#include "hdsa/forward.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <stdexcept>

#include "hdsa/rng.hpp"

namespace hdsa {

namespace {

struct Bump {
  double amplitude;
  double cx, cy;
  double gamma;
};

// Inverse covariance of one rotated anisotropic bump.
Eigen::Matrix2d bump_precision(double gamma, double sx1, double sx2) {
  const double c = std::cos(gamma), s = std::sin(gamma);
  const double a = 1.0 / (sx1 * sx1), b = 1.0 / (sx2 * sx2);
  Eigen::Matrix2d m;
  m(0, 0) = c * c * a + s * s * b;
  m(0, 1) = m(1, 0) = s * c * (b - a);
  m(1, 1) = s * s * a + c * c * b;
  return m;
}

Eigen::Matrix2d bump_precision_dgamma(double gamma, double sx1, double sx2) {
  const double a = 1.0 / (sx1 * sx1), b = 1.0 / (sx2 * sx2);
  const double s2 = std::sin(2.0 * gamma), c2 = std::cos(2.0 * gamma);
  Eigen::Matrix2d m;
  m(0, 0) = s2 * (b - a);
  m(0, 1) = m(1, 0) = c2 * (b - a);
  m(1, 1) = s2 * (a - b);
  return m;
}

double bump_value(const Bump& bump, const Eigen::Matrix2d& prec, double x, double y) {
  const Eigen::Vector2d d(x - bump.cx, y - bump.cy);
  return bump.amplitude * std::exp(-0.5 * d.dot(prec * d));
}

Bump first_bump(const ComplementaryParams& p) {
  return {p.aux_value(aux::f1), p.aux_value(aux::w1), p.aux_value(aux::w2),
          p.aux_value(aux::gamma1)};
}

Bump second_bump(const ComplementaryParams& p) {
  return {p.aux_value(aux::f2), p.aux_value(aux::z1), p.aux_value(aux::z2),
          p.aux_value(aux::gamma2)};
}

}  // namespace

Eigen::VectorXd ObservationSet::data(const ComplementaryParams& params) const {
  if (params.n_sensors() != n_y())
    throw std::invalid_argument("ObservationSet::data: sensor count mismatch");
  Eigen::VectorXd y = base;
  for (int j = 0; j < n_y(); ++j)
    y[j] += noise[j] * (1.0 + params.theta()[params.n_aux() + j]);
  return y;
}

ForwardModel::ForwardModel(const Mesh& mesh, std::vector<std::array<double, 2>> sensors)
    : mesh_(&mesh), sensors_(std::move(sensors)) {
  if (sensors_.empty())
    throw std::invalid_argument("ForwardModel: need at least one sensor");
  mass_ = assemble_mass(mesh);
  obs_ = interpolation_matrix(mesh, sensors_);
  robin_mass_ = assemble_boundary_mass(mesh, Side::right);
  flux_mass_ = assemble_boundary_mass(mesh, Side::left);
  robin_rhs_unit_ = robin_mass_ * NodalField::Ones(mesh.num_nodes());
}

NodalField ForwardModel::volume_source(const ComplementaryParams& params) const {
  const Bump b1 = first_bump(params), b2 = second_bump(params);
  const auto& nom = params.nominals();
  const Eigen::Matrix2d p1 = bump_precision(b1.gamma, nom.sigma_x1, nom.sigma_x2);
  const Eigen::Matrix2d p2 = bump_precision(b2.gamma, nom.sigma_x1, nom.sigma_x2);
  NodalField f(mesh_->num_nodes());
  for (int i = 0; i < mesh_->num_nodes(); ++i) {
    const double x = mesh_->nodes(i, 0), y = mesh_->nodes(i, 1);
    f[i] = bump_value(b1, p1, x, y) + bump_value(b2, p2, x, y);
  }
  return f;
}

NodalField ForwardModel::volume_source_dtheta(const ComplementaryParams& params,
                                              int idx) const {
  NodalField df = NodalField::Zero(mesh_->num_nodes());
  const bool first = (idx == aux::f1 || idx == aux::w1 || idx == aux::w2 || idx == aux::gamma1);
  const bool second = (idx == aux::f2 || idx == aux::z1 || idx == aux::z2 || idx == aux::gamma2);
  if (!first && !second) return df;

  const auto& nom = params.nominals();
  const Bump bump = first ? first_bump(params) : second_bump(params);
  const Eigen::Matrix2d prec = bump_precision(bump.gamma, nom.sigma_x1, nom.sigma_x2);
  const Eigen::Matrix2d dprec = bump_precision_dgamma(bump.gamma, nom.sigma_x1, nom.sigma_x2);
  const double chain = params.aux_dtheta(idx);  // d(realized value)/d(theta_idx)

  for (int i = 0; i < mesh_->num_nodes(); ++i) {
    const Eigen::Vector2d d(mesh_->nodes(i, 0) - bump.cx, mesh_->nodes(i, 1) - bump.cy);
    const double shape = std::exp(-0.5 * d.dot(prec * d));  // unit-amplitude bump
    const double val = bump.amplitude * shape;
    switch (idx) {
      case aux::f1:
      case aux::f2:
        df[i] = chain * shape;
        break;
      case aux::w1:
      case aux::z1:
        df[i] = chain * val * (prec * d)[0];
        break;
      case aux::w2:
      case aux::z2:
        df[i] = chain * val * (prec * d)[1];
        break;
      case aux::gamma1:
      case aux::gamma2:
        df[i] = chain * val * (-0.5 * d.dot(dprec * d));
        break;
    }
  }
  return df;
}

NodalField ForwardModel::boundary_flux(const ComplementaryParams& params) const {
  const double s1 = params.aux_value(aux::s1);
  const double s2 = params.aux_value(aux::s2);
  const double s3 = params.aux_value(aux::s3);
  NodalField s = NodalField::Zero(mesh_->num_nodes());
  for (int i = 0; i < mesh_->num_nodes(); ++i) {
    if (mesh_->nodes(i, 0) != 0.0) continue;
    const double r = (mesh_->nodes(i, 1) - s3) / s2;
    s[i] = s1 * std::exp(-r * r);
  }
  return s;
}

NodalField ForwardModel::boundary_flux_dtheta(const ComplementaryParams& params,
                                              int idx) const {
  NodalField ds = NodalField::Zero(mesh_->num_nodes());
  if (idx != aux::s1 && idx != aux::s2 && idx != aux::s3) return ds;
  const double s1 = params.aux_value(aux::s1);
  const double s2 = params.aux_value(aux::s2);
  const double s3 = params.aux_value(aux::s3);
  const double chain = params.aux_dtheta(idx);
  for (int i = 0; i < mesh_->num_nodes(); ++i) {
    if (mesh_->nodes(i, 0) != 0.0) continue;
    const double d = mesh_->nodes(i, 1) - s3;
    const double shape = std::exp(-(d / s2) * (d / s2));
    const double val = s1 * shape;
    if (idx == aux::s1)
      ds[i] = chain * shape;
    else if (idx == aux::s2)
      ds[i] = chain * val * 2.0 * d * d / (s2 * s2 * s2);
    else
      ds[i] = chain * val * 2.0 * d / (s2 * s2);
  }
  return ds;
}

SparseMat ForwardModel::state_operator(const NodalField& m,
                                       const ComplementaryParams& params) const {
  SparseMat a = assemble_weighted_stiffness(*mesh_, m);
  a += params.aux_value(aux::beta) * robin_mass_;
  return a;
}

NodalField ForwardModel::state_rhs(const ComplementaryParams& params) const {
  NodalField b = mass_ * volume_source(params);
  b += flux_mass_ * boundary_flux(params);
  b += params.aux_value(aux::beta) * params.nominals().t_amb * robin_rhs_unit_;
  return b;
}

NodalField ForwardModel::state_rhs_dtheta(const ComplementaryParams& params, int j) const {
  if (params.is_experimental(j)) return NodalField::Zero(mesh_->num_nodes());
  switch (j) {
    case aux::beta:
      return params.aux_dtheta(aux::beta) * params.nominals().t_amb * robin_rhs_unit_;
    case aux::s1:
    case aux::s2:
    case aux::s3:
      return flux_mass_ * boundary_flux_dtheta(params, j);
    default:
      return mass_ * volume_source_dtheta(params, j);
  }
}

NodalField ForwardModel::state_operator_dtheta_apply(const ComplementaryParams& params,
                                                     int j, const NodalField& v) const {
  if (j == aux::beta)
    return params.aux_dtheta(aux::beta) * (robin_mass_ * v);
  return NodalField::Zero(mesh_->num_nodes());
}

NodalField ForwardModel::solve_state(const NodalField& m,
                                     const ComplementaryParams& params,
                                     SolveCounter* counter) const {
  const SparseMat a = state_operator(m, params);
  Eigen::SimplicialLDLT<SparseMat> solver(a);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_state: factorization failed");
  NodalField u = solver.solve(state_rhs(params));
  if (counter) counter->add(1);
  return u;
}

Eigen::VectorXd ForwardModel::forward_map(const NodalField& m,
                                          const ComplementaryParams& params,
                                          SolveCounter* counter) const {
  return observe(solve_state(m, params, counter));
}

ObservationSet ForwardModel::synthesize_data(const NodalField& m,
                                             const ComplementaryParams& params,
                                             std::uint64_t seed,
                                             SolveCounter* counter) const {
  if (!params.theta_is_zero())
    throw std::invalid_argument(
        "synthesize_data: data are synthesized at nominal parameters (theta = 0)");
  ObservationSet obs;
  obs.base = forward_map(m, params, counter);
  Gaussian gauss(seed);
  obs.noise.resize(n_y());
  for (int j = 0; j < n_y(); ++j) obs.noise[j] = params.sigma_nominal(j) * gauss();
  return obs;
}

}  // namespace hdsa
