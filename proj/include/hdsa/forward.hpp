#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hdsa/ledger.hpp"
#include "hdsa/mesh.hpp"
#include "hdsa/params.hpp"
#include "hdsa/types.hpp"

namespace hdsa {

/// Synthesized observations of one sample. The noiseless base F(m, theta*)
/// and the nominal-sigma noise draw are frozen at synthesis time; an
/// experimental perturbation rescales the stored noise, it never regenerates
/// it, so finite differences in theta see a smooth data map.
struct ObservationSet {
  Eigen::VectorXd base;   // noiseless sensor values at synthesis parameters
  Eigen::VectorXd noise;  // stored noise draw (nominal sigma)

  int n_y() const { return static_cast<int>(base.size()); }

  /// Data under the current perturbation: base + noise .* (1 + theta_e).
  Eigen::VectorXd data(const ComplementaryParams& params) const;
  /// d(data)/d(theta_e,j), the only nonzero entry of that column.
  double data_dtheta(int sensor) const { return noise[sensor]; }
};

/// Steady heat conduction on the unit square with log-conductivity m:
///   -div(exp(m) grad u) = f          in the domain
///   exp(m) du/dn = 0                 on bottom and top
///   exp(m) du/dn = beta (t_amb - u)  on the right side
///   exp(m) du/dn = s                 on the left side
/// Discretely  A(m, theta) u = b(theta)  with
///   A = K(exp m) + beta E2,   b = M f + E4 s + beta t_amb E2 1,
/// where E2 and E4 are boundary mass matrices of the right and left side and
/// f, s are nodal interpolants of the source fields. Observations are
/// barycentric point evaluations O u.
class ForwardModel {
 public:
  ForwardModel(const Mesh& mesh, std::vector<std::array<double, 2>> sensors);

  const Mesh& mesh() const { return *mesh_; }
  const std::vector<std::array<double, 2>>& sensors() const { return sensors_; }
  int n_y() const { return static_cast<int>(sensors_.size()); }
  const SparseMat& mass() const { return mass_; }
  const SparseMat& observation() const { return obs_; }
  const SparseMat& robin_boundary_mass() const { return robin_mass_; }
  const SparseMat& flux_boundary_mass() const { return flux_mass_; }

  /// Nodal interpolant of the two-bump interior source at the current theta.
  NodalField volume_source(const ComplementaryParams& params) const;
  /// Its derivative w.r.t. one auxiliary theta component (zero off-channel).
  NodalField volume_source_dtheta(const ComplementaryParams& params, int idx) const;
  /// Nodal interpolant of the left-side boundary flux (zero off the side).
  NodalField boundary_flux(const ComplementaryParams& params) const;
  NodalField boundary_flux_dtheta(const ComplementaryParams& params, int idx) const;

  SparseMat state_operator(const NodalField& m, const ComplementaryParams& params) const;
  NodalField state_rhs(const ComplementaryParams& params) const;
  /// d(rhs)/d(theta_j); zero for experimental and center/angle-free channels.
  NodalField state_rhs_dtheta(const ComplementaryParams& params, int j) const;
  /// (dA/dtheta_j) v; nonzero only for the Robin channel.
  NodalField state_operator_dtheta_apply(const ComplementaryParams& params, int j,
                                         const NodalField& v) const;

  /// Direct solve of A(m, theta) u = b(theta). One PDE solve.
  NodalField solve_state(const NodalField& m, const ComplementaryParams& params,
                         SolveCounter* counter = nullptr) const;

  Eigen::VectorXd observe(const NodalField& u) const { return obs_ * u; }

  /// Forward map F(m, theta) = O u(m, theta). One PDE solve.
  Eigen::VectorXd forward_map(const NodalField& m, const ComplementaryParams& params,
                              SolveCounter* counter = nullptr) const;

  /// Synthesizes data at the synthesis parameters: requires theta = 0 so the
  /// base is frozen at nominal values. One PDE solve plus a noise draw with
  /// the nominal sigmas.
  ObservationSet synthesize_data(const NodalField& m, const ComplementaryParams& params,
                                 std::uint64_t seed, SolveCounter* counter = nullptr) const;

 private:
  const Mesh* mesh_;
  std::vector<std::array<double, 2>> sensors_;
  SparseMat mass_, obs_, robin_mass_, flux_mass_;
  NodalField robin_rhs_unit_;  // E2 * 1
};

}  // namespace hdsa
