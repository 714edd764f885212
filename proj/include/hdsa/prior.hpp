#pragma once

#include <Eigen/SparseCholesky>
#include <cstdint>
#include <memory>

#include "hdsa/mesh.hpp"
#include "hdsa/types.hpp"

namespace hdsa {

/// Parameters of the Gaussian field prior. The covariance is the squared
/// inverse of the elliptic operator  alpha * (phi * stiffness + mass)  with
/// natural boundary conditions; phi controls correlation length, alpha the
/// overall precision scale.
struct PriorSpec {
  double alpha = 5.0;
  double phi = 0.01;
};

/// Nominal prior mean used by the heat conduction setup.
NodalField default_prior_mean(const Mesh& mesh);

/// Assembled prior operators with cached factorizations. Discretely:
///   K  = alpha * (phi * K_stiff + M)          (elliptic operator)
///   R  = K M^{-1} K                           (regularization / precision)
///   C  = K^{-1} M K^{-1}                      (covariance, inverse of R)
/// Samples are  mean + K^{-1} G xi  with G G^T = M, so their covariance
/// is exactly C. All applies are matrix-free through the factorizations.
class PriorOperators {
 public:
  PriorOperators(const Mesh& mesh, const PriorSpec& spec, NodalField mean);

  const Mesh& mesh() const { return *mesh_; }
  const PriorSpec& spec() const { return spec_; }
  const NodalField& mean() const { return mean_; }
  const SparseMat& mass() const { return mass_; }
  const SparseMat& elliptic() const { return elliptic_; }

  NodalField apply_mass(const NodalField& v) const { return mass_ * v; }
  NodalField apply_mass_inverse(const NodalField& v) const;
  NodalField apply_elliptic(const NodalField& v) const { return elliptic_ * v; }
  NodalField apply_elliptic_inverse(const NodalField& v) const;

  /// R v. Symmetric positive definite.
  NodalField apply_regularization(const NodalField& v) const;
  /// C v = R^{-1} v.
  NodalField apply_covariance(const NodalField& v) const;
  /// G xi with G G^T = M (sparse Cholesky factor of the mass matrix).
  NodalField apply_noise_factor(const NodalField& xi) const;

  double mass_inner(const NodalField& a, const NodalField& b) const {
    return a.dot(mass_ * b);
  }
  double mass_norm(const NodalField& v) const;
  /// Cameron-Martin inner product <a, b>_R = a^T R b.
  double cm_inner(const NodalField& a, const NodalField& b) const;

 private:
  const Mesh* mesh_;
  PriorSpec spec_;
  NodalField mean_;
  SparseMat mass_, elliptic_;
  std::unique_ptr<Eigen::SimplicialLLT<SparseMat>> mass_factor_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>> elliptic_factor_;
};

/// Convenience assembly entry point.
std::unique_ptr<PriorOperators> assemble_prior_operator(const Mesh& mesh,
                                                        const PriorSpec& spec,
                                                        NodalField mean);

/// Draws  mean + K^{-1} G xi,  xi ~ N(0, I). Deterministic in the seed.
NodalField sample_prior(const PriorOperators& ops, const NodalField& mean,
                        std::uint64_t seed);

}  // namespace hdsa
