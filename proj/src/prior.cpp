#include "hdsa/prior.hpp"

#include <cmath>
#include <stdexcept>

#include "hdsa/rng.hpp"

namespace hdsa {

NodalField default_prior_mean(const Mesh& mesh) {
  NodalField mean(mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const double x = mesh.nodes(i, 0), y = mesh.nodes(i, 1);
    mean[i] = 1.5 * std::sin(2.0 * M_PI * x) * std::cos(2.0 * M_PI * y) + 2.0;
  }
  return mean;
}

PriorOperators::PriorOperators(const Mesh& mesh, const PriorSpec& spec, NodalField mean)
    : mesh_(&mesh), spec_(spec), mean_(std::move(mean)) {
  if (spec.alpha <= 0.0 || spec.phi <= 0.0)
    throw std::invalid_argument("PriorOperators: alpha and phi must be positive");
  if (mean_.size() != mesh.num_nodes())
    throw std::invalid_argument("PriorOperators: mean size mismatch");
  mass_ = assemble_mass(mesh);
  const SparseMat stiff =
      assemble_weighted_stiffness(mesh, NodalField::Zero(mesh.num_nodes()));
  elliptic_ = spec.alpha * (spec.phi * stiff + mass_);

  mass_factor_ = std::make_unique<Eigen::SimplicialLLT<SparseMat>>(mass_);
  if (mass_factor_->info() != Eigen::Success)
    throw std::runtime_error("PriorOperators: mass factorization failed");
  elliptic_factor_ = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>(elliptic_);
  if (elliptic_factor_->info() != Eigen::Success)
    throw std::runtime_error("PriorOperators: elliptic factorization failed");
}

NodalField PriorOperators::apply_mass_inverse(const NodalField& v) const {
  return mass_factor_->solve(v);
}

NodalField PriorOperators::apply_elliptic_inverse(const NodalField& v) const {
  return elliptic_factor_->solve(v);
}

NodalField PriorOperators::apply_regularization(const NodalField& v) const {
  return elliptic_ * mass_factor_->solve(elliptic_ * v);
}

NodalField PriorOperators::apply_covariance(const NodalField& v) const {
  return elliptic_factor_->solve(mass_ * elliptic_factor_->solve(v));
}

NodalField PriorOperators::apply_noise_factor(const NodalField& xi) const {
  // SimplicialLLT factors P M P^T = L L^T, so G = P^T L satisfies G G^T = M.
  return mass_factor_->permutationPinv() * (mass_factor_->matrixL() * xi);
}

double PriorOperators::mass_norm(const NodalField& v) const {
  return std::sqrt(std::max(0.0, mass_inner(v, v)));
}

double PriorOperators::cm_inner(const NodalField& a, const NodalField& b) const {
  return a.dot(apply_regularization(b));
}

std::unique_ptr<PriorOperators> assemble_prior_operator(const Mesh& mesh,
                                                        const PriorSpec& spec,
                                                        NodalField mean) {
  return std::make_unique<PriorOperators>(mesh, spec, std::move(mean));
}

NodalField sample_prior(const PriorOperators& ops, const NodalField& mean,
                        std::uint64_t seed) {
  Gaussian gauss(seed);
  const NodalField xi = gauss.vector(mean.size());
  return mean + ops.apply_elliptic_inverse(ops.apply_noise_factor(xi));
}

}  // namespace hdsa
