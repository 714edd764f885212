#pragma once

#include <cstdint>

#include "hdsa/adjoint.hpp"

namespace hdsa {

/// Low-rank approximation of the data-misfit Hessian in the prior-weighted
/// geometry: generalized eigenpairs  H_mis v = lambda R v  with V^T R V = I,
/// obtained by Lanczos on R^{-1} H_mis in the R inner product with full
/// reorthogonalization. The inverse Hessian apply uses the Woodbury form
///   H^{-1} v  ~=  R^{-1} v - V diag(lambda/(1+lambda)) V^T v.
/// Negative Ritz values (possible with the full-Newton misfit Hessian away
/// from strict convexity) are clamped to zero in the factorization; inverse
/// applies then fall back to a CG solve against the exact Hessian, with the
/// clamped factorization acting as preconditioner.
class LowRankHessian {
 public:
  LowRankHessian(const OptimizationState& state, bool gauss_newton,
                 Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors);

  int rank() const { return static_cast<int>(eigenvalues_.size()); }
  /// Clamped, sorted descending.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  /// Unclamped Ritz values (diagnostic).
  const Eigen::VectorXd& raw_eigenvalues() const { return raw_eigenvalues_; }
  /// R-orthonormal columns.
  const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
  bool clamped() const { return clamped_; }
  const OptimizationState& state() const { return *state_; }

  /// Approximate H^{-1} v. Free of PDE solves unless the CG fallback is
  /// active, in which case the solves are charged to `counter`.
  NodalField inv_apply(const NodalField& v, SolveCounter* counter = nullptr) const;

  /// Woodbury apply regardless of clamping (test/diagnostic access).
  NodalField woodbury_apply(const NodalField& v) const;

  /// Same spectrum restricted to the leading r pairs.
  LowRankHessian truncated(int r) const;
  /// Keep pairs with eigenvalue > threshold, at most cap.
  LowRankHessian truncated_by_threshold(double threshold, int cap) const;

 private:
  const OptimizationState* state_;
  bool gauss_newton_ = false;
  Eigen::VectorXd eigenvalues_, raw_eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  bool clamped_ = false;
};

/// Runs `rank` Lanczos steps (two PDE solves each) on a state whose adjoint
/// is forced first, for a total of 2*rank + 2 PDE solves when the state is
/// constructed inside the counted scope. Krylov breakdown restarts with a
/// fresh random direction orthogonalized against the basis built so far, so
/// rank may be as large as the field dimension.
LowRankHessian build_lowrank(const OptimizationState& state, int rank,
                             SolveCounter* counter = nullptr, bool gauss_newton = false,
                             std::uint64_t seed = 0);

}  // namespace hdsa
