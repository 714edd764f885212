#include "hdsa/lowrank.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "hdsa/log.hpp"
#include "hdsa/map_solver.hpp"
#include "hdsa/rng.hpp"

namespace hdsa {

namespace {

// Ritz values this far below zero (relative to the spectral scale) indicate
// genuine indefiniteness rather than roundoff; only then is CG needed.
constexpr double kIndefiniteTol = 1e-8;

}  // namespace

LowRankHessian::LowRankHessian(const OptimizationState& state, bool gauss_newton,
                               Eigen::VectorXd eigenvalues, Eigen::MatrixXd eigenvectors)
    : state_(&state),
      gauss_newton_(gauss_newton),
      raw_eigenvalues_(eigenvalues),
      eigenvectors_(std::move(eigenvectors)) {
  const double scale = eigenvalues.size() > 0 ? std::abs(eigenvalues[0]) : 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues[i] < 0.0) {
      if (eigenvalues[i] < -kIndefiniteTol * std::max(1.0, scale)) clamped_ = true;
      eigenvalues[i] = 0.0;
    }
  }
  eigenvalues_ = std::move(eigenvalues);
  if (clamped_)
    log_line(1, "lowrank: negative Ritz values clamped; inverse applies use CG fallback");
}

NodalField LowRankHessian::woodbury_apply(const NodalField& v) const {
  const PriorOperators& prior = state_->problem().prior();
  NodalField out = prior.apply_covariance(v);
  if (rank() > 0) {
    const Eigen::VectorXd coeff =
        (eigenvalues_.array() / (1.0 + eigenvalues_.array())).matrix();
    out -= eigenvectors_ * coeff.cwiseProduct(eigenvectors_.transpose() * v);
  }
  return out;
}

NodalField LowRankHessian::inv_apply(const NodalField& v, SolveCounter* counter) const {
  if (!clamped_) return woodbury_apply(v);
  const std::function<NodalField(const NodalField&)> precondition =
      [this](const NodalField& r) { return woodbury_apply(r); };
  return hessian_cg_solve(*state_, v, 1e-12, 1000, counter, gauss_newton_, &precondition);
}

LowRankHessian LowRankHessian::truncated(int r) const {
  if (r < 0 || r > rank())
    throw std::invalid_argument("LowRankHessian::truncated: rank out of range");
  return LowRankHessian(*state_, gauss_newton_, raw_eigenvalues_.head(r),
                        eigenvectors_.leftCols(r));
}

LowRankHessian LowRankHessian::truncated_by_threshold(double threshold, int cap) const {
  int r = 0;
  while (r < rank() && r < cap && eigenvalues_[r] > threshold) ++r;
  return truncated(r);
}

LowRankHessian build_lowrank(const OptimizationState& state, int rank,
                             SolveCounter* counter, bool gauss_newton,
                             std::uint64_t seed) {
  const PriorOperators& prior = state.problem().prior();
  const Eigen::Index n = state.field().size();
  if (rank < 1 || rank > n)
    throw std::invalid_argument("build_lowrank: rank out of range");
  state.adjoint();  // charge the state/adjoint pair before the Lanczos sweep

  Eigen::MatrixXd basis(n, rank);    // R-orthonormal Lanczos vectors
  Eigen::MatrixXd r_basis(n, rank);  // R * basis, cached for inner products
  Eigen::VectorXd diag(rank), offdiag(rank);
  offdiag.setZero();

  Gaussian gauss(seed);

  // R-orthonormalizes w against basis columns [0, k); returns its R-norm.
  const auto orthonormalize = [&](NodalField& w, NodalField& rw, int k) {
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < k; ++j) {
        const double c = w.dot(r_basis.col(j));
        w -= c * basis.col(j);
      }
    rw = prior.apply_regularization(w);
    return std::sqrt(std::max(0.0, w.dot(rw)));
  };

  NodalField q = gauss.vector(n);
  NodalField rq;
  {
    const double nrm = orthonormalize(q, rq, 0);
    q /= nrm;
    rq /= nrm;
  }

  double scale = 0.0;  // running spectral scale for the breakdown test
  for (int k = 0; k < rank; ++k) {
    basis.col(k) = q;
    r_basis.col(k) = rq;

    const NodalField h = misfit_hessian_apply(state, q, counter, gauss_newton);
    diag[k] = q.dot(h);
    scale = std::max({scale, std::abs(diag[k]), k > 0 ? std::abs(offdiag[k]) : 0.0});

    if (k + 1 == rank) break;
    NodalField w = prior.apply_covariance(h);
    NodalField rw;
    double beta = orthonormalize(w, rw, k + 1);
    if (beta <= 1e-12 * std::max(1.0, scale)) {
      // Krylov subspace exhausted: restart with a random direction. The
      // zero coupling keeps the tridiagonal matrix block diagonal, which is
      // exact because the exhausted block is invariant.
      w = gauss.vector(n);
      const double nrm = orthonormalize(w, rw, k + 1);
      if (nrm <= 1e-12)
        throw std::runtime_error("build_lowrank: restart failed to find a new direction");
      beta = nrm;
      offdiag[k + 1] = 0.0;
      log_line(2, "lowrank: restart after exhausted subspace at step ", k + 1);
    } else {
      offdiag[k + 1] = beta;
    }
    q = w / beta;
    rq = rw / beta;
  }

  Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(rank, rank);
  for (int k = 0; k < rank; ++k) {
    tri(k, k) = diag[k];
    if (k > 0) {
      tri(k, k - 1) = offdiag[k];
      tri(k - 1, k) = offdiag[k];
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("build_lowrank: tridiagonal eigensolve failed");

  // SelfAdjointEigenSolver sorts ascending; flip to descending.
  Eigen::VectorXd values(rank);
  Eigen::MatrixXd vectors(n, rank);
  for (int i = 0; i < rank; ++i) {
    values[i] = es.eigenvalues()[rank - 1 - i];
    vectors.col(i) = basis * es.eigenvectors().col(rank - 1 - i);
  }
  return LowRankHessian(state, gauss_newton, std::move(values), std::move(vectors));
}

}  // namespace hdsa
