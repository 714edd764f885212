#pragma once

#include <Eigen/SparseCholesky>
#include <memory>

#include "hdsa/forward.hpp"
#include "hdsa/ledger.hpp"
#include "hdsa/prior.hpp"

namespace hdsa {

/// The regularized data-misfit objective
///   J(m, theta) = 1/2 (F(m,theta) - y(theta))^T Gamma^{-1}(theta) (F - y)
///               + 1/2 <m - m_pr, m - m_pr>_R
/// together with its adjoint-based derivatives. All derivative formulas
/// differentiate the discrete forms exactly, so gradient and Hessian checks
/// hold to solver precision rather than discretization order.
class InverseProblem {
 public:
  InverseProblem(const ForwardModel& forward, const PriorOperators& prior);

  const ForwardModel& forward() const { return *forward_; }
  const PriorOperators& prior() const { return *prior_; }

  /// Objective value at (m, theta). One PDE solve.
  double cost(const NodalField& m, const ComplementaryParams& params,
              const ObservationSet& obs, SolveCounter* counter = nullptr) const;

 private:
  const ForwardModel* forward_;
  const PriorOperators* prior_;
};

/// Work state at a fixed (m, theta): the factorized state operator, the
/// state solve, and (lazily) the adjoint solve. Construction costs one PDE
/// solve; the first gradient() or adjoint() access costs one more. All
/// second-order applies reuse the cached factorization.
class OptimizationState {
 public:
  OptimizationState(const InverseProblem& problem, NodalField m,
                    const ComplementaryParams& params, const ObservationSet& obs,
                    SolveCounter* counter = nullptr);

  const InverseProblem& problem() const { return *problem_; }
  const ComplementaryParams& params() const { return params_; }
  const ObservationSet& observations() const { return *obs_; }
  const NodalField& field() const { return m_; }
  const NodalField& state() const { return u_; }
  const Eigen::VectorXd& misfit() const { return misfit_; }       // O u - y(theta)
  const Eigen::VectorXd& noise_precision() const { return prec_; }

  /// Adjoint solution p of  A p = -O^T Gamma^{-1} (O u - y).
  const NodalField& adjoint() const;

  double cost() const;
  /// Euclidean representation of dJ/dm:  R(m - m_pr) + C(m; u)^T p.
  NodalField gradient() const;

  /// Solve A(m, theta) w = rhs with the cached factorization. One PDE solve,
  /// charged to `counter` if given, else to the construction counter.
  NodalField operator_solve(const NodalField& rhs, SolveCounter* counter = nullptr) const;

 private:
  const InverseProblem* problem_;
  const ObservationSet* obs_;
  ComplementaryParams params_;
  NodalField m_;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseMat>> factor_;
  NodalField u_;
  Eigen::VectorXd misfit_, prec_;
  SolveCounter* counter_ = nullptr;
  mutable NodalField p_;
  mutable bool have_adjoint_ = false;
};

/// Incremental (second-order) solves in a direction mhat. Tied to the state
/// it came from; using it against another state is an error.
struct IncrementalState {
  const OptimizationState* origin = nullptr;
  bool gauss_newton = false;
  NodalField direction;    // mhat
  NodalField inc_state;    // uhat:  A uhat = -C(m; u) mhat
  NodalField inc_adjoint;  // phat:  A phat = -O^T Gamma^{-1} O uhat - D(m; mhat) p
};

/// Solves the incremental state and adjoint equations: two PDE solves.
/// With gauss_newton the adjoint-coupling term D(m; mhat) p is dropped.
IncrementalState solve_incrementals(const OptimizationState& state, const NodalField& mhat,
                                    SolveCounter* counter = nullptr,
                                    bool gauss_newton = false);

/// Hessian action assembled from already-solved incrementals; no solves.
NodalField hessian_apply(const OptimizationState& state, const IncrementalState& inc);

/// Full Hessian action H mhat: two PDE solves.
NodalField hessian_apply(const OptimizationState& state, const NodalField& mhat,
                         SolveCounter* counter = nullptr, bool gauss_newton = false);

/// Misfit-only Hessian action (H - R) mhat: two PDE solves.
NodalField misfit_hessian_apply(const OptimizationState& state, const NodalField& mhat,
                                SolveCounter* counter = nullptr,
                                bool gauss_newton = false);

/// All components of B^T mhat, the theta-gradient of mhat^T (dJ/dm). Reuses
/// the incremental solves, so it costs no PDE solves beyond them.
Eigen::VectorXd bt_apply(const OptimizationState& state, const IncrementalState& inc);

/// B theta_dir, the mixed second derivative contracted against a theta
/// direction, via modified incremental solves: two PDE solves.
NodalField b_apply(const OptimizationState& state, const Eigen::VectorXd& theta_dir,
                   SolveCounter* counter = nullptr);

}  // namespace hdsa
