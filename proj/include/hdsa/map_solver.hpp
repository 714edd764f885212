#pragma once

#include <functional>
#include <utility>

#include "hdsa/adjoint.hpp"

namespace hdsa {

struct SolverConfig {
  double grad_tol_rel = 1e-8;  // stop at ||g|| <= tol * max(1, ||g(m0)||)
  int max_newton = 50;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  int max_cg = 200;
  double forcing_cap = 0.5;  // eta_k = min(cap, sqrt(||g_k|| / ||g_0||))
  bool gauss_newton = false; // Hessian mode used inside CG
};

struct SolveStats {
  bool converged = false;
  int newton_steps = 0;       // accepted steps (L)
  long cg_iterations = 0;     // total inner iterations (sum of I_k)
  int linesearch_extra = 0;   // cost evaluations beyond one per accepted step
  long pde_solves = 0;        // exactly 2 + 2L + 2*cg_iterations + linesearch_extra
  double initial_grad_norm = 0.0;
  double final_grad_norm = 0.0;
  double final_cost = 0.0;
};

/// Inexact Newton-CG for the MAP point, globalized by Armijo backtracking.
/// The inner CG is preconditioned by the prior covariance and handles
/// negative curvature in the Steihaug fashion (returns the current inexact
/// direction, or preconditioned steepest descent on the first iteration).
/// On line-search failure or iteration exhaustion the best iterate so far is
/// returned with converged = false.
std::pair<NodalField, SolveStats> solve_map(const InverseProblem& problem,
                                            const ObservationSet& obs,
                                            const ComplementaryParams& params,
                                            NodalField m0, const SolverConfig& config,
                                            SolveCounter* counter = nullptr);

/// Prior-preconditioned CG solve of  H(state) x = rhs  to a fixed relative
/// residual. Used for high-accuracy inverse Hessian applies; each iteration
/// costs two PDE solves. Throws when the tolerance is unreachable within
/// max_iter. An optional rank-reduced approximation can serve as the
/// preconditioner through `precondition`.
NodalField hessian_cg_solve(const OptimizationState& state, const NodalField& rhs,
                            double rel_tol, int max_iter, SolveCounter* counter,
                            bool gauss_newton = false,
                            const std::function<NodalField(const NodalField&)>* precondition = nullptr);

}  // namespace hdsa
