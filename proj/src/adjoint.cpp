#include "hdsa/adjoint.hpp"

#include <stdexcept>

namespace hdsa {

// Discrete derivative conventions, with C(m; u) mhat := (d/dm K(m) u)[mhat]
// and D(m; mhat) := (d/dm K(m))[mhat] (a symmetric matrix):
//
//   state       A(m, theta) u = b(theta)
//   adjoint     A p = -O^T Gamma^{-1} (O u - y)
//   gradient    g = R (m - m_pr) + C(m; u)^T p
//   inc state   A uhat = -C(m; u) mhat
//   inc adjoint A phat = -O^T Gamma^{-1} O uhat - D(m; mhat) p
//   Hessian     H mhat = R mhat + C(m; u)^T phat + C(m; p)^T uhat + S(m; mhat, u, p)
//
// where S collects the second derivative of the weighted stiffness. The
// mixed-derivative applies differentiate the same stationarity conditions in
// theta, so B^T (rows) reuses (uhat, phat) and B (columns) solves the
// theta-differentiated state/adjoint pair instead.

InverseProblem::InverseProblem(const ForwardModel& forward, const PriorOperators& prior)
    : forward_(&forward), prior_(&prior) {
  if (&forward.mesh() != &prior.mesh())
    throw std::invalid_argument("InverseProblem: forward and prior share no mesh");
}

double InverseProblem::cost(const NodalField& m, const ComplementaryParams& params,
                            const ObservationSet& obs, SolveCounter* counter) const {
  OptimizationState state(*this, m, params, obs, counter);
  return state.cost();
}

OptimizationState::OptimizationState(const InverseProblem& problem, NodalField m,
                                     const ComplementaryParams& params,
                                     const ObservationSet& obs, SolveCounter* counter)
    : problem_(&problem), obs_(&obs), params_(params), m_(std::move(m)), counter_(counter) {
  const ForwardModel& fwd = problem.forward();
  if (m_.size() != fwd.mesh().num_nodes())
    throw std::invalid_argument("OptimizationState: field size mismatch");
  const SparseMat a = fwd.state_operator(m_, params_);
  factor_ = std::make_unique<Eigen::SimplicialLDLT<SparseMat>>(a);
  if (factor_->info() != Eigen::Success)
    throw std::runtime_error("OptimizationState: state operator factorization failed");
  u_ = factor_->solve(fwd.state_rhs(params_));
  if (counter_) counter_->add(1);
  misfit_ = fwd.observe(u_) - obs.data(params_);
  prec_ = params_.noise_precision_diag();
}

const NodalField& OptimizationState::adjoint() const {
  if (!have_adjoint_) {
    const ForwardModel& fwd = problem_->forward();
    const Eigen::VectorXd weighted = prec_.cwiseProduct(misfit_);
    p_ = factor_->solve(-(fwd.observation().transpose() * weighted));
    if (counter_) counter_->add(1);
    have_adjoint_ = true;
  }
  return p_;
}

double OptimizationState::cost() const {
  const PriorOperators& prior = problem_->prior();
  const NodalField dm = m_ - prior.mean();
  return 0.5 * misfit_.dot(prec_.cwiseProduct(misfit_)) + 0.5 * prior.cm_inner(dm, dm);
}

NodalField OptimizationState::gradient() const {
  const PriorOperators& prior = problem_->prior();
  const Mesh& mesh = problem_->forward().mesh();
  return prior.apply_regularization(m_ - prior.mean()) +
         stiffness_dm_transpose_apply(mesh, m_, u_, adjoint());
}

NodalField OptimizationState::operator_solve(const NodalField& rhs,
                                             SolveCounter* counter) const {
  NodalField w = factor_->solve(rhs);
  if (counter)
    counter->add(1);
  else if (counter_)
    counter_->add(1);
  return w;
}

IncrementalState solve_incrementals(const OptimizationState& state, const NodalField& mhat,
                                    SolveCounter* counter, bool gauss_newton) {
  const ForwardModel& fwd = state.problem().forward();
  const Mesh& mesh = fwd.mesh();

  IncrementalState inc;
  inc.origin = &state;
  inc.gauss_newton = gauss_newton;
  inc.direction = mhat;
  inc.inc_state = state.operator_solve(
      -stiffness_dm_apply(mesh, state.field(), state.state(), mhat), counter);

  Eigen::VectorXd weighted = state.noise_precision().cwiseProduct(fwd.observe(inc.inc_state));
  NodalField rhs = -(fwd.observation().transpose() * weighted);
  if (!gauss_newton)
    rhs -= stiffness_dm_apply(mesh, state.field(), state.adjoint(), mhat);
  inc.inc_adjoint = state.operator_solve(rhs, counter);
  return inc;
}

NodalField hessian_apply(const OptimizationState& state, const IncrementalState& inc) {
  if (inc.origin != &state)
    throw std::logic_error("hessian_apply: incremental state is stale");
  const Mesh& mesh = state.problem().forward().mesh();
  const PriorOperators& prior = state.problem().prior();

  NodalField out = prior.apply_regularization(inc.direction);
  out += stiffness_dm_transpose_apply(mesh, state.field(), state.state(), inc.inc_adjoint);
  if (!inc.gauss_newton) {
    out += stiffness_dm_transpose_apply(mesh, state.field(), inc.inc_state, state.adjoint());
    out += stiffness_d2m_apply(mesh, state.field(), inc.direction, state.state(),
                               state.adjoint());
  }
  return out;
}

NodalField hessian_apply(const OptimizationState& state, const NodalField& mhat,
                         SolveCounter* counter, bool gauss_newton) {
  return hessian_apply(state, solve_incrementals(state, mhat, counter, gauss_newton));
}

NodalField misfit_hessian_apply(const OptimizationState& state, const NodalField& mhat,
                                SolveCounter* counter, bool gauss_newton) {
  const PriorOperators& prior = state.problem().prior();
  return hessian_apply(state, mhat, counter, gauss_newton) -
         prior.apply_regularization(mhat);
}

Eigen::VectorXd bt_apply(const OptimizationState& state, const IncrementalState& inc) {
  if (inc.origin != &state)
    throw std::logic_error("bt_apply: incremental state is stale");
  const ForwardModel& fwd = state.problem().forward();
  const ComplementaryParams& params = state.params();
  const ObservationSet& obs = state.observations();

  Eigen::VectorXd out(params.dim());
  // Auxiliary channels: phat^T (dA/dtheta_j u - db/dtheta_j) + uhat^T dA/dtheta_j p.
  for (int j = 0; j < params.n_aux(); ++j) {
    double v = -inc.inc_adjoint.dot(fwd.state_rhs_dtheta(params, j));
    if (j == aux::beta) {
      v += inc.inc_adjoint.dot(fwd.state_operator_dtheta_apply(params, j, state.state()));
      v += inc.inc_state.dot(fwd.state_operator_dtheta_apply(params, j, state.adjoint()));
    }
    out[j] = v;
  }
  // Experimental channels: uhat^T O^T (dGamma^{-1}_j misfit - Gamma^{-1} dy_j).
  const Eigen::VectorXd obs_inc = fwd.observe(inc.inc_state);
  for (int k = 0; k < params.n_sensors(); ++k) {
    out[params.n_aux() + k] =
        obs_inc[k] * (params.noise_precision_dtheta(k) * state.misfit()[k] -
                      state.noise_precision()[k] * obs.data_dtheta(k));
  }
  return out;
}

NodalField b_apply(const OptimizationState& state, const Eigen::VectorXd& theta_dir,
                   SolveCounter* counter) {
  const ForwardModel& fwd = state.problem().forward();
  const Mesh& mesh = fwd.mesh();
  const ComplementaryParams& params = state.params();
  const ObservationSet& obs = state.observations();
  if (theta_dir.size() != params.dim())
    throw std::invalid_argument("b_apply: direction size mismatch");

  // Theta-differentiated state equation: A u_t = db[dir] - dA[dir] u.
  NodalField rhs_u = NodalField::Zero(mesh.num_nodes());
  for (int j = 0; j < params.n_aux(); ++j) {
    if (theta_dir[j] == 0.0) continue;
    rhs_u += theta_dir[j] * fwd.state_rhs_dtheta(params, j);
    if (j == aux::beta)
      rhs_u -= theta_dir[j] * fwd.state_operator_dtheta_apply(params, j, state.state());
  }
  const NodalField u_t = state.operator_solve(rhs_u, counter);

  // Theta-differentiated adjoint equation:
  //   A p_t = -O^T [ dGamma^{-1}[dir] misfit + Gamma^{-1} (O u_t - dy[dir]) ] - dA[dir] p.
  Eigen::VectorXd sensor_term = state.noise_precision().cwiseProduct(fwd.observe(u_t));
  for (int k = 0; k < params.n_sensors(); ++k) {
    const double tk = theta_dir[params.n_aux() + k];
    if (tk == 0.0) continue;
    sensor_term[k] += tk * (params.noise_precision_dtheta(k) * state.misfit()[k] -
                            state.noise_precision()[k] * obs.data_dtheta(k));
  }
  NodalField rhs_p = -(fwd.observation().transpose() * sensor_term);
  if (theta_dir[aux::beta] != 0.0)
    rhs_p -= theta_dir[aux::beta] *
             fwd.state_operator_dtheta_apply(params, aux::beta, state.adjoint());
  const NodalField p_t = state.operator_solve(rhs_p, counter);

  return stiffness_dm_transpose_apply(mesh, state.field(), u_t, state.adjoint()) +
         stiffness_dm_transpose_apply(mesh, state.field(), state.state(), p_t);
}

}  // namespace hdsa
