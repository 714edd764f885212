#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hdsa/lowrank.hpp"
#include "hdsa/rng.hpp"
#include "test_support.hpp"

using hdsa::AuxNominals;
using hdsa::ComplementaryParams;
using hdsa::ForwardModel;
using hdsa::InverseProblem;
using hdsa::LowRankHessian;
using hdsa::Mesh;
using hdsa::NodalField;
using hdsa::ObservationSet;
using hdsa::OptimizationState;
using hdsa::PriorOperators;
using hdsa::PriorSpec;
using hdsa::SolveCounter;
using test_support::random_vector;
using test_support::rel_err;

namespace {

struct Setup {
  Mesh mesh;
  std::unique_ptr<ForwardModel> forward;
  std::unique_ptr<PriorOperators> prior;
  std::unique_ptr<InverseProblem> problem;
  ComplementaryParams params;
  ObservationSet obs;
  NodalField m;

  explicit Setup(int cells, double noise_std = 0.1, std::uint64_t seed = 7)
      : mesh(hdsa::build_mesh(cells)),
        params(AuxNominals{}, 25, noise_std) {
    std::vector<std::array<double, 2>> sensors;
    for (int iy = 1; iy <= 5; ++iy)
      for (int ix = 1; ix <= 5; ++ix) sensors.push_back({ix / 6.0, iy / 6.0});
    forward = std::make_unique<ForwardModel>(mesh, sensors);
    prior = std::make_unique<PriorOperators>(mesh, PriorSpec{},
                                             hdsa::default_prior_mean(mesh));
    problem = std::make_unique<InverseProblem>(*forward, *prior);
    m = hdsa::sample_prior(*prior, prior->mean(), hdsa::derive_seed(seed, 0));
    obs = forward->synthesize_data(m, params, hdsa::derive_seed(seed, 1));
  }
};

// Dense misfit Hessian and regularization operator, column by column. The
// low-rank code never forms these, so they are an independent reference.
struct DenseOperators {
  Eigen::MatrixXd misfit;
  Eigen::MatrixXd reg;

  DenseOperators(const OptimizationState& state, bool gauss_newton) {
    const int n = static_cast<int>(state.field().size());
    misfit.resize(n, n);
    reg.resize(n, n);
    const PriorOperators& prior = state.problem().prior();
    for (int j = 0; j < n; ++j) {
      NodalField e = NodalField::Zero(n);
      e[j] = 1.0;
      misfit.col(j) = hdsa::misfit_hessian_apply(state, e, nullptr, gauss_newton);
      reg.col(j) = prior.apply_regularization(e);
    }
    misfit = 0.5 * (misfit + misfit.transpose()).eval();
    reg = 0.5 * (reg + reg.transpose()).eval();
  }

  Eigen::VectorXd generalized_eigenvalues_descending() const {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(misfit, reg);
    return ges.eigenvalues().reverse();
  }

  // Reference inverse Hessian apply through a dense factorization.
  NodalField dense_inverse(const NodalField& v) const {
    return Eigen::MatrixXd(misfit + reg).ldlt().solve(v);
  }
};

double r_norm(const PriorOperators& prior, const NodalField& v) {
  return std::sqrt(std::max(0.0, v.dot(prior.apply_regularization(v))));
}

}  // namespace

TEST_CASE("full-rank spectrum matches a dense generalized eigensolve") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());

  DenseOperators dense(state, /*gauss_newton=*/true);
  const Eigen::VectorXd exact = dense.generalized_eigenvalues_descending();

  LowRankHessian lr = hdsa::build_lowrank(state, n, nullptr, /*gauss_newton=*/true, 11);
  REQUIRE(lr.rank() == n);
  const double scale = std::max(1.0, std::abs(exact[0]));
  for (int i = 0; i < n; ++i)
    CHECK(std::abs(lr.raw_eigenvalues()[i] - exact[i]) <= 1e-8 * scale);
}

TEST_CASE("eigenvectors are orthonormal in the regularization inner product") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);

  LowRankHessian lr = hdsa::build_lowrank(state, 12, nullptr, true, 11);
  const Eigen::MatrixXd& v = lr.eigenvectors();
  Eigen::MatrixXd gram(12, 12);
  for (int j = 0; j < 12; ++j)
    gram.col(j) = v.transpose() * s.prior->apply_regularization(v.col(j));
  CHECK((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("full-rank inverse apply matches a dense solve") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());
  DenseOperators dense(state, true);

  LowRankHessian lr = hdsa::build_lowrank(state, n, nullptr, true, 11);
  REQUIRE(!lr.clamped());
  for (std::uint64_t k = 0; k < 3; ++k) {
    const NodalField v = random_vector(n, 100 + k);
    const NodalField x = lr.inv_apply(v);
    const NodalField ref = dense.dense_inverse(v);
    CHECK(rel_err((x - ref).norm(), 0.0) == (x - ref).norm());  // guard NaN
    CHECK((x - ref).norm() <= 1e-8 * ref.norm());
  }
}

TEST_CASE("truncation error decreases monotonically in the right geometry") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());
  DenseOperators dense(state, true);

  LowRankHessian full = hdsa::build_lowrank(state, n, nullptr, true, 11);
  const NodalField v = random_vector(n, 5);
  const NodalField ref = dense.dense_inverse(v);

  // The discarded eigenpairs are orthogonal in the regularization inner
  // product, so the error norm there can only shrink as the rank grows.
  double prev = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= n; ++r) {
    const double err = r_norm(*s.prior, full.truncated(r).woodbury_apply(v) - ref);
    CHECK(err <= prev + 1e-13);
    prev = err;
  }
  CHECK(prev <= 1e-8 * r_norm(*s.prior, ref));
}

TEST_CASE("Ritz values increase with rank and never overshoot the spectrum") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());
  DenseOperators dense(state, true);
  const Eigen::VectorXd exact = dense.generalized_eigenvalues_descending();
  const double scale = std::max(1.0, std::abs(exact[0]));

  Eigen::Vector3d prev = Eigen::Vector3d::Constant(-1e30);
  for (int r : {3, 5, 8, 12, n}) {
    LowRankHessian lr = hdsa::build_lowrank(state, r, nullptr, true, 11);
    for (int i = 0; i < 3; ++i) {
      const double theta = lr.raw_eigenvalues()[i];
      CHECK(theta >= prev[i] - 1e-9 * scale);
      CHECK(theta <= exact[i] + 1e-9 * scale);
      prev[i] = theta;
    }
  }
}

TEST_CASE("huge noise levels collapse the spectrum and the inverse is the covariance") {
  Setup s(4, /*noise_std=*/1e12);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);

  LowRankHessian lr = hdsa::build_lowrank(state, 10, nullptr, false, 3);
  CHECK(lr.eigenvalues().cwiseAbs().maxCoeff() <= 1e-12);
  const NodalField v = random_vector(s.m.size(), 17);
  const NodalField x = lr.inv_apply(v);
  const NodalField cov = s.prior->apply_covariance(v);
  CHECK((x - cov).norm() <= 1e-10 * cov.norm());
}

TEST_CASE("Gauss-Newton spectra are nonnegative and never trip the clamp") {
  Setup s(4, 1.0);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());

  LowRankHessian lr = hdsa::build_lowrank(state, n, nullptr, /*gauss_newton=*/true, 29);
  CHECK(!lr.clamped());
  CHECK(lr.raw_eigenvalues().minCoeff() >= -1e-10);
  CHECK(lr.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("indefinite full-Newton curvature is clamped and falls back to CG") {
  // At sigma = 1 the synthesized noise is large enough that the adjoint
  // coupling term makes the misfit Hessian indefinite, while the full
  // Hessian stays positive definite (all generalized eigenvalues > -1).
  Setup s(4, 1.0);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());
  DenseOperators dense(state, false);
  const Eigen::VectorXd exact = dense.generalized_eigenvalues_descending();
  REQUIRE(exact[n - 1] < -1e-4);  // genuinely indefinite misfit curvature
  REQUIRE(exact[n - 1] > -1.0);   // but an invertible full Hessian

  LowRankHessian lr = hdsa::build_lowrank(state, n, nullptr, false, 11);
  CHECK(lr.clamped());
  CHECK(lr.raw_eigenvalues().minCoeff() < -1e-4);
  CHECK(lr.eigenvalues().minCoeff() == 0.0);

  SolveCounter counter;
  const NodalField v = random_vector(n, 23);
  const NodalField x = lr.inv_apply(v, &counter);
  CHECK(counter.solves > 0);  // the fallback really solved with the PDE
  const NodalField ref = dense.dense_inverse(v);
  CHECK((x - ref).norm() <= 1e-8 * ref.norm());
}

TEST_CASE("threshold truncation keeps exactly the leading pairs above it") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  LowRankHessian full = hdsa::build_lowrank(state, 15, nullptr, true, 11);

  const double threshold = full.eigenvalues()[4] - 1e-12;
  LowRankHessian cut = full.truncated_by_threshold(threshold, 100);
  CHECK(cut.rank() == 5);
  CHECK(cut.eigenvalues().isApprox(full.eigenvalues().head(5)));

  LowRankHessian capped = full.truncated_by_threshold(-1.0, 3);
  CHECK(capped.rank() == 3);

  const NodalField v = random_vector(s.m.size(), 31);
  CHECK((cut.woodbury_apply(v) - full.truncated(5).woodbury_apply(v)).norm() == 0.0);
}

TEST_CASE("a rank-r sweep costs exactly 2r + 2 solves counted from scratch") {
  Setup s(4);
  for (int r : {1, 4, 9}) {
    SolveCounter counter;
    OptimizationState state(*s.problem, s.m, s.params, s.obs, &counter);
    hdsa::build_lowrank(state, r, &counter, true, 11);
    CHECK(counter.solves == 2 * r + 2);
  }
}

TEST_CASE("the Lanczos seed changes the basis but not the converged spectrum") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());

  LowRankHessian a = hdsa::build_lowrank(state, n, nullptr, true, 1);
  LowRankHessian b = hdsa::build_lowrank(state, n, nullptr, true, 2);
  LowRankHessian a2 = hdsa::build_lowrank(state, n, nullptr, true, 1);
  CHECK(a.raw_eigenvalues() == a2.raw_eigenvalues());  // bitwise determinism
  const double scale = std::max(1.0, std::abs(a.raw_eigenvalues()[0]));
  CHECK((a.raw_eigenvalues() - b.raw_eigenvalues()).cwiseAbs().maxCoeff() <=
        1e-8 * scale);
}

TEST_CASE("rank bounds are validated") {
  Setup s(4);
  OptimizationState state(*s.problem, s.m, s.params, s.obs);
  const int n = static_cast<int>(s.m.size());
  CHECK_THROWS_AS(hdsa::build_lowrank(state, 0), std::invalid_argument);
  CHECK_THROWS_AS(hdsa::build_lowrank(state, n + 1), std::invalid_argument);
  LowRankHessian lr = hdsa::build_lowrank(state, 3, nullptr, true, 11);
  CHECK_THROWS_AS(lr.truncated(-1), std::invalid_argument);
  CHECK_THROWS_AS(lr.truncated(4), std::invalid_argument);
}
