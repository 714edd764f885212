#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hdsa/hdsa.hpp"
#include "hdsa/rng.hpp"
#include "test_support.hpp"

using hdsa::ComplementaryParams;
using hdsa::HdsaEngine;
using hdsa::LowRankHessian;
using hdsa::NodalField;
using hdsa::OptimizationState;
using hdsa::RunConfig;
using hdsa::SampleCosts;
using hdsa::SampleRecord;
using hdsa::SensitivityReport;
using hdsa::SubgroupScheme;
using test_support::random_vector;
using test_support::rel_err;

namespace {

RunConfig small_config(int cells = 4, int n_samples = 2) {
  RunConfig config;
  config.mesh_cells = cells;
  config.n_samples = n_samples;
  config.master_seed = 1;
  return config;
}

// Hand-built records exercise the assembly logic without any PDE work.
SampleRecord fake_record(int index, bool converged, double scale, int n_theta,
                         int n_groups) {
  SampleRecord rec;
  rec.index = index;
  rec.converged = converged;
  rec.risk_contribution = scale * random_vector(n_theta, 100 + index);
  rec.risk_term = 1.0 + 0.25 * index;
  rec.map_norm = 2.0 + 0.5 * index;
  rec.map_pointwise = (scale * random_vector(n_theta, 200 + index)).cwiseAbs();
  rec.map_generalized = (scale * random_vector(n_groups, 300 + index)).cwiseAbs();
  return rec;
}

}  // namespace

TEST_CASE("the standard subgroup scheme is twelve singletons plus one noise group") {
  ComplementaryParams params(hdsa::AuxNominals{}, 25, 0.1);
  const SubgroupScheme scheme = SubgroupScheme::standard(params);
  REQUIRE(scheme.groups.size() == 13);
  int members = 0;
  for (int k = 0; k < 12; ++k) {
    CHECK(scheme.groups[k].members == std::vector<int>{k});
    CHECK(scheme.groups[k].name == hdsa::aux::name(k));
    members += 1;
  }
  CHECK(scheme.groups[12].name == "sigma");
  REQUIRE(scheme.groups[12].members.size() == 25);
  for (int k = 0; k < 25; ++k) CHECK(scheme.groups[12].members[k] == 12 + k);
  CHECK(members + 25 == params.dim());
}

TEST_CASE("report assembly averages converged samples and excludes the rest") {
  ComplementaryParams params(hdsa::AuxNominals{}, 3, 0.1);
  SubgroupScheme scheme = SubgroupScheme::standard(params);
  const int n_theta = params.dim();
  const int n_groups = static_cast<int>(scheme.groups.size());

  hdsa::Mesh mesh = hdsa::build_mesh(2);
  hdsa::PriorOperators prior(mesh, hdsa::PriorSpec{}, hdsa::default_prior_mean(mesh));

  std::vector<SampleRecord> records;
  records.push_back(fake_record(0, true, 1.0, n_theta, n_groups));
  records.push_back(fake_record(1, false, 1.0, n_theta, n_groups));
  records.push_back(fake_record(2, true, 2.0, n_theta, n_groups));

  SensitivityReport report = hdsa::assemble_report(records, scheme, prior, 7);
  CHECK(report.n_samples == 2);
  CHECK(report.n_excluded == 1);
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("sample 1") != std::string::npos);

  const Eigen::VectorXd expected_gradient =
      (records[0].risk_contribution + records[2].risk_contribution);
  CHECK((report.risk_gradient - expected_gradient).norm() <= 1e-14);
  CHECK(report.bayes_risk ==
        doctest::Approx(0.5 * (records[0].risk_term + records[2].risk_term)));
  CHECK(report.avg_map_norm ==
        doctest::Approx(0.5 * (records[0].map_norm + records[2].map_norm)));
  CHECK(report.seed == 7);

  // Normalized indices are the raw ones divided by their QoI normalizer.
  for (int j = 0; j < n_theta; ++j) {
    CHECK(report.risk_pointwise[j] == doctest::Approx(std::abs(report.risk_gradient[j])));
    CHECK(report.risk_pointwise_norm[j] ==
          doctest::Approx(report.risk_pointwise[j] / report.bayes_risk));
    CHECK(report.map_pointwise_norm[j] ==
          doctest::Approx(report.map_pointwise[j] / report.avg_map_norm));
  }

  // Record order must not matter beyond roundoff.
  std::vector<SampleRecord> shuffled = {records[2], records[1], records[0]};
  SensitivityReport again = hdsa::assemble_report(shuffled, scheme, prior, 7);
  CHECK((again.risk_gradient - report.risk_gradient).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((again.map_pointwise - report.map_pointwise).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(again.bayes_risk - report.bayes_risk) <= 1e-12);

  std::vector<SampleRecord> dead = {fake_record(0, false, 1.0, n_theta, n_groups)};
  CHECK_THROWS_AS(hdsa::bayes_risk(dead), std::invalid_argument);
  CHECK_THROWS_AS(hdsa::assemble_risk_gradient(dead), std::invalid_argument);
}

TEST_CASE("pointwise and generalized index identities") {
  hdsa::Mesh mesh = hdsa::build_mesh(3);
  hdsa::PriorOperators prior(mesh, hdsa::PriorSpec{}, hdsa::default_prior_mean(mesh));
  const int n = mesh.num_nodes();

  const Eigen::VectorXd g = random_vector(9, 41);

  SUBCASE("pointwise index is scale invariant in the direction") {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(9);
    e[3] = 1.0;
    const double one = hdsa::pointwise_risk_index(g, e);
    CHECK(one == doctest::Approx(std::abs(g[3])).epsilon(1e-14));
    CHECK(hdsa::pointwise_risk_index(g, (2.0 * e).eval()) ==
          doctest::Approx(one).epsilon(1e-14));
    Eigen::VectorXd mixed = random_vector(9, 42);
    CHECK(hdsa::pointwise_risk_index(g, mixed) ==
          doctest::Approx(std::abs(g.dot(mixed)) / mixed.norm()).epsilon(1e-14));
    CHECK_THROWS_AS(hdsa::pointwise_risk_index(g, Eigen::VectorXd::Zero(9).eval()),
                    std::invalid_argument);
  }

  SUBCASE("singleton generalized indices equal the pointwise ones") {
    CHECK(hdsa::generalized_risk_index(g, {5}) ==
          doctest::Approx(std::abs(g[5])).epsilon(1e-14));
    const Eigen::MatrixXd one = random_vector(n, 43);
    CHECK(hdsa::generalized_map_index(one, prior) ==
          doctest::Approx(prior.mass_norm(one.col(0))).epsilon(1e-12));
  }

  SUBCASE("group risk index is the Euclidean norm of the slice") {
    const double direct = std::sqrt(g[1] * g[1] + g[4] * g[4] + g[7] * g[7]);
    CHECK(hdsa::generalized_risk_index(g, {1, 4, 7}) ==
          doctest::Approx(direct).epsilon(1e-14));
  }

  SUBCASE("generalized map index against a dense Gram eigensolve") {
    Eigen::MatrixXd columns(n, 4);
    for (int j = 0; j < 4; ++j) columns.col(j) = random_vector(n, 50 + j);

    Eigen::MatrixXd mass(n, n);
    for (int j = 0; j < n; ++j) {
      NodalField e = NodalField::Zero(n);
      e[j] = 1.0;
      mass.col(j) = prior.apply_mass(e);
    }
    const Eigen::MatrixXd gram = columns.transpose() * mass * columns;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double expected = std::sqrt(es.eigenvalues().maxCoeff());

    const double got = hdsa::generalized_map_index(columns, prior);
    CHECK(rel_err(got, expected) <= 1e-12);

    // The best unit combination is at least as large as any single member.
    for (int j = 0; j < 4; ++j) CHECK(got >= prior.mass_norm(columns.col(j)) - 1e-12);
  }

  SUBCASE("a duplicated column amplifies by sqrt(2)") {
    const NodalField c = random_vector(n, 60);
    Eigen::MatrixXd twice(n, 2);
    twice.col(0) = c;
    twice.col(1) = c;
    CHECK(hdsa::generalized_map_index(twice, prior) ==
          doctest::Approx(std::sqrt(2.0) * prior.mass_norm(c)).epsilon(1e-12));
  }
}

TEST_CASE("per-sample pipeline costs follow the phase formulas") {
  RunConfig config = small_config();
  config.lowrank.max_rank = 10;
  HdsaEngine engine(config);

  SampleCosts costs;
  SampleRecord rec = engine.run_sample(0, config.master_seed, nullptr, &costs, true);
  REQUIRE(rec.converged);

  CHECK(costs.data_generation == 1);
  CHECK(costs.inverse_solve == 2 + 2 * costs.newton_steps + 2 * costs.cg_iterations +
                                   costs.linesearch_extra);
  CHECK(costs.lowrank_build == 2 * costs.lowrank_rank + 2);
  CHECK(costs.lowrank_rank == 10);
  // Without a clamped factorization the inverse applies are solve-free, so
  // the risk phase is exactly the incremental pair and the MAP phase is one
  // pair per theta component.
  REQUIRE(!rec.lowrank_clamped);
  CHECK(costs.risk_sensitivity == 2);
  CHECK(costs.map_sensitivity == 2 * engine.nominal_params().dim());

  // Recorded per-sample quantities are recomputable from the fields.
  const hdsa::PriorOperators& prior = engine.prior();
  CHECK(rec.map_norm == doctest::Approx(prior.mass_norm(rec.map_point)).epsilon(1e-14));
  const NodalField d = rec.map_point - rec.draw;
  CHECK(rec.risk_term == doctest::Approx(prior.mass_inner(d, d)).epsilon(1e-14));
  for (int j = 0; j < rec.map_pointwise.size(); ++j)
    CHECK(rec.map_pointwise[j] ==
          doctest::Approx(prior.mass_norm(rec.map_columns.col(j))).epsilon(1e-12));
  // Singleton subgroups reuse the pointwise value exactly.
  for (int k = 0; k < 12; ++k)
    CHECK(rec.map_generalized[k] == doctest::Approx(rec.map_pointwise[k]).epsilon(1e-12));
}

TEST_CASE("pipeline report is deterministic and internally consistent") {
  RunConfig config = small_config(4, 3);
  HdsaEngine engine(config);

  hdsa::CostLedger ledger;
  SensitivityReport report = engine.run_pipeline(config.master_seed, &ledger);
  REQUIRE(report.n_samples == 3);
  CHECK(report.n_excluded == 0);
  CHECK(ledger.samples.size() == 3);
  for (const auto& s : ledger.samples) {
    CHECK(s.converged);
    CHECK(s.total() == s.data_generation + s.inverse_solve + s.lowrank_build +
                           s.risk_sensitivity + s.map_sensitivity);
  }

  // Every run-level quantity is recomputable from the retained samples.
  Eigen::VectorXd gradient = Eigen::VectorXd::Zero(report.risk_gradient.size());
  double risk = 0.0, map_norm = 0.0;
  for (const auto& rec : report.samples) {
    gradient += rec.risk_contribution;
    risk += rec.risk_term;
    map_norm += rec.map_norm;
  }
  gradient *= 2.0 / 3.0;
  CHECK((report.risk_gradient - gradient).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(report.bayes_risk == doctest::Approx(risk / 3.0).epsilon(1e-14));
  CHECK(report.avg_map_norm == doctest::Approx(map_norm / 3.0).epsilon(1e-14));

  // The risk functional evaluated at theta = 0 through the independent entry
  // point repeats the same solves and must land on the same estimate.
  const double direct = engine.evaluate_bayes_risk(
      Eigen::VectorXd::Zero(report.risk_gradient.size()), config.master_seed, 3);
  CHECK(rel_err(direct, report.bayes_risk) <= 1e-13);

  SensitivityReport again = engine.run_pipeline(config.master_seed);
  CHECK((again.risk_gradient - report.risk_gradient).norm() == 0.0);
  CHECK(again.bayes_risk == report.bayes_risk);
}

TEST_CASE("a zero nominal freezes its channel out of both sensitivities") {
  RunConfig config = small_config(4, 2);
  config.nominals.s1 = 0.0;  // no boundary flux at all
  HdsaEngine engine(config);

  SensitivityReport report = engine.run_pipeline(config.master_seed);
  REQUIRE(report.n_samples == 2);
  CHECK(report.risk_gradient[hdsa::aux::s1] == 0.0);
  CHECK(report.map_pointwise[hdsa::aux::s1] == 0.0);
  for (const auto& rec : report.samples)
    CHECK(rec.map_columns.col(hdsa::aux::s1).norm() == 0.0);
  // The frozen channel must not disturb its siblings.
  CHECK(report.risk_gradient.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("risk contributions match the transpose route component by component") {
  RunConfig config = small_config(4, 2);
  config.inverse_apply = "cg";  // keep both routes on the same exact inverse
  HdsaEngine engine(config);

  SensitivityReport report = engine.run_pipeline(config.master_seed);
  REQUIRE(report.n_samples == 2);
  const int n_theta = static_cast<int>(report.risk_gradient.size());

  for (const auto& rec : report.samples) {
    OptimizationState state(engine.problem(), rec.map_point, engine.nominal_params(),
                            rec.obs);
    const NodalField weighted = engine.prior().apply_mass(rec.map_point - rec.draw);
    const NodalField z =
        -hdsa::hessian_cg_solve(state, weighted, 1e-12, 2000, nullptr);
    const double scale = std::max(1.0, rec.risk_contribution.cwiseAbs().maxCoeff());
    for (int j = 0; j < n_theta; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n_theta);
      e[j] = 1.0;
      const double forward_route = hdsa::b_apply(state, e).dot(z);
      CHECK(std::abs(forward_route - rec.risk_contribution[j]) <= 1e-8 * scale);
    }
  }
}

TEST_CASE("low-rank and CG inverse strategies agree at full rank") {
  RunConfig cg_config = small_config(4, 2);
  cg_config.inverse_apply = "cg";
  RunConfig lr_config = cg_config;
  lr_config.inverse_apply = "lowrank";
  lr_config.lowrank.max_rank = hdsa::build_mesh(4).num_nodes();
  lr_config.lowrank.threshold = -1.0;  // keep the whole spectrum

  SensitivityReport via_cg = HdsaEngine(cg_config).run_pipeline(1);
  SensitivityReport via_lr = HdsaEngine(lr_config).run_pipeline(1);

  const double gscale = via_cg.risk_gradient.cwiseAbs().maxCoeff();
  CHECK((via_cg.risk_gradient - via_lr.risk_gradient).cwiseAbs().maxCoeff() <=
        1e-8 * gscale);
  const double mscale = via_cg.map_pointwise.maxCoeff();
  CHECK((via_cg.map_pointwise - via_lr.map_pointwise).cwiseAbs().maxCoeff() <=
        1e-8 * mscale);
  CHECK(rel_err(via_lr.bayes_risk, via_cg.bayes_risk) <= 1e-12);
}

TEST_CASE("MAP sensitivity columns predict re-solved MAP points") {
  RunConfig config = small_config(4, 1);
  config.inverse_apply = "cg";  // exact inverse; truncation is tested elsewhere
  HdsaEngine engine(config);
  hdsa::SolverConfig tight;
  tight.grad_tol_rel = 1e-9;

  SampleRecord rec = engine.run_sample(0, config.master_seed, nullptr, nullptr, true);
  REQUIRE(rec.converged);

  const int n_theta = engine.nominal_params().dim();
  const double h = 1e-3;
  for (int j : {(int)hdsa::aux::beta, (int)hdsa::aux::gamma2, 12}) {
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n_theta);
    step[j] = h;
    const NodalField plus = engine.resolve_sample_map(0, config.master_seed, step,
                                                      &rec.map_point, &tight);
    const NodalField minus = engine.resolve_sample_map(0, config.master_seed,
                                                       (-step).eval(),
                                                       &rec.map_point, &tight);
    const NodalField fd = (plus - minus) / (2.0 * h);
    const NodalField column = rec.map_columns.col(j);
    const double err = engine.prior().mass_norm(column - fd);
    CHECK(err <= 1e-3 * std::max(1e-12, engine.prior().mass_norm(fd)));
  }
}

TEST_CASE("risk gradient components predict perturbed risk evaluations") {
  RunConfig config = small_config(4, 2);
  config.inverse_apply = "cg";  // exact inverse; truncation is tested elsewhere
  HdsaEngine engine(config);
  hdsa::SolverConfig tight;
  tight.grad_tol_rel = 1e-10;

  SensitivityReport report = engine.run_pipeline(config.master_seed);
  REQUIRE(report.n_samples == 2);

  const int n_theta = static_cast<int>(report.risk_gradient.size());
  const double h = 3e-3;
  for (int j : {(int)hdsa::aux::gamma2, (int)hdsa::aux::f2, 12}) {
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n_theta);
    step[j] = h;
    const double plus = engine.evaluate_bayes_risk(step, config.master_seed, 2, &tight);
    const double minus =
        engine.evaluate_bayes_risk((-step).eval(), config.master_seed, 2, &tight);
    const double fd = (plus - minus) / (2.0 * h);
    CHECK(std::abs(fd - report.risk_gradient[j]) <=
          2e-3 * std::max(1e-5, std::abs(fd)));
  }
}

TEST_CASE("spread study shape, bounds, and determinism") {
  RunConfig config = small_config(4, 2);
  config.spread.pool = 6;
  config.spread.groups = 3;
  config.spread.sizes = {2, 4};
  HdsaEngine engine(config);

  hdsa::CostLedger ledger;
  hdsa::SpreadStudy study = engine.run_spread(config.master_seed, &ledger);
  CHECK(ledger.samples.size() == 6);
  CHECK(study.sizes == std::vector<int>{2, 4});
  REQUIRE(study.rows.size() == 2 * 13 * 2);

  for (const auto& row : study.rows) {
    CHECK((row.qoi == "map" || row.qoi == "bayes_risk"));
    CHECK(row.min <= row.mean + 1e-15);
    CHECK(row.mean <= row.max + 1e-15);
    CHECK(row.stddev >= 0.0);
    CHECK((row.group_size == 2 || row.group_size == 4));
  }

  hdsa::SpreadStudy again = engine.run_spread(config.master_seed);
  REQUIRE(again.rows.size() == study.rows.size());
  for (std::size_t i = 0; i < study.rows.size(); ++i) {
    CHECK(again.rows[i].mean == study.rows[i].mean);
    CHECK(again.rows[i].stddev == study.rows[i].stddev);
  }
}
