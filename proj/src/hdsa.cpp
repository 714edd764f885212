#include "hdsa/hdsa.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "hdsa/log.hpp"
#include "hdsa/rng.hpp"

namespace hdsa {

namespace {

// Seed stream layout: three streams per sample (draw, noise, Lanczos) and a
// distant block for spread-study subgroup selection, so adding samples or
// sizes never perturbs other draws.
constexpr std::uint64_t kSpreadStreamBase = 1ull << 40;

std::uint64_t draw_stream(int index) { return 3ull * index; }
std::uint64_t noise_stream(int index) { return 3ull * index + 1; }
std::uint64_t lanczos_stream(int index) { return 3ull * index + 2; }

void parallel_for(int count, int workers, const std::function<void(int)>& body) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min(workers, count);
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

SubgroupScheme SubgroupScheme::standard(const ComplementaryParams& params) {
  SubgroupScheme scheme;
  for (int j = 0; j < params.n_aux(); ++j)
    scheme.groups.push_back({aux::name(j), {j}});
  Subgroup sigma{"sigma", {}};
  for (int k = 0; k < params.n_sensors(); ++k)
    sigma.members.push_back(params.n_aux() + k);
  scheme.groups.push_back(std::move(sigma));
  return scheme;
}

double bayes_risk(const std::vector<SampleRecord>& samples) {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : samples) {
    if (!s.converged) continue;
    sum += s.risk_term;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("bayes_risk: no converged samples");
  return sum / n;
}

Eigen::VectorXd assemble_risk_gradient(const std::vector<SampleRecord>& samples) {
  Eigen::VectorXd sum;
  int n = 0;
  for (const auto& s : samples) {
    if (!s.converged) continue;
    if (sum.size() == 0)
      sum = s.risk_contribution;
    else
      sum += s.risk_contribution;
    ++n;
  }
  if (n == 0)
    throw std::invalid_argument("assemble_risk_gradient: no converged samples");
  return (2.0 / n) * sum;
}

double pointwise_risk_index(const Eigen::VectorXd& risk_gradient,
                            const Eigen::VectorXd& dir) {
  const double nrm = dir.norm();
  if (nrm == 0.0) throw std::invalid_argument("pointwise_risk_index: zero direction");
  return std::abs(risk_gradient.dot(dir)) / nrm;
}

double generalized_map_index(const Eigen::MatrixXd& columns,
                             const PriorOperators& prior) {
  if (columns.cols() == 0)
    throw std::invalid_argument("generalized_map_index: no columns");
  Eigen::MatrixXd gram(columns.cols(), columns.cols());
  for (Eigen::Index a = 0; a < columns.cols(); ++a) {
    const NodalField ma = prior.apply_mass(columns.col(a));
    for (Eigen::Index b = a; b < columns.cols(); ++b)
      gram(a, b) = gram(b, a) = ma.dot(columns.col(b));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("generalized_map_index: Gram eigensolve failed");
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

double generalized_risk_index(const Eigen::VectorXd& risk_gradient,
                              const std::vector<int>& members) {
  double sum = 0.0;
  for (int j : members) sum += risk_gradient[j] * risk_gradient[j];
  return std::sqrt(sum);
}

void normalize_report(SensitivityReport& report) {
  if (report.bayes_risk == 0.0)
    throw std::domain_error("normalize_report: Bayes risk normalizer is zero");
  if (report.avg_map_norm == 0.0)
    throw std::domain_error("normalize_report: MAP norm normalizer is zero");
  report.risk_pointwise_norm = report.risk_pointwise / report.bayes_risk;
  report.risk_generalized_norm = report.risk_generalized / report.bayes_risk;
  report.map_pointwise_norm = report.map_pointwise / report.avg_map_norm;
  report.map_generalized_norm = report.map_generalized / report.avg_map_norm;
}

SensitivityReport assemble_report(std::vector<SampleRecord> records,
                                  const SubgroupScheme& scheme,
                                  const PriorOperators& prior, std::uint64_t seed) {
  SensitivityReport report;
  report.scheme = scheme;
  report.seed = seed;

  for (const auto& rec : records) {
    if (!rec.converged) {
      ++report.n_excluded;
      std::ostringstream os;
      os << "sample " << rec.index << ": excluded, MAP solver did not converge (|g| = "
         << rec.stats.final_grad_norm << ")";
      report.warnings.push_back(os.str());
    } else if (rec.lowrank_clamped) {
      std::ostringstream os;
      os << "sample " << rec.index
         << ": indefinite misfit Hessian, negative Ritz values clamped; CG fallback used";
      report.warnings.push_back(os.str());
    }
  }

  report.bayes_risk = bayes_risk(records);
  report.risk_gradient = assemble_risk_gradient(records);

  const int n_theta = static_cast<int>(report.risk_gradient.size());
  const int n_groups = static_cast<int>(scheme.groups.size());

  report.risk_pointwise = report.risk_gradient.cwiseAbs();
  report.risk_generalized.resize(n_groups);
  for (int k = 0; k < n_groups; ++k)
    report.risk_generalized[k] =
        generalized_risk_index(report.risk_gradient, scheme.groups[k].members);

  report.map_pointwise = Eigen::VectorXd::Zero(n_theta);
  report.map_generalized = Eigen::VectorXd::Zero(n_groups);
  double map_norm_sum = 0.0;
  int n = 0;
  for (const auto& rec : records) {
    if (!rec.converged) continue;
    if (rec.map_pointwise.size() != n_theta)
      throw std::invalid_argument("assemble_report: sample lacks MAP sensitivities");
    report.map_pointwise += rec.map_pointwise;
    report.map_generalized += rec.map_generalized;
    map_norm_sum += rec.map_norm;
    ++n;
  }
  report.n_samples = n;
  report.map_pointwise /= n;
  report.map_generalized /= n;
  report.avg_map_norm = map_norm_sum / n;

  normalize_report(report);
  report.samples = std::move(records);
  return report;
}

HdsaEngine::HdsaEngine(RunConfig config)
    : config_(std::move(config)), mesh_(build_mesh(config_.mesh_cells)) {
  prior_ = std::make_unique<PriorOperators>(
      mesh_, PriorSpec{config_.prior_alpha, config_.prior_phi}, default_prior_mean(mesh_));
  forward_ = std::make_unique<ForwardModel>(mesh_, config_.effective_sensors());
  problem_ = std::make_unique<InverseProblem>(*forward_, *prior_);
  scheme_ = SubgroupScheme::standard(nominal_params());
  if (config_.inverse_apply != "lowrank" && config_.inverse_apply != "cg")
    throw std::invalid_argument("HdsaEngine: inverse_apply must be 'lowrank' or 'cg'");
}

ComplementaryParams HdsaEngine::nominal_params() const {
  return ComplementaryParams(config_.nominals, forward_->n_y(), config_.noise_std,
                             config_.aux_scale);
}

NodalField HdsaEngine::prior_draw(int index, std::uint64_t master_seed) const {
  return sample_prior(*prior_, prior_->mean(), derive_seed(master_seed, draw_stream(index)));
}

ObservationSet HdsaEngine::sample_data(int index, std::uint64_t master_seed,
                                       const NodalField& draw, SolveCounter* counter) const {
  return forward_->synthesize_data(draw, nominal_params(),
                                   derive_seed(master_seed, noise_stream(index)), counter);
}

NodalField HdsaEngine::apply_inverse(const OptimizationState& state,
                                     const LowRankHessian* lowrank, const NodalField& rhs,
                                     SolveCounter* counter) const {
  if (lowrank) return lowrank->inv_apply(rhs, counter);
  return hessian_cg_solve(state, rhs, 1e-12, 2000, counter, config_.lowrank.gauss_newton);
}

NodalField HdsaEngine::apply_map_sensitivity(const OptimizationState& state,
                                             const LowRankHessian* lowrank,
                                             const Eigen::VectorXd& dir,
                                             SolveCounter* counter) const {
  return -apply_inverse(state, lowrank, b_apply(state, dir, counter), counter);
}

SampleRecord HdsaEngine::run_sample(int index, std::uint64_t master_seed,
                                    const Eigen::VectorXd* theta, SampleCosts* costs,
                                    bool map_sensitivities) const {
  SampleCosts local;
  if (costs == nullptr) costs = &local;

  SampleRecord rec;
  rec.index = index;
  rec.draw = prior_draw(index, master_seed);
  {
    SolveCounter c;
    rec.obs = sample_data(index, master_seed, rec.draw, &c);
    costs->data_generation += c.solves;
  }

  ComplementaryParams work = nominal_params();
  if (theta) work.set_theta(*theta);

  {
    SolveCounter c;
    auto [map_point, stats] = solve_map(*problem_, rec.obs, work, rec.draw,
                                        config_.solver, &c);
    rec.map_point = std::move(map_point);
    rec.stats = stats;
    rec.converged = stats.converged;
    costs->inverse_solve += c.solves;
    costs->newton_steps = stats.newton_steps;
    costs->cg_iterations = stats.cg_iterations;
    costs->linesearch_extra = stats.linesearch_extra;
    costs->converged = stats.converged;
  }
  if (!rec.converged) {
    log_line(1, "sample ", index, ": MAP solver did not converge, sample excluded");
    return rec;
  }

  // Fresh state and adjoint at the MAP point, then the Lanczos sweep.
  SolveCounter lowrank_counter;
  OptimizationState state(*problem_, rec.map_point, work, rec.obs, &lowrank_counter);
  state.adjoint();
  std::optional<LowRankHessian> built, operative;
  if (config_.inverse_apply == "lowrank") {
    const int sweep = std::min<int>(config_.lowrank.max_rank, mesh_.num_nodes());
    built = build_lowrank(state, sweep, &lowrank_counter, config_.lowrank.gauss_newton,
                          derive_seed(master_seed, lanczos_stream(index)));
    operative = built->truncated_by_threshold(config_.lowrank.threshold,
                                              config_.lowrank.max_rank);
    rec.lowrank_rank = operative->rank();
    rec.lowrank_clamped = operative->clamped();
    costs->lowrank_rank = sweep;  // Lanczos steps run (drives the 2r + 2 cost)
  }
  costs->lowrank_build += lowrank_counter.solves;
  const LowRankHessian* inv = operative ? &*operative : nullptr;

  {
    SolveCounter c;
    const NodalField weighted = prior_->apply_mass(rec.map_point - rec.draw);
    const NodalField z = -apply_inverse(state, inv, weighted, &c);
    const IncrementalState inc = solve_incrementals(state, z, &c);
    rec.risk_contribution = bt_apply(state, inc);
    costs->risk_sensitivity += c.solves;
  }

  rec.map_norm = prior_->mass_norm(rec.map_point);
  const NodalField discrepancy = rec.map_point - rec.draw;
  rec.risk_term = prior_->mass_inner(discrepancy, discrepancy);

  if (map_sensitivities) {
    SolveCounter c;
    const int n_theta = work.dim();
    rec.map_columns.resize(mesh_.num_nodes(), n_theta);
    rec.map_pointwise.resize(n_theta);
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(n_theta);
    for (int j = 0; j < n_theta; ++j) {
      dir[j] = 1.0;
      rec.map_columns.col(j) = apply_map_sensitivity(state, inv, dir, &c);
      rec.map_pointwise[j] = prior_->mass_norm(rec.map_columns.col(j));
      dir[j] = 0.0;
    }
    costs->map_sensitivity += c.solves;

    rec.map_generalized.resize(static_cast<int>(scheme_.groups.size()));
    for (std::size_t k = 0; k < scheme_.groups.size(); ++k) {
      const auto& members = scheme_.groups[k].members;
      Eigen::MatrixXd columns(mesh_.num_nodes(), members.size());
      for (std::size_t a = 0; a < members.size(); ++a)
        columns.col(a) = rec.map_columns.col(members[a]);
      rec.map_generalized[static_cast<int>(k)] = generalized_map_index(columns, *prior_);
    }
  }
  log_line(2, "sample ", index, ": L=", rec.stats.newton_steps,
           " I=", rec.stats.cg_iterations, " rank=", rec.lowrank_rank);
  return rec;
}

SensitivityReport HdsaEngine::run_pipeline(std::uint64_t master_seed,
                                           CostLedger* ledger) const {
  const int n = config_.n_samples;
  log_line(1, "pipeline: ", n, " samples on ", mesh_.num_nodes(), " nodes");
  std::vector<SampleRecord> records(n);
  std::vector<SampleCosts> costs(n);
  parallel_for(n, config_.workers, [&](int i) {
    records[i] = run_sample(i, master_seed, nullptr, &costs[i], true);
  });
  if (ledger) ledger->samples = costs;
  return assemble_report(std::move(records), scheme_, *prior_, master_seed);
}

double HdsaEngine::evaluate_bayes_risk(const Eigen::VectorXd& theta,
                                       std::uint64_t master_seed, int n_samples,
                                       const SolverConfig* solver_override,
                                       SolveCounter* counter) const {
  const SolverConfig& solver = solver_override ? *solver_override : config_.solver;
  ComplementaryParams work = nominal_params();
  work.set_theta(theta);
  double sum = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const NodalField draw = prior_draw(i, master_seed);
    const ObservationSet obs = sample_data(i, master_seed, draw, counter);
    auto [map_point, stats] = solve_map(*problem_, obs, work, draw, solver, counter);
    if (!stats.converged)
      throw std::runtime_error("evaluate_bayes_risk: MAP solve did not converge");
    const NodalField d = map_point - draw;
    sum += prior_->mass_inner(d, d);
  }
  return sum / n_samples;
}

NodalField HdsaEngine::resolve_sample_map(int index, std::uint64_t master_seed,
                                          const Eigen::VectorXd& theta,
                                          const NodalField* warm_start,
                                          const SolverConfig* solver_override,
                                          SolveCounter* counter) const {
  const SolverConfig& solver = solver_override ? *solver_override : config_.solver;
  const NodalField draw = prior_draw(index, master_seed);
  const ObservationSet obs = sample_data(index, master_seed, draw, counter);
  ComplementaryParams work = nominal_params();
  work.set_theta(theta);
  auto [map_point, stats] = solve_map(*problem_, obs, work,
                                      warm_start ? *warm_start : draw, solver, counter);
  if (!stats.converged)
    throw std::runtime_error("resolve_sample_map: MAP solve did not converge");
  return map_point;
}

SpreadStudy HdsaEngine::run_spread(std::uint64_t master_seed, CostLedger* ledger) const {
  const int pool = config_.spread.pool;
  log_line(1, "spread study: pool of ", pool, " samples");
  std::vector<SampleRecord> records(pool);
  std::vector<SampleCosts> costs(pool);
  parallel_for(pool, config_.workers, [&](int i) {
    records[i] = run_sample(i, master_seed, nullptr, &costs[i], true);
  });
  if (ledger) ledger->samples = costs;

  std::vector<const SampleRecord*> usable;
  for (const auto& r : records)
    if (r.converged) usable.push_back(&r);
  if (usable.size() < 2)
    throw std::runtime_error("run_spread: not enough converged samples");

  const int n_groups = static_cast<int>(scheme_.groups.size());
  SpreadStudy study;
  study.groups = config_.spread.groups;
  study.sizes = config_.spread.sizes;

  for (std::size_t si = 0; si < config_.spread.sizes.size(); ++si) {
    const int size = std::min<int>(config_.spread.sizes[si],
                                   static_cast<int>(usable.size()));
    // Matrix of normalized generalized indices: one row per replicate group.
    Eigen::MatrixXd risk_idx(study.groups, n_groups), map_idx(study.groups, n_groups);
    for (int g = 0; g < study.groups; ++g) {
      std::mt19937_64 rng(derive_seed(master_seed,
                                      kSpreadStreamBase + 1000 * si + g));
      std::vector<int> order(usable.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
      for (int j = 0; j < size; ++j) {
        const std::size_t pick = j + rng() % (order.size() - j);
        std::swap(order[j], order[pick]);
      }

      Eigen::VectorXd risk_sum;
      Eigen::VectorXd map_gen_sum = Eigen::VectorXd::Zero(n_groups);
      double risk_total = 0.0, map_norm_total = 0.0;
      for (int j = 0; j < size; ++j) {
        const SampleRecord& rec = *usable[order[j]];
        if (risk_sum.size() == 0)
          risk_sum = rec.risk_contribution;
        else
          risk_sum += rec.risk_contribution;
        map_gen_sum += rec.map_generalized;
        risk_total += rec.risk_term;
        map_norm_total += rec.map_norm;
      }
      const Eigen::VectorXd group_gradient = (2.0 / size) * risk_sum;
      const double group_risk = risk_total / size;
      const double group_map_norm = map_norm_total / size;
      for (int k = 0; k < n_groups; ++k) {
        risk_idx(g, k) =
            generalized_risk_index(group_gradient, scheme_.groups[k].members) / group_risk;
        map_idx(g, k) = (map_gen_sum[k] / size) / group_map_norm;
      }
    }

    for (int k = 0; k < n_groups; ++k) {
      auto stats_row = [&](const Eigen::MatrixXd& m, const char* qoi) {
        const Eigen::VectorXd col = m.col(k);
        SpreadRow row;
        row.qoi = qoi;
        row.subgroup = scheme_.groups[k].name;
        row.group_size = size;
        row.mean = col.mean();
        row.stddev = std::sqrt((col.array() - col.mean()).square().sum() /
                               (col.size() - 1));
        row.min = col.minCoeff();
        row.max = col.maxCoeff();
        study.rows.push_back(row);
      };
      stats_row(map_idx, "map");
      stats_row(risk_idx, "bayes_risk");
    }
  }
  return study;
}

}  // namespace hdsa
