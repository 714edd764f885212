#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hdsa/config.hpp"
#include "hdsa/lowrank.hpp"
#include "hdsa/map_solver.hpp"

namespace hdsa {

/// A named set of theta components treated as one perturbation subgroup.
struct Subgroup {
  std::string name;
  std::vector<int> members;
};

struct SubgroupScheme {
  std::vector<Subgroup> groups;
  /// Twelve auxiliary singletons plus one group holding all noise levels.
  static SubgroupScheme standard(const ComplementaryParams& params);
};

/// Everything retained per posterior sample.
struct SampleRecord {
  int index = 0;
  bool converged = false;
  NodalField draw;          // m_i
  ObservationSet obs;       // frozen base + noise
  NodalField map_point;     // m*_i
  SolveStats stats;
  int lowrank_rank = 0;
  bool lowrank_clamped = false;

  Eigen::VectorXd risk_contribution;  // B_i^T z_i (risk gradient summand)
  Eigen::MatrixXd map_columns;        // MAP sensitivity fields, one per theta
  Eigen::VectorXd map_pointwise;      // ||column_j||_M
  Eigen::VectorXd map_generalized;    // per subgroup
  double map_norm = 0.0;              // ||m*_i||_M
  double risk_term = 0.0;             // ||m*_i - m_i||_M^2
};

struct SensitivityReport {
  SubgroupScheme scheme;
  int n_samples = 0;   // included (converged) samples
  int n_excluded = 0;
  std::uint64_t seed = 0;
  double bayes_risk = 0.0;
  double avg_map_norm = 0.0;

  Eigen::VectorXd risk_gradient;         // D^R, length n_theta
  Eigen::VectorXd risk_pointwise;        // |D^R_j|
  Eigen::VectorXd risk_generalized;      // per subgroup
  Eigen::VectorXd map_pointwise;         // sample averages per component
  Eigen::VectorXd map_generalized;       // sample averages per subgroup

  // Same indices divided by the QoI normalizer (Bayes risk for risk indices,
  // average MAP norm for MAP indices).
  Eigen::VectorXd risk_pointwise_norm, risk_generalized_norm;
  Eigen::VectorXd map_pointwise_norm, map_generalized_norm;

  std::vector<std::string> warnings;
  std::vector<SampleRecord> samples;  // retained for downstream studies
};

struct SpreadRow {
  std::string qoi;  // "map" or "bayes_risk"
  std::string subgroup;
  int group_size = 0;
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};

struct SpreadStudy {
  int groups = 0;
  std::vector<int> sizes;
  std::vector<SpreadRow> rows;
};

/// Sample-averaged Bayes risk estimate over the converged samples.
double bayes_risk(const std::vector<SampleRecord>& samples);

/// Risk sensitivity vector D^R = (2/n) sum of per-sample contributions.
Eigen::VectorXd assemble_risk_gradient(const std::vector<SampleRecord>& samples);

/// |D^R . dir| / ||dir||: pointwise risk index for an arbitrary direction.
double pointwise_risk_index(const Eigen::VectorXd& risk_gradient,
                            const Eigen::VectorXd& dir);

/// Largest M-weighted amplification over the span of the given MAP
/// sensitivity columns: sqrt(lambda_max(W^T M W)) with unit coefficient
/// vectors. For one column this is its M-norm.
double generalized_map_index(const Eigen::MatrixXd& columns, const PriorOperators& prior);

/// Euclidean norm of the subgroup slice of D^R.
double generalized_risk_index(const Eigen::VectorXd& risk_gradient,
                              const std::vector<int>& members);

/// Divides raw indices by their QoI normalizer. Throws on a zero normalizer.
void normalize_report(SensitivityReport& report);

/// Assembles all run-level indices from per-sample records. Unconverged
/// samples are excluded with a warning; order of records does not matter.
SensitivityReport assemble_report(std::vector<SampleRecord> records,
                                  const SubgroupScheme& scheme,
                                  const PriorOperators& prior, std::uint64_t seed);

/// Owns the discretization and runs the sampling pipeline.
class HdsaEngine {
 public:
  explicit HdsaEngine(RunConfig config);

  const RunConfig& config() const { return config_; }
  const Mesh& mesh() const { return mesh_; }
  const PriorOperators& prior() const { return *prior_; }
  const ForwardModel& forward() const { return *forward_; }
  const InverseProblem& problem() const { return *problem_; }
  const SubgroupScheme& scheme() const { return scheme_; }
  /// Parameters at theta = 0.
  ComplementaryParams nominal_params() const;

  NodalField prior_draw(int index, std::uint64_t master_seed) const;
  ObservationSet sample_data(int index, std::uint64_t master_seed, const NodalField& draw,
                             SolveCounter* counter = nullptr) const;

  /// Full per-sample work at the given theta (nullptr = nominal): draw,
  /// synthesis, MAP solve, low-rank build, risk contribution, and (when
  /// requested) all MAP sensitivity columns and indices.
  SampleRecord run_sample(int index, std::uint64_t master_seed,
                          const Eigen::VectorXd* theta, SampleCosts* costs,
                          bool map_sensitivities) const;

  /// The whole pipeline at nominal theta.
  SensitivityReport run_pipeline(std::uint64_t master_seed,
                                 CostLedger* ledger = nullptr) const;

  /// Monte Carlo Bayes risk at a perturbed theta, reusing the same seeds:
  /// data stay synthesized at nominal theta, inversion runs at `theta`.
  double evaluate_bayes_risk(const Eigen::VectorXd& theta, std::uint64_t master_seed,
                             int n_samples, const SolverConfig* solver_override = nullptr,
                             SolveCounter* counter = nullptr) const;

  /// Re-solves the MAP point of one sample at a perturbed theta (finite
  /// difference support). Warm start optional.
  NodalField resolve_sample_map(int index, std::uint64_t master_seed,
                                const Eigen::VectorXd& theta, const NodalField* warm_start,
                                const SolverConfig* solver_override = nullptr,
                                SolveCounter* counter = nullptr) const;

  /// -H^{-1} B dir for a prepared sample state: the MAP sensitivity applied
  /// to a theta direction. Uses the configured inverse strategy unless a
  /// low-rank factorization is passed explicitly.
  NodalField apply_map_sensitivity(const OptimizationState& state,
                                   const LowRankHessian* lowrank,
                                   const Eigen::VectorXd& dir,
                                   SolveCounter* counter = nullptr) const;

  /// Spread-of-generalized-indices study over random subgroups of samples.
  SpreadStudy run_spread(std::uint64_t master_seed, CostLedger* ledger = nullptr) const;

 private:
  NodalField apply_inverse(const OptimizationState& state, const LowRankHessian* lowrank,
                           const NodalField& rhs, SolveCounter* counter) const;

  RunConfig config_;
  Mesh mesh_;
  std::unique_ptr<PriorOperators> prior_;
  std::unique_ptr<ForwardModel> forward_;
  std::unique_ptr<InverseProblem> problem_;
  SubgroupScheme scheme_;
};

}  // namespace hdsa
