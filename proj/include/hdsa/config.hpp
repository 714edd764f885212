#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hdsa/map_solver.hpp"
#include "hdsa/params.hpp"

namespace hdsa {

struct LowRankConfig {
  double threshold = 0.1;  // keep eigenvalues above this
  int max_rank = 100;
  bool gauss_newton = false;
};

struct SpreadConfig {
  int groups = 10;                        // replicate groups per size
  std::vector<int> sizes = {20, 100, 500};
  int pool = 600;                         // precomputed sample pool
};

struct OracleConfig {
  double prior_mean = 1.3;
  double prior_variance = 0.1;
  double theta = -0.3;
  double noise_std = 26.0;
  double second_mode_scale = 1.0;   // 0 freezes theta out of the forward map
  bool consistent_forward = false;  // variant with exp(theta) amplitude
  int n_samples = 10;
  int grid_points = 2001;
  double grid_lo = 0.0, grid_hi = 2.6;
};

/// Everything a run needs. Defaults reproduce the nominal heat conduction
/// setup: 5x5 sensor grid at multiples of 1/6, sigma = 0.1, perturbation
/// scale 0.05 on auxiliary scalars.
struct RunConfig {
  int mesh_cells = 32;
  double prior_alpha = 5.0;
  double prior_phi = 0.01;
  AuxNominals nominals;
  double aux_scale = 0.05;
  double noise_std = 0.1;
  std::vector<std::array<double, 2>> sensors;  // empty selects the default grid

  SolverConfig solver;
  LowRankConfig lowrank;
  std::string inverse_apply = "lowrank";  // or "cg"
  int n_samples = 20;
  SpreadConfig spread;
  OracleConfig oracle;
  std::uint64_t master_seed = 0;
  int workers = 1;
  bool persist_samples = false;

  std::vector<std::array<double, 2>> effective_sensors() const;
};

/// Strict JSON parsing: unknown keys, wrong types, and out-of-range values
/// are rejected with the offending key in the message.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

/// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& config);

/// Stable digest of the reproducibility-relevant fields (workers and
/// persistence do not affect results and are excluded).
std::uint64_t config_digest(const RunConfig& config);

}  // namespace hdsa
