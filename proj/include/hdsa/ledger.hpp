#pragma once

#include <string>
#include <vector>

namespace hdsa {

/// Counts linear solves with the (possibly incremental) state operator.
/// Every solve against A(m, theta) counts as one PDE solve: state, adjoint,
/// incremental state/adjoint, and their theta-differentiated variants alike.
/// Factorizations, prior applies, and mass solves are not PDE solves.
struct SolveCounter {
  long solves = 0;
  void add(long n = 1) { solves += n; }
};

/// Per-sample PDE solve counts split by pipeline phase, plus the solver
/// statistics the phase formulas are checked against.
struct SampleCosts {
  long data_generation = 0;   // expected: 1
  long inverse_solve = 0;     // expected: 2 + 2L + 2*sum(I) + line-search extras
  long lowrank_build = 0;     // expected: 2r + 2
  long risk_sensitivity = 0;  // expected: 2 (plus CG inverse applies if used)
  long map_sensitivity = 0;   // expected: 2 n_theta (plus CG inverse applies)
  int newton_steps = 0;
  long cg_iterations = 0;
  int linesearch_extra = 0;
  int lowrank_rank = 0;
  bool converged = false;

  long total() const {
    return data_generation + inverse_solve + lowrank_build + risk_sensitivity +
           map_sensitivity;
  }
};

/// Run-level cost accounting: one row per sample plus a global counter that
/// every phase counter also feeds, so conservation is checkable.
struct CostLedger {
  std::vector<SampleCosts> samples;
  long misc_solves = 0;  // solves outside the per-sample pipeline phases

  long phase_total(long SampleCosts::*phase) const {
    long t = 0;
    for (const auto& s : samples) t += s.*phase;
    return t;
  }
  long grand_total() const {
    long t = misc_solves;
    for (const auto& s : samples) t += s.total();
    return t;
  }
};

/// JSON rendering used by the command-line driver.
std::string ledger_to_json(const CostLedger& ledger);

}  // namespace hdsa
