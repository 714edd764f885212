#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace hdsa {

/// Counter-based seed derivation. Stream `k` of a run keyed by `master`
/// always receives the same seed, independent of how many streams the run
/// ends up using, so adding samples never reshuffles earlier draws.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Standard normal generator with a fixed, platform-independent algorithm
/// (mt19937_64 driving a Box-Muller transform). std::normal_distribution is
/// avoided on purpose: its output sequence is implementation defined.
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed);

  double operator()();
  Eigen::VectorXd vector(Eigen::Index n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hdsa
