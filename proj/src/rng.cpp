#include "hdsa/rng.hpp"

#include <cmath>

namespace hdsa {

namespace {

// splitmix64 finalizer; decorrelates consecutive counter values.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix(mix(master) + stream);
}

Gaussian::Gaussian(std::uint64_t seed) : engine_(seed) {}

double Gaussian::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on u1 in (0,1], u2 in [0,1).
  const double inv = 1.0 / (static_cast<double>(engine_.max()) + 1.0);
  double u1 = (static_cast<double>(engine_()) + 1.0) * inv;
  double u2 = static_cast<double>(engine_()) * inv;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Eigen::VectorXd Gaussian::vector(Eigen::Index n) {
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = (*this)();
  return out;
}

}  // namespace hdsa
