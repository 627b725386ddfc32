#ifndef QDIFF_TYPES_HPP
#define QDIFF_TYPES_HPP

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qdiff {

using cplx = std::complex<double>;
using ivec = std::vector<int>;  // lattice vector in Z^d

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// Thrown when a numerical tolerance stated in an operation contract is
// exceeded.  Specific failure modes derive from this.
struct ToleranceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64: used to derive independent per-sample seeds from (seed, index),
// so ensemble results do not depend on scheduling order.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d49b132bf90Fd5ull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x51'7c'c1'b7'27'22'0a'95ull));
}

// Small deterministic RNG wrapper.  Maps the raw 64-bit stream to doubles
// explicitly so that sampled paths are reproducible across standard
// libraries (std::uniform_real_distribution et al. are implementation
// defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc908ull)) {}

  std::uint64_t next_u64() {
    // xorshift* on a splitmix-seeded state
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1Dull;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // exponential with given rate (mean 1/rate)
  double exponential(double rate) {
    // 1 - u in (0, 1], so the log is finite
    return -std::log1p(-uniform()) / rate;
  }

  // index in [0, n) with probability weights[i] / sum(weights)
  int discrete(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  std::uint64_t state_;
};

}  // namespace qdiff

#endif  // QDIFF_TYPES_HPP
