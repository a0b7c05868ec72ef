// Small shared helpers: 2D vector aliases, deterministic RNG, bounded
// parallel_for honoring the EARM_THREADS cap.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace earm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Number of worker threads: min(hardware, EARM_THREADS), at least 1.
int thread_count();

/// Chunked parallel loop over [0, n). The body must only write to
/// slot i of preallocated storage, so results are independent of the
/// thread count and the output stays deterministic.
void parallel_for(int n, const std::function<void(int)>& body);

/// Deterministic uniform double in [0,1) from a 64-bit LCG state.
/// Used instead of std::uniform_real_distribution, whose output is
/// implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::uint64_t state_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace earm
