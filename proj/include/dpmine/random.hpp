#pragma once

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstdint>
#include <random>

#include "dpmine/core.hpp"

namespace dpmine {

// std::mt19937_64 is fully specified by the standard; boost distributions are
// header-only code, so draws are identical across standard libraries.
using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based split: stream `counter` of `master` never depends on how
/// many other streams were derived.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) noexcept {
  return mix64(mix64(master) ^ mix64(counter + 0x632BE59BD9B4E019ULL));
}

/// Named sub-streams of one run seed.
enum class Stream : std::uint64_t {
  Data = 1,
  Init = 2,
  Posterior = 3,
  Permutation = 4,
  Noise = 5,
  Penalty = 6,
  Evaluation = 7,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
}

inline double uniform01(Rng &rng) { return boost::random::uniform_01<double>()(rng); }

inline double uniform(Rng &rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline double standard_normal(Rng &rng) {
  return boost::random::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double gamma_draw(Rng &rng, double shape) {
  return boost::random::gamma_distribution<double>(shape, 1.0)(rng);
}

/// Uniform integer in [0, n).
inline Index uniform_index(Rng &rng, Index n) {
  return boost::random::uniform_int_distribution<Index>(0, n - 1)(rng);
}

inline MatrixXd standard_normal_matrix(Rng &rng, Index rows, Index cols) {
  MatrixXd m(rows, cols);
  // Row-wise fill so a prefix of rows is stable when `rows` grows.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  return m;
}

} // namespace dpmine
