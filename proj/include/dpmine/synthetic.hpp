#pragma once

#include <optional>
#include <string>

#include "dpmine/core.hpp"
#include "dpmine/mi_estimators.hpp"
#include "dpmine/random.hpp"

namespace dpmine {

/// X, Y iid uniform on (-1, 1)^dim.
PairedSample gen_independent_uniform(Index dim, Index n, Rng &rng);

/// X = sign(Z) coordinatewise, Y = X + noise_sd * N(0, I).
PairedSample gen_sign_gaussian(Index dim, Index n, double noise_sd, Rng &rng);

/// I(X; Y) per coordinate of the sign-Gaussian family, by adaptive quadrature.
double true_mi_sign_gaussian(double noise_sd);

/// Monte-Carlo estimate of the same quantity from `draws` samples of Y.
double mc_mi_sign_gaussian(double noise_sd, Index draws, Rng &rng);

/// Exact MI (nats) of a finite joint pmf.
double discrete_mi_oracle(const MatrixXd &pmf);

/// Row and column category indices (as 1-vectors) drawn from `pmf`.
PairedSample gen_discrete_joint(const MatrixXd &pmf, Index n, Rng &rng);

struct CoilSample {
  Points points;  ///< min-max normalized to [-1, 1] per coordinate
  VectorXd t;
  Points raw;     ///< (6 cos t, 6 sin t, t)
};

inline constexpr double kCoilRadius = 6.0;

CoilSample gen_coil(Index n, Rng &rng);

enum class SyntheticFamily { IndependentUniform, SignGaussian, DiscreteJoint, Coil };

std::string to_string(SyntheticFamily f);
SyntheticFamily parse_family(const std::string &text);

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::SignGaussian;
  Index dim = 1;
  Index n = 16;
  double noise_sd = 0.2;
  MatrixXd pmf_table;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Paired data for the MI families (coil is not a paired family).
PairedSample generate_pairs(const SyntheticSpec &spec);

/// Ground-truth MI of the family (summed over coordinates).
std::optional<double> true_mi(const SyntheticSpec &spec);

} // namespace dpmine
