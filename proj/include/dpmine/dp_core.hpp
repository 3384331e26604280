#pragma once

#include <optional>
#include <vector>

#include "dpmine/core.hpp"
#include "dpmine/random.hpp"

namespace dpmine {

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr Index kDefaultTruncationCap = 10000;

/// Diagonal normal prior centered on the data.
struct BaseMeasure {
  VectorXd mean;
  VectorXd variances;

  [[nodiscard]] Index dim() const noexcept { return mean.size(); }
  [[nodiscard]] double log_density(const Eigen::Ref<const VectorXd> &x) const;
  [[nodiscard]] VectorXd sample(Rng &rng) const;
};

struct DPConfig {
  double concentration = 1.0;
  double epsilon = 0.01;
  std::optional<Index> truncation_override;
  Index truncation_cap = kDefaultTruncationCap;
  /// Replace Dirichlet weights by exact 1/N (reduction and property checks only).
  bool uniform_mode = false;
  /// When non-empty, `concentration` is chosen by MAP over this grid before use.
  std::vector<double> map_grid;

  void validate() const;
};

enum class AtomSource : unsigned char { Base, Data };

/// One finite posterior realization sum_i weights[i] * delta(atoms.row(i)).
struct DPPosteriorDraw {
  Points atoms;
  VectorXd weights;
  Index n_data = 0;
  std::vector<AtomSource> source_flags;

  [[nodiscard]] Index size() const noexcept { return weights.size(); }
  [[nodiscard]] double base_fraction() const;
};

BaseMeasure fit_base_measure(const Points &data);

VectorXd sample_dirichlet_weights(Index n_atoms, double total_mass, Rng &rng);

Index select_truncation(double total_mass, double epsilon, Rng &rng,
                        Index cap = kDefaultTruncationCap);

struct PosteriorAtoms {
  Points atoms;
  std::vector<AtomSource> source_flags;
};

PosteriorAtoms sample_posterior_atoms(const Points &data, const BaseMeasure &base,
                                      double concentration, Index n_atoms, Rng &rng);

/// Full draw. `base` defaults to fit_base_measure(data). When
/// `fixed_truncation` is set it is used instead of the stopping rule (the
/// config override still wins).
DPPosteriorDraw draw_posterior(const Points &data, const DPConfig &config, Rng &rng,
                               const BaseMeasure *base = nullptr,
                               std::optional<Index> fixed_truncation = std::nullopt);

/// Leave-one-out predictive log-likelihood of the posterior mean measure,
/// with a Gaussian product-kernel smoothing (Silverman bandwidths) of the
/// empirical component.
double loo_log_likelihood(const Points &data, const BaseMeasure &base, double concentration);

/// Grid value maximizing loo_log_likelihood; ties go to the smaller value.
double fit_concentration_map(const Points &data, const BaseMeasure &base,
                             const std::vector<double> &grid);

} // namespace dpmine
