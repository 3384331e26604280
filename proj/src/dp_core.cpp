#include "dpmine/dp_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dpmine {

namespace {

double log_sum_exp(const Eigen::Ref<const VectorXd> &v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void check_dataset(const Points &data) {
  require(data.rows() > 0 && data.cols() > 0, ErrorCode::EmptyDataset, "dataset has no points");
}

} // namespace

double BaseMeasure::log_density(const Eigen::Ref<const VectorXd> &x) const {
  require(x.size() == dim(), ErrorCode::DimensionMismatch, "point dimension differs from base");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * ((x - mean).array().square() / variances.array() + variances.array().log() + log2pi)
                    .sum();
}

VectorXd BaseMeasure::sample(Rng &rng) const {
  VectorXd x(dim());
  for (Index j = 0; j < dim(); ++j) x(j) = mean(j) + std::sqrt(variances(j)) * standard_normal(rng);
  return x;
}

void DPConfig::validate() const {
  require(concentration >= 0.0 && std::isfinite(concentration), ErrorCode::InvalidArgument,
          "concentration must be finite and nonnegative");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw Error(ErrorCode::InvalidEpsilon, "epsilon must lie in (0, 1)");
  if (truncation_override)
    require(*truncation_override >= 1, ErrorCode::InvalidArgument, "truncation must be >= 1");
  require(truncation_cap >= 2, ErrorCode::InvalidArgument, "truncation cap must be >= 2");
}

double DPPosteriorDraw::base_fraction() const {
  if (source_flags.empty()) return 0.0;
  const auto base = std::count(source_flags.begin(), source_flags.end(), AtomSource::Base);
  return static_cast<double>(base) / static_cast<double>(source_flags.size());
}

BaseMeasure fit_base_measure(const Points &data) {
  check_dataset(data);
  const auto n = static_cast<double>(data.rows());
  BaseMeasure base;
  base.mean = data.colwise().mean().transpose();
  if (data.rows() > 1) {
    base.variances =
        (data.rowwise() - base.mean.transpose()).array().square().colwise().sum().transpose() /
        (n - 1.0);
  } else {
    base.variances = VectorXd::Zero(data.cols());
  }
  base.variances = base.variances.cwiseMax(kVarianceFloor);
  return base;
}

VectorXd sample_dirichlet_weights(Index n_atoms, double total_mass, Rng &rng) {
  require(n_atoms >= 1, ErrorCode::InvalidArgument, "number of atoms must be >= 1");
  require(total_mass > 0.0, ErrorCode::InvalidArgument, "total mass must be positive");
  if (n_atoms == 1) return VectorXd::Ones(1);

  const double shape = total_mass / static_cast<double>(n_atoms);
  VectorXd g(n_atoms);
  for (int attempt = 0; attempt < 2; ++attempt) {
    for (Index i = 0; i < n_atoms; ++i) g(i) = gamma_draw(rng, shape);
    const double sum = g.sum();
    if (g.allFinite() && sum > 0.0 && std::isfinite(sum)) {
      g /= sum;
      return g;
    }
  }
  throw Error(ErrorCode::SamplerFailure, "gamma draws were nonfinite or all zero twice");
}

Index select_truncation(double total_mass, double epsilon, Rng &rng, Index cap) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw Error(ErrorCode::InvalidEpsilon, "epsilon must lie in (0, 1)");
  require(total_mass > 0.0, ErrorCode::InvalidArgument, "total mass must be positive");
  // j = 1 gives ratio 1, which never falls below epsilon.
  for (Index j = 2; j <= cap; ++j) {
    const double shape = total_mass / static_cast<double>(j);
    double sum = 0.0;
    double last = 0.0;
    for (Index i = 0; i < j; ++i) {
      last = gamma_draw(rng, shape);
      sum += last;
    }
    if (sum > 0.0 && last / sum < epsilon) return j;
  }
  throw Error(ErrorCode::TruncationCapExceeded, "stopping rule did not terminate below the cap",
              cap);
}

PosteriorAtoms sample_posterior_atoms(const Points &data, const BaseMeasure &base,
                                      double concentration, Index n_atoms, Rng &rng) {
  check_dataset(data);
  require(n_atoms >= 1, ErrorCode::InvalidArgument, "number of atoms must be >= 1");
  require(base.dim() == data.cols(), ErrorCode::DimensionMismatch,
          "base measure dimension differs from data");
  require(concentration >= 0.0, ErrorCode::InvalidArgument, "concentration must be >= 0");

  const auto n = static_cast<double>(data.rows());
  const double p_base = concentration / (concentration + n);
  PosteriorAtoms out{Points(n_atoms, data.cols()), std::vector<AtomSource>(n_atoms)};
  for (Index i = 0; i < n_atoms; ++i) {
    if (p_base > 0.0 && uniform01(rng) < p_base) {
      out.atoms.row(i) = base.sample(rng).transpose();
      out.source_flags[i] = AtomSource::Base;
    } else {
      out.atoms.row(i) = data.row(uniform_index(rng, data.rows()));
      out.source_flags[i] = AtomSource::Data;
    }
  }
  return out;
}

DPPosteriorDraw draw_posterior(const Points &data, const DPConfig &config, Rng &rng,
                               const BaseMeasure *base, std::optional<Index> fixed_truncation) {
  check_dataset(data);
  config.validate();
  const BaseMeasure fitted = base ? *base : fit_base_measure(data);
  const double total_mass = config.concentration + static_cast<double>(data.rows());

  Index n_atoms = 0;
  if (config.truncation_override)
    n_atoms = *config.truncation_override;
  else if (fixed_truncation)
    n_atoms = *fixed_truncation;
  else
    n_atoms = select_truncation(total_mass, config.epsilon, rng, config.truncation_cap);

  DPPosteriorDraw draw;
  draw.n_data = data.rows();
  draw.weights = config.uniform_mode ? uniform_weights(n_atoms)
                                     : sample_dirichlet_weights(n_atoms, total_mass, rng);
  auto atoms = sample_posterior_atoms(data, fitted, config.concentration, n_atoms, rng);
  draw.atoms = std::move(atoms.atoms);
  draw.source_flags = std::move(atoms.source_flags);
  return draw;
}

double loo_log_likelihood(const Points &data, const BaseMeasure &base, double concentration) {
  check_dataset(data);
  require(data.rows() >= 2, ErrorCode::InvalidArgument, "need at least two points");
  require(base.dim() == data.cols(), ErrorCode::DimensionMismatch,
          "base measure dimension differs from data");
  const Index n = data.rows();
  const Index d = data.cols();
  const auto m = static_cast<double>(n - 1);

  // Silverman's rule per coordinate for the m = n - 1 kernel centers.
  const BaseMeasure spread = fit_base_measure(data);
  const double factor =
      std::pow(4.0 / ((static_cast<double>(d) + 2.0) * m), 1.0 / (static_cast<double>(d) + 4.0));
  const VectorXd h = spread.variances.cwiseSqrt() * factor;
  const double log_norm = -(h.array().log().sum()) - 0.5 * static_cast<double>(d) *
                                                         std::log(2.0 * std::numbers::pi);

  const double a = concentration;
  const double log_w_base = a > 0.0 ? std::log(a / (a + m)) : -INFINITY;
  const double log_w_kde = std::log(m / (a + m));

  double total = 0.0;
  VectorXd kernel_terms(n - 1);
  for (Index i = 0; i < n; ++i) {
    Index k = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double q = ((data.row(i) - data.row(j)).transpose().array() / h.array()).square().sum();
      kernel_terms(k++) = log_norm - 0.5 * q;
    }
    const double log_kde = log_sum_exp(kernel_terms) - std::log(m);
    const double kde_part = log_w_kde + log_kde;
    if (a > 0.0) {
      const double base_part = log_w_base + base.log_density(data.row(i).transpose());
      const double hi = std::max(kde_part, base_part);
      total += hi + std::log(std::exp(kde_part - hi) + std::exp(base_part - hi));
    } else {
      total += kde_part;
    }
  }
  return total;
}

double fit_concentration_map(const Points &data, const BaseMeasure &base,
                             const std::vector<double> &grid) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "concentration grid is empty");
  for (double a : grid)
    require(a > 0.0 && std::isfinite(a), ErrorCode::InvalidArgument,
            "grid values must be positive");
  if (grid.size() == 1) return grid.front();

  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  double best = sorted.front();
  double best_ll = -INFINITY;
  for (double a : sorted) {
    const double ll = loo_log_likelihood(data, base, a);
    if (ll > best_ll) {
      best_ll = ll;
      best = a;
    }
  }
  return best;
}

} // namespace dpmine
