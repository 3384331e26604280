#include "dpmine/synthetic.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <numbers>

namespace dpmine {

namespace {

void check_sizes(Index dim, Index n) {
  require(dim >= 1, ErrorCode::InvalidArgument, "dim must be >= 1");
  require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
}

void check_noise(double noise_sd) {
  if (!(noise_sd > 0.0) || !std::isfinite(noise_sd))
    throw Error(ErrorCode::InvalidVariance, "noise scale must be positive and finite");
}

// ln of the density of Y = +-1 + noise_sd * Z.
double log_mixture_density(double y, double sd) {
  const double a = -(y - 1.0) * (y - 1.0) / (2.0 * sd * sd);
  const double b = -(y + 1.0) * (y + 1.0) / (2.0 * sd * sd);
  const double hi = std::max(a, b);
  return hi + std::log(0.5 * (std::exp(a - hi) + std::exp(b - hi))) -
         std::log(sd * std::sqrt(2.0 * std::numbers::pi));
}

double gaussian_entropy(double sd) {
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sd * sd);
}

} // namespace

PairedSample gen_independent_uniform(Index dim, Index n, Rng &rng) {
  check_sizes(dim, n);
  PairedSample s{Points(n, dim), Points(n, dim), VectorXd()};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dim; ++j) s.xs(i, j) = uniform(rng, -1.0, 1.0);
    for (Index j = 0; j < dim; ++j) s.ys(i, j) = uniform(rng, -1.0, 1.0);
  }
  return s;
}

PairedSample gen_sign_gaussian(Index dim, Index n, double noise_sd, Rng &rng) {
  check_sizes(dim, n);
  check_noise(noise_sd);
  PairedSample s{Points(n, dim), Points(n, dim), VectorXd()};
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < dim; ++j) s.xs(i, j) = standard_normal(rng) >= 0.0 ? 1.0 : -1.0;
    for (Index j = 0; j < dim; ++j) s.ys(i, j) = s.xs(i, j) + noise_sd * standard_normal(rng);
  }
  return s;
}

double true_mi_sign_gaussian(double noise_sd) {
  check_noise(noise_sd);
  auto integrand = [noise_sd](double y) {
    const double lp = log_mixture_density(y, noise_sd);
    return -std::exp(lp) * lp;
  };
  const double lo = -1.0 - 10.0 * noise_sd;
  const double hi = 1.0 + 10.0 * noise_sd;
  double err = 0.0;
  const double h = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, lo, hi, 20, 1e-12, &err);
  return std::max(h - gaussian_entropy(noise_sd), 0.0);
}

double mc_mi_sign_gaussian(double noise_sd, Index draws, Rng &rng) {
  check_noise(noise_sd);
  require(draws >= 1, ErrorCode::InvalidArgument, "need at least one draw");
  double total = 0.0;
  for (Index i = 0; i < draws; ++i) {
    const double x = standard_normal(rng) >= 0.0 ? 1.0 : -1.0;
    total -= log_mixture_density(x + noise_sd * standard_normal(rng), noise_sd);
  }
  return total / static_cast<double>(draws) - gaussian_entropy(noise_sd);
}

namespace {

void check_pmf(const MatrixXd &pmf) {
  if (pmf.size() == 0 || !pmf.allFinite() || (pmf.array() < 0.0).any() ||
      std::abs(pmf.sum() - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidPMF, "table must be nonnegative and sum to 1");
}

} // namespace

double discrete_mi_oracle(const MatrixXd &pmf) {
  check_pmf(pmf);
  const VectorXd row = pmf.rowwise().sum();
  const VectorXd col = pmf.colwise().sum().transpose();
  double mi = 0.0;
  for (Index i = 0; i < pmf.rows(); ++i)
    for (Index j = 0; j < pmf.cols(); ++j)
      if (pmf(i, j) > 0.0) mi += pmf(i, j) * std::log(pmf(i, j) / (row(i) * col(j)));
  return std::max(mi, 0.0);
}

PairedSample gen_discrete_joint(const MatrixXd &pmf, Index n, Rng &rng) {
  check_pmf(pmf);
  check_sizes(1, n);
  PairedSample s{Points(n, 1), Points(n, 1), VectorXd()};
  for (Index k = 0; k < n; ++k) {
    const double u = uniform01(rng) * pmf.sum();
    double acc = 0.0;
    Index r = pmf.rows() - 1, c = pmf.cols() - 1;
    bool found = false;
    for (Index i = 0; i < pmf.rows() && !found; ++i)
      for (Index j = 0; j < pmf.cols() && !found; ++j) {
        acc += pmf(i, j);
        if (u < acc) {
          r = i;
          c = j;
          found = true;
        }
      }
    s.xs(k, 0) = static_cast<double>(r);
    s.ys(k, 0) = static_cast<double>(c);
  }
  return s;
}

CoilSample gen_coil(Index n, Rng &rng) {
  check_sizes(1, n);
  CoilSample s{Points(n, 3), VectorXd(n), Points(n, 3)};
  for (Index i = 0; i < n; ++i) {
    const double t = uniform(rng, -2.0 * std::numbers::pi, 4.0 * std::numbers::pi);
    s.t(i) = t;
    s.raw.row(i) << kCoilRadius * std::cos(t), kCoilRadius * std::sin(t), t;
  }
  for (Index j = 0; j < 3; ++j) {
    const double lo = s.raw.col(j).minCoeff();
    const double hi = s.raw.col(j).maxCoeff();
    if (hi > lo)
      s.points.col(j) = (2.0 * (s.raw.col(j).array() - lo) / (hi - lo) - 1.0).matrix();
    else
      s.points.col(j).setZero();
  }
  return s;
}

std::string to_string(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::IndependentUniform: return "independent_uniform";
    case SyntheticFamily::SignGaussian: return "sign_gaussian";
    case SyntheticFamily::DiscreteJoint: return "discrete_joint";
    case SyntheticFamily::Coil: return "coil";
  }
  return "unknown";
}

SyntheticFamily parse_family(const std::string &text) {
  for (auto f : {SyntheticFamily::IndependentUniform, SyntheticFamily::SignGaussian,
                 SyntheticFamily::DiscreteJoint, SyntheticFamily::Coil})
    if (text == to_string(f)) return f;
  throw Error(ErrorCode::InvalidArgument, "unknown synthetic family '" + text + "'");
}

void SyntheticSpec::validate() const {
  check_sizes(dim, n);
  if (family == SyntheticFamily::SignGaussian) check_noise(noise_sd);
  if (family == SyntheticFamily::DiscreteJoint) check_pmf(pmf_table);
}

PairedSample generate_pairs(const SyntheticSpec &spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, Stream::Data);
  switch (spec.family) {
    case SyntheticFamily::IndependentUniform: return gen_independent_uniform(spec.dim, spec.n, rng);
    case SyntheticFamily::SignGaussian: return gen_sign_gaussian(spec.dim, spec.n, spec.noise_sd, rng);
    case SyntheticFamily::DiscreteJoint: return gen_discrete_joint(spec.pmf_table, spec.n, rng);
    case SyntheticFamily::Coil: break;
  }
  throw Error(ErrorCode::InvalidArgument, "coil is not a paired family");
}

std::optional<double> true_mi(const SyntheticSpec &spec) {
  switch (spec.family) {
    case SyntheticFamily::IndependentUniform: return 0.0;
    case SyntheticFamily::SignGaussian:
      return static_cast<double>(spec.dim) * true_mi_sign_gaussian(spec.noise_sd);
    case SyntheticFamily::DiscreteJoint: return discrete_mi_oracle(spec.pmf_table);
    case SyntheticFamily::Coil: return std::nullopt;
  }
  return std::nullopt;
}

} // namespace dpmine
