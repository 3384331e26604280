#pragma once

#include <cmath>
#include <vector>

#include "dpmine/core.hpp"
#include "dpmine/nn.hpp"
#include "dpmine/random.hpp"

namespace dpmine {

enum class KernelFamily { GaussianMixture, Polynomial };

struct KernelSpec {
  KernelFamily family = KernelFamily::GaussianMixture;
  std::vector<double> sigmas{2.0, 5.0, 10.0, 20.0, 40.0, 80.0};
  double poly_scale = 0.5;
  double poly_offset = 1.0;
  int poly_degree = 3;

  static KernelSpec gaussian(std::vector<double> sigmas) {
    return {KernelFamily::GaussianMixture, std::move(sigmas), 0.5, 1.0, 3};
  }
  static KernelSpec polynomial(double scale = 0.5, double offset = 1.0, int degree = 3) {
    return {KernelFamily::Polynomial, {}, scale, offset, degree};
  }
  void validate() const;
};

template <typename DX, typename DY>
double kernel_eval(const KernelSpec &spec, const Eigen::MatrixBase<DX> &x,
                   const Eigen::MatrixBase<DY> &y) {
  require(x.size() == y.size(), ErrorCode::DimensionMismatch, "kernel arguments differ in length");
  if (spec.family == KernelFamily::Polynomial)
    return std::pow(spec.poly_scale * x.dot(y) + spec.poly_offset, spec.poly_degree);
  const double sq = (x - y).squaredNorm();
  double total = 0.0;
  for (double s : spec.sigmas) total += std::exp(-sq / (2.0 * s * s));
  return total;
}

/// K(i, j) = k(p_i, q_j) for row-point matrices.
MatrixXd kernel_matrix(const KernelSpec &spec, const Points &p, const Points &q);

/// sum_t a_t grad_x k(x_l, y_t), one row per point of `x`.
MatrixXd kernel_grad_sum(const KernelSpec &spec, const Points &x, const Points &y,
                         const VectorXd &a);

struct WeightedPointSet {
  Points points;
  VectorXd weights;

  static WeightedPointSet uniform(Points points) {
    const Index n = points.rows();
    return {std::move(points), uniform_weights(n)};
  }
  [[nodiscard]] Index size() const noexcept { return points.rows(); }
  [[nodiscard]] Index dim() const noexcept { return points.cols(); }
  void validate() const;
};

/// Weighted biased (V-statistic) MMD^2, clamped at zero.
double mmd_squared(const WeightedPointSet &p, const WeightedPointSet &q, const KernelSpec &spec);

/// Unclamped MMD^2 with its gradient w.r.t. the point coordinates of both sets.
struct MmdTerms {
  double value = 0.0;
  MatrixXd grad_p;
  MatrixXd grad_q;
};

MmdTerms mmd_squared_with_grad(const WeightedPointSet &p, const WeightedPointSet &q,
                               const KernelSpec &spec);

struct WassersteinConfig {
  Index steps = 200;
  double learning_rate = 1e-3;
  double gp_lambda = 10.0;
  std::vector<Index> hidden{64, 64};
  /// Lower bound on the number of interpolates per penalty evaluation.
  Index min_interpolates = 1;
  /// Negate the critic's output layer whenever the transport term is negative.
  bool sign_flip = true;

  void validate() const;
};

Mlp make_distance_critic(Index dim, const WassersteinConfig &config, Rng &rng);

struct WassersteinResult {
  double value = 0.0;      ///< penalized objective at the final critic
  double transport = 0.0;  ///< sum w D(p) - sum v D(q)
  double penalty = 0.0;    ///< unscaled gradient penalty
  std::vector<double> history;
};

/// Points x = u p + (1 - u) q over cyclic pairs, u ~ U(0, 1).
Points penalty_interpolates(const Points &p, const Points &q, Index count, Rng &rng);

/// Trains `critic` by Adam ascent on the penalized dual objective.
WassersteinResult wasserstein_dual(const WeightedPointSet &p, const WeightedPointSet &q,
                                   Mlp &critic, const WassersteinConfig &config, Rng &rng);

struct WmmdResult {
  double ws = 0.0;
  double mmd = 0.0;
  double total = 0.0;
};

WmmdResult wmmd(const WeightedPointSet &p, const WeightedPointSet &q, Mlp &critic,
                const KernelSpec &spec, const WassersteinConfig &config, Rng &rng);

} // namespace dpmine
