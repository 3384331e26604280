#pragma once

// Reference computations written independently of the library code paths.

#include <Eigen/Eigenvalues>
#include <boost/math/constants/constants.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "dpmine/core.hpp"

namespace oracles {

using dpmine::Index;

/// I(X; Y) for X = +-1 fair, Y = X + sd * N(0, 1): H(Y) by composite Simpson
/// on a fixed fine grid, minus the entropy of the noise.
inline double simpson_mi_sign_gaussian(double sd, int intervals = 200000) {
  const double pi = boost::math::constants::pi<double>();
  auto phi = [&](double y, double mu) {
    return std::exp(-(y - mu) * (y - mu) / (2 * sd * sd)) / (sd * std::sqrt(2 * pi));
  };
  const double lo = -1 - 12 * sd, hi = 1 + 12 * sd;
  const double h = (hi - lo) / intervals;
  double s = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double y = lo + i * h;
    const double p = 0.5 * phi(y, -1) + 0.5 * phi(y, 1);
    const double f = p > 0 ? -p * std::log(p) : 0.0;
    s += f * (i == 0 || i == intervals ? 1 : (i % 2 ? 4 : 2));
  }
  return s * h / 3 - 0.5 * std::log(2 * pi * std::exp(1.0) * sd * sd);
}

/// Biased MMD^2 with uniform weights and a gaussian mixture kernel, as a
/// plain double loop.
template <typename A, typename B>
double loop_mmd(const A &p, const B &q, const std::vector<double> &sigmas) {
  auto k = [&](const auto &u, Index i, const auto &v, Index j) {
    double sq = 0.0;
    for (Index c = 0; c < u.cols(); ++c) sq += (u(i, c) - v(j, c)) * (u(i, c) - v(j, c));
    double s = 0.0;
    for (double sig : sigmas) s += std::exp(-sq / (2.0 * sig * sig));
    return s;
  };
  double pp = 0.0, pq = 0.0, qq = 0.0;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.rows(); ++j) pp += k(p, i, p, j);
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < q.rows(); ++j) pq += k(p, i, q, j);
  for (Index i = 0; i < q.rows(); ++i)
    for (Index j = 0; j < q.rows(); ++j) qq += k(q, i, q, j);
  const double n = static_cast<double>(p.rows()), m = static_cast<double>(q.rows());
  return pp / (n * n) - 2.0 * pq / (n * m) + qq / (m * m);
}

/// Frechet distance of two 2-D feature sets with the square root taken
/// through symmetric eigendecompositions:
/// tr sqrt(S_r S_g) = tr sqrt(S_r^1/2 S_g S_r^1/2).
template <typename F>
double eigen_fid(const F &fr, const F &fg) {
  auto moments = [](const F &f) {
    const Eigen::Vector2d mu = f.colwise().mean().transpose();
    Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
    for (Index i = 0; i < f.rows(); ++i) {
      const Eigen::Vector2d d = f.row(i).transpose() - mu;
      s += d * d.transpose();
    }
    return std::pair{mu, Eigen::Matrix2d(s / static_cast<double>(f.rows() - 1))};
  };
  const auto [mr, sr] = moments(fr);
  const auto [mg, sg] = moments(fg);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> er(sr);
  const Eigen::Matrix2d root = er.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> inner(root * sg * root);
  const double tr = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mr - mg).squaredNorm() + sr.trace() + sg.trace() - 2.0 * tr;
}

} // namespace oracles
