#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dpmine/core.hpp"
#include "dpmine/random.hpp"

namespace testing {

using dpmine::Index;
using dpmine::MatrixXd;
using dpmine::VectorXd;

/// Central differences of f at x, one coordinate at a time.
inline VectorXd central_difference(const std::function<double(const VectorXd &)> &f,
                                   const VectorXd &x, double h = 1e-5) {
  VectorXd g(x.size());
  VectorXd probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + step;
    const double up = f(probe);
    probe(i) = x(i) - step;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const VectorXd &a, const VectorXd &b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

inline MatrixXd random_matrix(dpmine::Rng &rng, Index rows, Index cols, double lo = -1.0,
                              double hi = 1.0) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dpmine::uniform(rng, lo, hi);
  return m;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace testing
