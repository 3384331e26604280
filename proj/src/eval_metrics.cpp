#include "dpmine/eval_metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace dpmine {

namespace {

void check_features(const FeatureSet &f) {
  require(f.rows() >= 2, ErrorCode::EmptySample, "feature sets need at least two rows");
  require(f.allFinite(), ErrorCode::InvalidArgument, "features must be finite");
}

constexpr double kDegeneracyTol = 1e-10;

} // namespace

FeatureMoments feature_moments(const FeatureSet &f) {
  check_features(f);
  FeatureMoments m;
  m.mean = f.colwise().mean().transpose();
  const FeatureSet centered = f.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(f.rows() - 1);
  return m;
}

double trace_sqrt_product(const Eigen::Matrix2d &a, const Eigen::Matrix2d &b) {
  const Eigen::Matrix2d m = a * b;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  double det = m.determinant();
  if (det < -kDegeneracyTol * scale * scale)
    throw Error(ErrorCode::NumericalDegeneracy, "covariance product has negative determinant");
  det = std::max(det, 0.0);
  const double s = m.trace() + 2.0 * std::sqrt(det);
  if (s < -kDegeneracyTol * scale)
    throw Error(ErrorCode::NumericalDegeneracy, "covariance product has negative trace");
  return std::sqrt(std::max(s, 0.0));
}

double fid_from_moments(const FeatureMoments &r, const FeatureMoments &g) {
  const double value = (r.mean - g.mean).squaredNorm() + r.cov.trace() + g.cov.trace() -
                       2.0 * trace_sqrt_product(r.cov, g.cov);
  return std::max(value, 0.0);
}

double fid(const FeatureSet &fr, const FeatureSet &fg) {
  return fid_from_moments(feature_moments(fr), feature_moments(fg));
}

double kid(const FeatureSet &fr, const FeatureSet &fg, int degree) {
  check_features(fr);
  check_features(fg);
  return mmd_squared(WeightedPointSet::uniform(fr), WeightedPointSet::uniform(fg),
                     KernelSpec::polynomial(0.5, 1.0, degree));
}

double mmd_score(const FeatureSet &fr, const FeatureSet &fg, const KernelSpec &spec) {
  check_features(fr);
  check_features(fg);
  return mmd_squared(WeightedPointSet::uniform(fr), WeightedPointSet::uniform(fg), spec);
}

FeatureSet PcaMap::apply(const Points &x) const {
  require(x.cols() == mean.size(), ErrorCode::DimensionMismatch,
          "points differ in dimension from the projection");
  return (x.rowwise() - mean.transpose()) * axes;
}

PcaMap fit_pca2(const Points &reference) {
  require(reference.rows() >= 2, ErrorCode::EmptySample, "need at least two reference points");
  require(reference.cols() >= 2, ErrorCode::DimensionMismatch, "need at least two coordinates");
  PcaMap map;
  map.mean = reference.colwise().mean().transpose();
  const MatrixXd centered = reference.rowwise() - map.mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(reference.rows() - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  const Index d = cov.rows();
  map.axes.resize(d, 2);
  for (Index k = 0; k < 2; ++k) {
    VectorXd v = es.eigenvectors().col(d - 1 - k);
    // Fix the sign so the largest-magnitude entry is positive.
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    map.axes.col(k) = v;
  }
  return map;
}

TraceSummary summarize_trace(const std::vector<double> &values, double truth, Index window,
                             double tol) {
  const auto len = static_cast<Index>(values.size());
  if (window < 1 || window > len)
    throw Error(ErrorCode::InvalidWindow, "window must lie in [1, trace length]");
  require(tol >= 0.0, ErrorCode::InvalidArgument, "tolerance must be >= 0");
  const Eigen::Map<const VectorXd> v(values.data(), len);
  const auto tail = v.tail(window);

  TraceSummary s;
  s.final_window_mean = tail.mean();
  s.final_window_var = (tail.array() - s.final_window_mean).square().mean();
  s.full_var = (v.array() - v.mean()).square().mean();
  s.abs_bias_vs_truth = std::abs(s.final_window_mean - truth);

  // Last epoch outside the band; the band is entered right after it.
  Index last_out = -1;
  for (Index i = 0; i < len; ++i)
    if (std::abs(v(i) - truth) > tol) last_out = i;
  if (last_out < len - 1) s.epochs_to_band = last_out + 2;
  return s;
}

} // namespace dpmine
