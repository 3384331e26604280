#pragma once

#include <optional>
#include <vector>

#include "dpmine/core.hpp"
#include "dpmine/distances.hpp"
#include "dpmine/mi_estimators.hpp"

namespace dpmine {

/// Rows of 2-D features.
using FeatureSet = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Sample mean and unbiased covariance of a feature set.
struct FeatureMoments {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

FeatureMoments feature_moments(const FeatureSet &f);

/// tr sqrt(A B) for 2x2 covariances via the closed form
/// tr sqrt(M) = sqrt(tr M + 2 sqrt(det M)).
double trace_sqrt_product(const Eigen::Matrix2d &a, const Eigen::Matrix2d &b);

/// Frechet distance between Gaussians with the given moments.
double fid_from_moments(const FeatureMoments &r, const FeatureMoments &g);

double fid(const FeatureSet &fr, const FeatureSet &fg);

/// Biased MMD^2 with the cubic polynomial kernel (0.5 u.v + 1)^3.
double kid(const FeatureSet &fr, const FeatureSet &fg, int degree = 3);

/// Biased MMD^2 with the gaussian mixture kernel, uniform weights.
double mmd_score(const FeatureSet &fr, const FeatureSet &fg,
                 const KernelSpec &spec = KernelSpec{});

/// Projection onto the first two principal axes of a reference cloud.
struct PcaMap {
  VectorXd mean;
  MatrixXd axes; ///< d x 2, unit columns, leading eigenvectors first

  [[nodiscard]] FeatureSet apply(const Points &x) const;
};

PcaMap fit_pca2(const Points &reference);

struct TraceSummary {
  double final_window_mean = 0.0;
  double final_window_var = 0.0;
  double full_var = 0.0;
  double abs_bias_vs_truth = 0.0;
  std::optional<Index> epochs_to_band; ///< 1-based; empty when never reached
};

/// Variances are population variances (divisor = count). Bias uses the final
/// window mean.
TraceSummary summarize_trace(const std::vector<double> &values, double truth, Index window,
                             double tol);

inline TraceSummary summarize_trace(const EstimateTrace &trace, double truth, Index window,
                                    double tol) {
  return summarize_trace(trace.values, truth, window, tol);
}

} // namespace dpmine
