#include <doctest.h>

#include "dpmine/eval_metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dpmine;
using testing::error_code_of;

namespace {

FeatureSet random_features(Rng &rng, Index n, double spread = 1.0) {
  // correlated cloud with a random linear map, so covariances do not commute
  const MatrixXd z = testing::random_matrix(rng, n, 2, -1, 1);
  const MatrixXd a = testing::random_matrix(rng, 2, 2, -spread, spread);
  const Eigen::RowVector2d shift = testing::random_matrix(rng, 1, 2, -2, 2);
  return (z * a).rowwise() + shift;
}

} // namespace

TEST_CASE("FID examples") {
  Rng rng(1);
  const FeatureSet f = random_features(rng, 200);
  CHECK(std::abs(fid(f, f)) <= 1e-10);

  FeatureMoments a{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  FeatureMoments b{Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity()};
  CHECK(fid_from_moments(a, b) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK(error_code_of([&] { fid(f, f.topRows(1)); }) == ErrorCode::EmptySample);
}

TEST_CASE("FID matches the eigendecomposition oracle") {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const FeatureSet fr = random_features(rng, 200, 1.0 + k % 5);
    const FeatureSet fg = random_features(rng, 200, 1.0 + k % 3);
    CHECK(std::abs(fid(fr, fg) - oracles::eigen_fid(fr, fg)) <= 1e-8);
  }
}

TEST_CASE("FID is symmetric") {
  Rng rng(3);
  for (int k = 0; k < 30; ++k) {
    const FeatureSet fr = random_features(rng, 50), fg = random_features(rng, 80);
    CHECK(std::abs(fid(fr, fg) - fid(fg, fr)) < 1e-9);
  }
}

TEST_CASE("trace of the product square root on commuting covariances") {
  const Eigen::Matrix2d a = Eigen::Vector2d(4.0, 9.0).asDiagonal();
  const Eigen::Matrix2d b = Eigen::Vector2d(1.0, 4.0).asDiagonal();
  CHECK(trace_sqrt_product(a, b) == doctest::Approx(2.0 + 6.0));
}

TEST_CASE("KID examples") {
  Rng rng(4);
  const FeatureSet f = random_features(rng, 60);
  CHECK(std::abs(kid(f, f)) <= 1e-10);
  // duplicated singletons: {(0,0)} vs {(1,1)} with k values 1, 1, 8
  FeatureSet zero = FeatureSet::Zero(2, 2), one = FeatureSet::Ones(2, 2);
  CHECK(kid(zero, one) == doctest::Approx(7.0).epsilon(1e-14));
  const FeatureSet g = random_features(rng, 40);
  CHECK(std::abs(kid(f, g) - kid(g, f)) < 1e-9);
}

TEST_CASE("KID with a linear kernel is a squared mean difference") {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const FeatureSet fr = random_features(rng, 30), fg = random_features(rng, 45);
    const double expected =
        0.5 * (fr.colwise().mean() - fg.colwise().mean()).squaredNorm();
    CHECK(kid(fr, fg, 1) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("MMD score") {
  Rng rng(6);
  const FeatureSet a = random_features(rng, 30), b = random_features(rng, 25);
  CHECK(std::abs(mmd_score(a, a)) <= 1e-10);
  CHECK(mmd_score(a, b) ==
        mmd_squared(WeightedPointSet::uniform(a), WeightedPointSet::uniform(b), KernelSpec{}));
  CHECK(std::abs(mmd_score(a, b) - mmd_score(b, a)) < 1e-9);

  FeatureSet far = a;
  far.array() += 100.0;
  const double v = mmd_score(a, far);
  CHECK(std::abs(v - oracles::loop_mmd(a, far, KernelSpec{}.sigmas)) <= 1e-10);
  CHECK(v < 12.0);
  CHECK(v > mmd_score(a, b));
}

TEST_CASE("PCA projection") {
  Rng rng(7);
  Points x(500, 3);
  for (Index i = 0; i < 500; ++i)
    x.row(i) << 5.0 * standard_normal(rng), 2.0 * standard_normal(rng), 0.1 * standard_normal(rng);
  const PcaMap map = fit_pca2(x);
  CHECK(std::abs(std::abs(map.axes(0, 0)) - 1.0) < 0.01);
  CHECK(std::abs(std::abs(map.axes(1, 1)) - 1.0) < 0.01);
  CHECK(std::abs(map.axes.col(0).dot(map.axes.col(1))) < 1e-12);
  const FeatureSet f = map.apply(x);
  CHECK(f.rows() == 500);
  CHECK(f.colwise().mean().norm() < 1e-10);
}

TEST_CASE("summarize_trace examples") {
  const std::vector<double> flat(50, 0.69);
  const TraceSummary c = summarize_trace(flat, 0.69, 10, 0.05);
  CHECK(c.abs_bias_vs_truth < 1e-15);
  CHECK(c.final_window_var < 1e-30);
  CHECK(c.full_var < 1e-30);
  REQUIRE(c.epochs_to_band.has_value());
  CHECK(*c.epochs_to_band == 1);

  // ramp reaches the truth at index 10 and stays there
  std::vector<double> ramp(20);
  for (int i = 0; i < 20; ++i) ramp[static_cast<std::size_t>(i)] = i < 10 ? 1.0 - 0.1 * (10 - i) : 1.0;
  CHECK(*summarize_trace(ramp, 1.0, 5, 0.01).epochs_to_band == 11);

  const std::vector<double> off(10, 3.0);
  CHECK_FALSE(summarize_trace(off, 0.0, 5, 0.1).epochs_to_band.has_value());

  CHECK(error_code_of([&] { summarize_trace(flat, 0.0, 0, 0.1); }) == ErrorCode::InvalidWindow);
  CHECK(error_code_of([&] { summarize_trace(flat, 0.0, 51, 0.1); }) == ErrorCode::InvalidWindow);
}

TEST_CASE("summarize_trace matches a direct recomputation") {
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> t(200);
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = 0.69 * (1.0 - std::exp(-static_cast<double>(i) / 30.0)) + 0.05 * standard_normal(rng);
    const std::size_t w = 100;
    double sum = 0, tail = 0;
    for (std::size_t i = 0; i < t.size(); ++i) sum += t[i];
    for (std::size_t i = t.size() - w; i < t.size(); ++i) tail += t[i];
    const double mean = sum / 200.0, tmean = tail / 100.0;
    double fv = 0, tv = 0;
    for (std::size_t i = 0; i < t.size(); ++i) fv += (t[i] - mean) * (t[i] - mean) / 200.0;
    for (std::size_t i = t.size() - w; i < t.size(); ++i) tv += (t[i] - tmean) * (t[i] - tmean) / 100.0;
    std::size_t band = t.size() + 1;
    for (std::size_t e = t.size(); e-- > 0;) {
      if (std::abs(t[e] - 0.69) > 0.1) break;
      band = e + 1;
    }
    const TraceSummary s = summarize_trace(t, 0.69, 100, 0.1);
    CHECK(s.final_window_mean == doctest::Approx(tmean).epsilon(1e-12));
    CHECK(s.final_window_var == doctest::Approx(tv).epsilon(1e-10));
    CHECK(s.full_var == doctest::Approx(fv).epsilon(1e-10));
    CHECK(s.abs_bias_vs_truth == doctest::Approx(std::abs(tmean - 0.69)).epsilon(1e-10));
    if (band <= t.size()) {
      REQUIRE(s.epochs_to_band.has_value());
      CHECK(static_cast<std::size_t>(*s.epochs_to_band) == band);
    } else {
      CHECK_FALSE(s.epochs_to_band.has_value());
    }
  }
}
