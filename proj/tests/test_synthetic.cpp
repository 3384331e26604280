#include <doctest.h>

#include <boost/math/constants/constants.hpp>

#include "dpmine/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dpmine;
using testing::error_code_of;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const VectorXd &v) {
  const double m = v.mean();
  return {m, (v.array() - m).square().sum() / static_cast<double>(v.size() - 1)};
}

} // namespace

TEST_CASE("independent uniform: moments, independence, determinism") {
  Rng rng(10);
  const auto s = gen_independent_uniform(3, 10000, rng);
  for (Index c = 0; c < 3; ++c) {
    const VectorXd x = s.xs.col(c), y = s.ys.col(c);
    CHECK((x.array().abs() < 1.0).all());
    const double se = std::sqrt(1.0 / 3.0 / 10000.0);
    CHECK(std::abs(moments(x).mean) < 3 * se);
    CHECK(std::abs(moments(y).mean) < 3 * se);
    const double corr = ((x.array() - x.mean()) * (y.array() - y.mean())).mean() /
                        std::sqrt(moments(x).var * moments(y).var);
    CHECK(std::abs(corr) < 3.0 / std::sqrt(10000.0));
  }
  Rng a(7), b(7);
  const auto p = gen_independent_uniform(1, 16, a), q = gen_independent_uniform(1, 16, b);
  CHECK(p.xs == q.xs);
  CHECK(p.ys == q.ys);
}

TEST_CASE("sign-Gaussian: support, noise moments, balance") {
  Rng rng(2);
  const double sd = 0.2;
  const auto s = gen_sign_gaussian(2, 10000, sd, rng);
  CHECK((s.xs.array().abs() == 1.0).all());
  for (Index c = 0; c < 2; ++c) {
    const Moments e = moments(s.ys.col(c) - s.xs.col(c));
    CHECK(std::abs(e.mean) < 3 * sd / 100.0);
    CHECK(std::abs(e.var - sd * sd) < 3 * sd * sd * std::sqrt(2.0 / 9999.0));
    const double plus = (s.xs.col(c).array() > 0).cast<double>().mean();
    CHECK(std::abs(plus - 0.5) <= 0.015);
  }
  Rng a(3), b(3);
  CHECK(gen_sign_gaussian(4, 8, sd, a).ys == gen_sign_gaussian(4, 8, sd, b).ys);
}

TEST_CASE("sign-Gaussian MI: value and oracles") {
  const double mi = true_mi_sign_gaussian(0.2);
  CHECK(std::abs(mi - 0.69) <= 0.005);
  CHECK(std::abs(mi - oracles::simpson_mi_sign_gaussian(0.2)) < 1e-6);
  Rng rng(4);
  CHECK(std::abs(mc_mi_sign_gaussian(0.2, 10000000, rng) - mi) < 1e-3);
  CHECK(true_mi_sign_gaussian(1e3) < 1e-3);
  CHECK(error_code_of([] { true_mi_sign_gaussian(0.0); }) == ErrorCode::InvalidVariance);
  CHECK(error_code_of([] { true_mi_sign_gaussian(-1.0); }) == ErrorCode::InvalidVariance);
}

TEST_CASE("sign-Gaussian MI decreases with noise") {
  // below sd ~ 0.15 the value equals ln 2 to double precision
  double last = INFINITY;
  for (double sd : {0.2, 0.3, 0.4, 0.5, 0.8, 1.0, 2.0, 3.0, 5.0, 10.0}) {
    const double v = true_mi_sign_gaussian(sd);
    CHECK(v < last);
    CHECK(v >= 0.0);
    last = v;
  }
}

TEST_CASE("sign-Gaussian family MI adds over coordinates") {
  SyntheticSpec spec;
  spec.dim = 7;
  CHECK(*true_mi(spec) == doctest::Approx(7.0 * true_mi_sign_gaussian(0.2)));
  spec.family = SyntheticFamily::IndependentUniform;
  CHECK(*true_mi(spec) == 0.0);
}

TEST_CASE("discrete MI: listed tables") {
  MatrixXd uniform = MatrixXd::Constant(2, 2, 0.25);
  CHECK(std::abs(discrete_mi_oracle(uniform)) < 1e-15);
  MatrixXd diag(2, 2);
  diag << 0.5, 0, 0, 0.5;
  CHECK(discrete_mi_oracle(diag) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  MatrixXd t(2, 2);
  t << 0.4, 0.1, 0.1, 0.4;
  // 0.8 ln 1.6 + 0.2 ln 0.4, evaluated at high precision
  CHECK(discrete_mi_oracle(t) == doctest::Approx(0.19274475702175753).epsilon(1e-14));

  MatrixXd bad(2, 2);
  bad << 0.5, 0.5, 0.5, -0.5;
  CHECK(error_code_of([&] { discrete_mi_oracle(bad); }) == ErrorCode::InvalidPMF);
  CHECK(error_code_of([] { discrete_mi_oracle(MatrixXd::Constant(2, 2, 0.3)); }) ==
        ErrorCode::InvalidPMF);
}

TEST_CASE("discrete MI: nonnegative, zero on product tables") {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const Index r = 2 + k % 4, c = 1 + k % 5;
    VectorXd a = testing::random_matrix(rng, r, 1, 0, 1), b = testing::random_matrix(rng, c, 1, 0, 1);
    a /= a.sum();
    b /= b.sum();
    CHECK(std::abs(discrete_mi_oracle(a * b.transpose())) < 1e-12);
    MatrixXd j = testing::random_matrix(rng, r, c, 0, 1);
    j /= j.sum();
    CHECK(discrete_mi_oracle(j) >= 0.0);
  }
}

TEST_CASE("discrete joint sampler follows the table") {
  MatrixXd t(2, 2);
  t << 0.4, 0.1, 0.1, 0.4;
  Rng rng(6);
  const auto s = gen_discrete_joint(t, 20000, rng);
  MatrixXd counts = MatrixXd::Zero(2, 2);
  for (Index i = 0; i < s.size(); ++i)
    counts(static_cast<Index>(s.xs(i, 0)), static_cast<Index>(s.ys(i, 0))) += 1;
  counts /= 20000.0;
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j)
      CHECK(std::abs(counts(i, j) - t(i, j)) < 4 * std::sqrt(t(i, j) * (1 - t(i, j)) / 20000.0));
}

TEST_CASE("coil: range, circle identity, uniform t") {
  Rng rng(7);
  const auto c = gen_coil(5000, rng);
  CHECK((c.points.array().abs() <= 1.0).all());
  const double pi = boost::math::constants::pi<double>();
  for (Index i = 0; i < 5000; ++i) {
    CHECK(std::abs(c.raw(i, 0) * c.raw(i, 0) + c.raw(i, 1) * c.raw(i, 1) - 36.0) < 1e-9);
    CHECK(c.raw(i, 2) == c.t(i));
  }
  CHECK(c.t.minCoeff() >= -2 * pi);
  CHECK(c.t.maxCoeff() <= 4 * pi);
  std::vector<int> bins(20, 0);
  for (Index i = 0; i < 5000; ++i)
    ++bins[std::min<std::size_t>(19, static_cast<std::size_t>((c.t(i) + 2 * pi) / (6 * pi) * 20))];
  const double bound = 4.0 * std::sqrt(5000.0 * 0.05 * 0.95);
  for (int b : bins) CHECK(std::abs(b - 250.0) <= bound);
  for (Index d = 0; d < 3; ++d) {
    CHECK(c.points.col(d).minCoeff() == doctest::Approx(-1.0));
    CHECK(c.points.col(d).maxCoeff() == doctest::Approx(1.0));
  }
}

TEST_CASE("generate_pairs is deterministic and validates") {
  SyntheticSpec spec;
  spec.dim = 3;
  spec.seed = 11;
  CHECK(generate_pairs(spec).ys == generate_pairs(spec).ys);
  spec.seed = 12;
  const auto other = generate_pairs(spec);
  spec.seed = 11;
  CHECK(generate_pairs(spec).ys != other.ys);
  spec.noise_sd = 0.0;
  CHECK(error_code_of([&] { generate_pairs(spec); }) == ErrorCode::InvalidVariance);
  CHECK(parse_family(to_string(SyntheticFamily::DiscreteJoint)) == SyntheticFamily::DiscreteJoint);
}
