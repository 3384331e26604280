#include <doctest.h>

#include <filesystem>

#include "dpmine/nn.hpp"
#include "support.hpp"

using namespace dpmine;
using testing::central_difference;
using testing::error_code_of;
using testing::relative_error;

namespace {

double activate(const Activation &a, double z) {
  switch (a.kind) {
    case ActivationKind::Relu: return z > 0 ? z : 0.0;
    case ActivationKind::LeakyRelu: return z > 0 ? z : a.slope * z;
    case ActivationKind::Tanh: return std::tanh(z);
    case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case ActivationKind::Identity: return z;
  }
  return z;
}

// Plain loops over the documented [W (out x in, column-major), b] layout.
std::vector<double> loop_forward(const Mlp &net, std::vector<double> x) {
  const auto &dims = net.layer_dims();
  const VectorXd &p = net.params();
  Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index in = dims[l], out = dims[l + 1];
    std::vector<double> y(static_cast<std::size_t>(out));
    for (Index o = 0; o < out; ++o) {
      double z = p(off + in * out + o);
      for (Index i = 0; i < in; ++i) z += p(off + i * out + o) * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = activate(net.activations()[l], z);
    }
    off += in * out + out;
    x = std::move(y);
  }
  return x;
}

Mlp random_net(std::vector<Index> dims, std::vector<Activation> acts, std::uint64_t seed,
               double bias_scale = 0.3) {
  Rng rng(seed);
  Mlp net = Mlp::glorot(std::move(dims), std::move(acts), rng);
  for (Index l = 0; l < net.num_layers(); ++l)
    for (Index k = 0; k < net.bias(l).size(); ++k) net.bias(l)(k) = bias_scale * standard_normal(rng);
  return net;
}

const std::vector<Activation> kSmoothActs{Activation::tanh(), Activation::sigmoid(),
                                          Activation::leaky_relu(0.2), Activation::relu(),
                                          Activation::identity()};

} // namespace

TEST_CASE("forward: identity layer") {
  Mlp net({2, 2}, {Activation::identity()});
  net.weight(0) = Eigen::Matrix2d::Identity();
  VectorXd x(2);
  x << 1, 2;
  CHECK(forward(net, x) == x);
}

TEST_CASE("forward: zero network gives zero") {
  Mlp net({3, 5, 1}, {Activation::relu(), Activation::identity()});
  Rng rng(1);
  for (int k = 0; k < 10; ++k) CHECK(forward(net, testing::random_matrix(rng, 3, 1))(0) == 0.0);
}

TEST_CASE("forward: matches an independent loop implementation") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Mlp net = random_net({2, 16, 1}, {Activation::tanh(), Activation::identity()}, s);
    VectorXd x(2);
    x << 0.3, -0.7;
    CHECK(forward(net, x)(0) == doctest::Approx(loop_forward(net, {0.3, -0.7})[0]).epsilon(1e-13));
  }
  const Mlp deep = random_net({4, 7, 6, 3}, {Activation::relu(), Activation::leaky_relu(0.1),
                                             Activation::sigmoid()}, 99);
  VectorXd x(4);
  x << 0.1, -0.2, 0.5, 1.5;
  const auto ref = loop_forward(deep, {0.1, -0.2, 0.5, 1.5});
  const VectorXd got = forward(deep, x);
  for (Index k = 0; k < 3; ++k) CHECK(got(k) == doctest::Approx(ref[static_cast<std::size_t>(k)]));
}

TEST_CASE("forward: dimension mismatch") {
  Mlp net({3, 1}, {Activation::identity()});
  CHECK(error_code_of([&] { forward(net, VectorXd::Zero(2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("backward: zero network") {
  Mlp net({3, 4, 1}, {Activation::relu(), Activation::identity()});
  const VectorXd g = backward(net, MatrixXd::Ones(1, 3), MatrixXd::Ones(1, 1));
  CHECK(g(g.size() - 1) == 1.0);
  CHECK(g.head(g.size() - 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: finite differences across architectures and seeds") {
  int checked = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Activation hidden = kSmoothActs[s % kSmoothActs.size()];
    const Activation out = kSmoothActs[(s / 5) % kSmoothActs.size()];
    Mlp net = random_net({3, 6, 5, 2}, {hidden, hidden, out}, 500 + s);
    Rng rng(s);
    const MatrixXd batch = testing::random_matrix(rng, 4, 3);
    const MatrixXd up = testing::random_matrix(rng, 4, 2);
    const VectorXd g = backward(net, batch, up);
    const VectorXd p0 = net.params();
    auto loss = [&](const VectorXd &p) {
      Mlp probe = net;
      probe.set_params(p);
      return (probe.forward(batch).array() * up.array()).sum();
    };
    const double err = relative_error(g, central_difference(loss, p0, 1e-6));
    CHECK_MESSAGE(err < 1e-4, "seed " << s << " err " << err);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("backward: linear in the upstream gradient") {
  const Mlp net = random_net({3, 8, 1}, {Activation::tanh(), Activation::identity()}, 3);
  Rng rng(4);
  const MatrixXd batch = testing::random_matrix(rng, 5, 3);
  const MatrixXd up = testing::random_matrix(rng, 5, 1);
  const VectorXd g1 = backward(net, batch, up);
  const VectorXd g2 = backward(net, batch, 2.0 * up);
  CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("input gradient: linear, finite differences, constant, non-scalar") {
  Mlp lin({3, 1}, {Activation::identity()});
  lin.weight(0) << 0.5, -1.0, 2.0;
  lin.bias(0)(0) = 3.0;
  const VectorXd x = VectorXd::Constant(3, 0.7);
  CHECK(input_gradient(lin, x) == lin.weight(0).transpose().eval());

  for (std::uint64_t s = 0; s < 100; ++s) {
    const Activation a = kSmoothActs[s % kSmoothActs.size()];
    const Mlp net = random_net({4, 7, 1}, {a, Activation::identity()}, 700 + s);
    Rng rng(s);
    const VectorXd at = testing::random_matrix(rng, 4, 1);
    auto f = [&](const VectorXd &v) { return forward(net, v)(0); };
    const double err = relative_error(input_gradient(net, at), central_difference(f, at, 1e-6));
    CHECK_MESSAGE(err < 1e-4, "seed " << s << " err " << err);
  }

  Mlp zero({4, 5, 1}, {Activation::tanh(), Activation::identity()});
  CHECK(input_gradient(zero, VectorXd::Ones(4)).cwiseAbs().maxCoeff() == 0.0);

  Mlp two({2, 2}, {Activation::identity()});
  CHECK(error_code_of([&] { input_gradient(two, VectorXd::Ones(2)); }) ==
        ErrorCode::NonScalarOutput);
}

TEST_CASE("gradient penalty: unit-norm affine network is exactly zero") {
  Mlp lin({2, 1}, {Activation::identity()});
  lin.weight(0) << 0.6, 0.8;
  lin.bias(0)(0) = -4.0;
  Rng rng(5);
  const auto r = grad_penalty_value_and_grad(lin, testing::random_matrix(rng, 7, 2));
  CHECK(r.value < 1e-24);
  CHECK(r.param_grad.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient penalty: (2 - 1)^2 for weight (2, 0)") {
  Mlp lin({2, 1}, {Activation::identity()});
  lin.weight(0) << 2.0, 0.0;
  const auto r = grad_penalty_value_and_grad(lin, MatrixXd::Ones(1, 2));
  CHECK(r.value == doctest::Approx(1.0));
}

TEST_CASE("gradient penalty: double backprop matches finite differences") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Activation a = s % 2 ? Activation::tanh() : Activation::leaky_relu(0.2);
    const Mlp net = random_net({3, 6, 6, 1}, {a, Activation::tanh(), Activation::identity()}, 900 + s);
    Rng rng(s);
    const MatrixXd pts = testing::random_matrix(rng, 5, 3);
    const auto exact = grad_penalty_value_and_grad(net, pts);
    auto f = [&](const VectorXd &p) {
      Mlp probe = net;
      probe.set_params(p);
      return grad_penalty_value_and_grad(probe, pts).value;
    };
    const double err = relative_error(exact.param_grad, central_difference(f, net.params(), 1e-6));
    CHECK_MESSAGE(err < 1e-3, "seed " << s << " err " << err);
    const auto fd = grad_penalty_value_and_grad(net, pts, PenaltyGradMode::FiniteDifference);
    CHECK(fd.value == doctest::Approx(exact.value));
    CHECK(relative_error(exact.param_grad, fd.param_grad) < 1e-3);
  }
}

TEST_CASE("adam: zero gradient leaves params alone") {
  VectorXd p = VectorXd::LinSpaced(5, -1, 1);
  const VectorXd p0 = p;
  AdamState st = AdamState::for_size(5);
  for (int k = 0; k < 10; ++k) adam_step(st, p, VectorXd::Zero(5));
  CHECK(p == p0);
  CHECK(st.step_count == 10);
}

TEST_CASE("adam: first step closed form") {
  VectorXd p = VectorXd::Zero(3);
  VectorXd g(3);
  g << 0.5, -2.0, 1e-9;
  AdamState st = AdamState::for_size(3, 2e-4);
  adam_step(st, p, g);
  for (Index i = 0; i < 3; ++i) {
    // m_hat = g, v_hat = g^2 after bias correction
    const double expected = -2e-4 * g(i) / (std::abs(g(i)) + 1e-8);
    CHECK(p(i) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adam: deterministic and rejects nonfinite gradients") {
  auto run = [] {
    Rng rng(8);
    VectorXd p = testing::random_matrix(rng, 6, 1);
    AdamState st = AdamState::for_size(6);
    for (int k = 0; k < 20; ++k) adam_step(st, p, p.array().sin().matrix());
    return p;
  };
  CHECK(run() == run());

  VectorXd p = VectorXd::Zero(4);
  VectorXd g = VectorXd::Zero(4);
  g(2) = NAN;
  AdamState st = AdamState::for_size(4);
  try {
    adam_step(st, p, g);
    FAIL("expected NonFiniteGradient");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::NonFiniteGradient);
    CHECK(e.detail().value_or(-1) == 2);
  }
}

TEST_CASE("relu network without biases is positively homogeneous") {
  Rng rng(9);
  Mlp net = Mlp::glorot({3, 8, 8, 1}, {Activation::relu(), Activation::relu(), Activation::identity()},
                        rng);
  for (int k = 0; k < 10; ++k) {
    const VectorXd x = testing::random_matrix(rng, 3, 1);
    const double c = 0.1 + 3.0 * uniform01(rng);
    CHECK(forward(net, c * x)(0) == doctest::Approx(c * forward(net, x)(0)));
  }
}

TEST_CASE("checkpoint blob round trip and corruption") {
  const Mlp net = random_net({3, 4, 2}, {Activation::leaky_relu(0.3), Activation::tanh()}, 10);
  const auto blob = serialize(net);
  const Mlp back = deserialize(blob);
  CHECK(back.params() == net.params());
  CHECK(back.layer_dims() == net.layer_dims());
  CHECK(back.activations() == net.activations());

  auto bad = blob;
  bad[0] = 'X';
  CHECK(error_code_of([&] { deserialize(bad); }) == ErrorCode::SchemaError);
  auto cut = blob;
  cut.resize(cut.size() - 3);
  CHECK(error_code_of([&] { deserialize(cut); }) == ErrorCode::SchemaError);

  const auto path = std::filesystem::temp_directory_path() / "dpmine_test_net.bin";
  save_network(net, path);
  CHECK(load_network(path).params() == net.params());
  std::filesystem::remove(path);
}

TEST_CASE("parameter count matches layer sizes") {
  Mlp net({5, 3, 2}, {Activation::relu(), Activation::identity()});
  CHECK(net.num_params() == 5 * 3 + 3 + 3 * 2 + 2);
}
