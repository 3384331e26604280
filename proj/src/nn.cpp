#include "dpmine/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dpmine {

namespace {

MatrixXd activate(const Activation &act, const MatrixXd &z) {
  switch (act.kind) {
    case ActivationKind::Relu: return z.cwiseMax(0.0);
    case ActivationKind::LeakyRelu: return (z.array() > 0.0).select(z, act.slope * z);
    case ActivationKind::Tanh: return z.array().tanh().matrix();
    case ActivationKind::Sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case ActivationKind::Identity: return z;
  }
  return z;
}

// Derivatives are expressed through (pre, post) to reuse the forward values.
MatrixXd derivative(const Activation &act, const MatrixXd &z, const MatrixXd &h) {
  switch (act.kind) {
    case ActivationKind::Relu: return (z.array() > 0.0).cast<double>().matrix();
    case ActivationKind::LeakyRelu:
      return (z.array() > 0.0).select(MatrixXd::Ones(z.rows(), z.cols()),
                                      MatrixXd::Constant(z.rows(), z.cols(), act.slope));
    case ActivationKind::Tanh: return (1.0 - h.array().square()).matrix();
    case ActivationKind::Sigmoid: return (h.array() * (1.0 - h.array())).matrix();
    case ActivationKind::Identity: return MatrixXd::Ones(z.rows(), z.cols());
  }
  return MatrixXd::Ones(z.rows(), z.cols());
}

MatrixXd second_derivative(const Activation &act, const MatrixXd &h) {
  switch (act.kind) {
    case ActivationKind::Tanh:
      return (-2.0 * h.array() * (1.0 - h.array().square())).matrix();
    case ActivationKind::Sigmoid:
      return (h.array() * (1.0 - h.array()) * (1.0 - 2.0 * h.array())).matrix();
    default: return MatrixXd::Zero(h.rows(), h.cols());
  }
}

bool has_curvature(const Activation &act) {
  return act.kind == ActivationKind::Tanh || act.kind == ActivationKind::Sigmoid;
}

// Little-endian byte writer/reader for the checkpoint blob.
template <typename T>
void put(std::vector<std::uint8_t> &out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size())
      throw Error(ErrorCode::SchemaError, "network blob is truncated");
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }

  [[nodiscard]] bool done() const noexcept { return pos_ == data_.size(); }

private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

} // namespace

std::string to_string(const Activation &act) {
  switch (act.kind) {
    case ActivationKind::Relu: return "relu";
    case ActivationKind::LeakyRelu: return "leaky_relu(" + std::to_string(act.slope) + ")";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(const std::string &text) {
  if (text == "relu") return Activation::relu();
  if (text == "tanh") return Activation::tanh();
  if (text == "sigmoid") return Activation::sigmoid();
  if (text == "identity") return Activation::identity();
  if (text == "leaky_relu") return Activation::leaky_relu();
  if (text.rfind("leaky_relu(", 0) == 0 && text.back() == ')')
    return Activation::leaky_relu(std::stod(text.substr(11, text.size() - 12)));
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + text + "'");
}

Mlp::Mlp(std::vector<Index> layer_dims, std::vector<Activation> activations)
    : dims_(std::move(layer_dims)), acts_(std::move(activations)) {
  require(dims_.size() >= 2, ErrorCode::InvalidArgument, "network needs at least one layer");
  require(acts_.size() + 1 == dims_.size(), ErrorCode::InvalidArgument,
          "one activation per layer is required");
  for (Index d : dims_) require(d >= 1, ErrorCode::InvalidArgument, "layer dims must be >= 1");
  Index total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += dims_[l] * dims_[l + 1] + dims_[l + 1];
  }
  params_ = VectorXd::Zero(total);
}

Mlp Mlp::glorot(std::vector<Index> layer_dims, std::vector<Activation> activations, Rng &rng) {
  Mlp net(std::move(layer_dims), std::move(activations));
  for (Index l = 0; l < net.num_layers(); ++l) {
    auto w = net.weight(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng, -limit, limit);
  }
  return net;
}

void Mlp::set_params(const VectorXd &params) {
  require(params.size() == params_.size(), ErrorCode::DimensionMismatch,
          "parameter vector length differs from network");
  params_ = params;
}

Eigen::Map<const MatrixXd> Mlp::weight(Index layer) const {
  return {params_.data() + offsets_[layer], dims_[layer + 1], dims_[layer]};
}
Eigen::Map<MatrixXd> Mlp::weight(Index layer) {
  return {params_.data() + offsets_[layer], dims_[layer + 1], dims_[layer]};
}
Eigen::Map<const VectorXd> Mlp::bias(Index layer) const {
  return {params_.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1], dims_[layer + 1]};
}
Eigen::Map<VectorXd> Mlp::bias(Index layer) {
  return {params_.data() + offsets_[layer] + dims_[layer] * dims_[layer + 1], dims_[layer + 1]};
}

MatrixXd Mlp::forward(const MatrixXd &batch, ForwardCache *cache) const {
  require(batch.cols() == input_dim(), ErrorCode::DimensionMismatch,
          "input width " + std::to_string(batch.cols()) + " != " + std::to_string(input_dim()));
  if (cache) {
    cache->pre.resize(acts_.size());
    cache->post.resize(acts_.size() + 1);
    cache->post[0] = batch;
  }
  MatrixXd h = batch;
  for (Index l = 0; l < num_layers(); ++l) {
    MatrixXd z(h.rows(), dims_[l + 1]);
    z.noalias() = h * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    h = activate(acts_[l], z);
    if (cache) {
      cache->pre[l] = std::move(z);
      cache->post[l + 1] = h;
    }
  }
  return h;
}

Gradients Mlp::backward(const ForwardCache &cache, const MatrixXd &upstream) const {
  require(cache.post.size() == acts_.size() + 1, ErrorCode::InvalidArgument,
          "forward cache does not belong to this network");
  const MatrixXd &out = cache.post.back();
  require(upstream.rows() == out.rows() && upstream.cols() == out.cols(),
          ErrorCode::DimensionMismatch, "upstream gradient shape differs from output");

  Gradients g{VectorXd::Zero(num_params()), MatrixXd()};
  MatrixXd delta = upstream.cwiseProduct(derivative(acts_.back(), cache.pre.back(), out));
  for (Index l = num_layers() - 1; l >= 0; --l) {
    Eigen::Map<MatrixXd> gw(g.params.data() + offsets_[l], dims_[l + 1], dims_[l]);
    Eigen::Map<VectorXd> gb(g.params.data() + offsets_[l] + dims_[l] * dims_[l + 1],
                            dims_[l + 1]);
    gw.noalias() = delta.transpose() * cache.post[l];
    gb = delta.colwise().sum().transpose();
    MatrixXd up = delta * weight(l);
    if (l > 0)
      delta = up.cwiseProduct(derivative(acts_[l - 1], cache.pre[l - 1], cache.post[l]));
    else
      g.inputs = std::move(up);
  }
  return g;
}

VectorXd forward(const Mlp &net, const VectorXd &input) {
  return net.forward(input.transpose()).row(0).transpose();
}

VectorXd backward(const Mlp &net, const MatrixXd &input_batch, const MatrixXd &upstream) {
  ForwardCache cache;
  net.forward(input_batch, &cache);
  return net.backward(cache, upstream).params;
}

MatrixXd input_gradients(const Mlp &net, const MatrixXd &batch) {
  if (net.output_dim() != 1)
    throw Error(ErrorCode::NonScalarOutput, "input gradient needs a scalar-output network");
  ForwardCache cache;
  net.forward(batch, &cache);
  return net.backward(cache, MatrixXd::Ones(batch.rows(), 1)).inputs;
}

VectorXd input_gradient(const Mlp &net, const VectorXd &input) {
  return input_gradients(net, input.transpose()).row(0).transpose();
}

namespace {

double penalty_value(const Mlp &net, const MatrixXd &points) {
  const MatrixXd g = input_gradients(net, points);
  const VectorXd norms = g.rowwise().norm().cwiseMax(kGradNormFloor);
  return (norms.array() - 1.0).square().mean();
}

PenaltyResult penalty_double_backprop(const Mlp &net, const MatrixXd &points) {
  const Index L = net.num_layers();
  const Index B = points.rows();
  ForwardCache cache;
  net.forward(points, &cache);

  std::vector<MatrixXd> slope(L); // sigma'(z_l)
  for (Index l = 0; l < L; ++l)
    slope[l] = derivative(net.activations()[l], cache.pre[l], cache.post[l + 1]);

  // Backward pass for the input gradient, keeping every intermediate.
  // delta[l] = d out / d z_l, carry[l] = d out / d h_{l+1} (carry[L-1] = 1).
  std::vector<MatrixXd> delta(L), carry(L);
  carry[L - 1] = MatrixXd::Ones(B, 1);
  delta[L - 1] = slope[L - 1];
  for (Index l = L - 1; l > 0; --l) {
    carry[l - 1] = delta[l] * net.weight(l);
    delta[l - 1] = slope[l - 1].cwiseProduct(carry[l - 1]);
  }
  const MatrixXd grad_x = delta[0] * net.weight(0);

  const VectorXd norms = grad_x.rowwise().norm().cwiseMax(kGradNormFloor);
  PenaltyResult result;
  result.value = (norms.array() - 1.0).square().mean();

  const VectorXd scale = (2.0 / static_cast<double>(B)) * (norms.array() - 1.0) / norms.array();
  const MatrixXd grad_x_bar = scale.asDiagonal() * grad_x;

  VectorXd g = VectorXd::Zero(net.num_params());
  auto gw = [&](Index l) {
    return Eigen::Map<MatrixXd>(g.data() + (net.weight(l).data() - net.params().data()),
                                net.layer_dims()[l + 1], net.layer_dims()[l]);
  };
  auto gb = [&](Index l) {
    return Eigen::Map<VectorXd>(g.data() + (net.bias(l).data() - net.params().data()),
                                net.layer_dims()[l + 1]);
  };

  // Adjoint of the input-gradient pass, walking layers forward.
  std::vector<MatrixXd> slope_bar(L);
  gw(0).noalias() += delta[0].transpose() * grad_x_bar;
  MatrixXd delta_bar = grad_x_bar * net.weight(0).transpose();
  for (Index l = 0; l < L; ++l) {
    slope_bar[l] = delta_bar.cwiseProduct(carry[l]);
    if (l + 1 < L) {
      const MatrixXd carry_bar = delta_bar.cwiseProduct(slope[l]);
      gw(l + 1).noalias() += delta[l + 1].transpose() * carry_bar;
      delta_bar = carry_bar * net.weight(l + 1).transpose();
    }
  }

  // Curvature injections sigma''(z_l) * slope_bar_l, then an ordinary
  // reverse pass through the forward graph.
  std::vector<MatrixXd> inject(L);
  bool any_curvature = false;
  for (Index l = 0; l < L; ++l) {
    if (has_curvature(net.activations()[l])) {
      inject[l] = slope_bar[l].cwiseProduct(second_derivative(net.activations()[l],
                                                              cache.post[l + 1]));
      any_curvature = true;
    }
  }
  if (any_curvature) {
    MatrixXd zbar = inject[L - 1].size() ? inject[L - 1] : MatrixXd::Zero(B, 1);
    for (Index l = L - 1; l >= 0; --l) {
      gw(l).noalias() += zbar.transpose() * cache.post[l];
      gb(l) += zbar.colwise().sum().transpose();
      if (l > 0) {
        MatrixXd next = (zbar * net.weight(l)).cwiseProduct(slope[l - 1]);
        if (inject[l - 1].size()) next += inject[l - 1];
        zbar = std::move(next);
      }
    }
  }
  result.param_grad = std::move(g);
  return result;
}

PenaltyResult penalty_finite_difference(const Mlp &net, const MatrixXd &points) {
  PenaltyResult result;
  result.value = penalty_value(net, points);
  result.param_grad.resize(net.num_params());
  Mlp probe = net;
  for (Index i = 0; i < net.num_params(); ++i) {
    const double theta = net.params()(i);
    const double h = 1e-5 * std::max(1.0, std::abs(theta));
    probe.params()(i) = theta + h;
    const double up = penalty_value(probe, points);
    probe.params()(i) = theta - h;
    const double down = penalty_value(probe, points);
    probe.params()(i) = theta;
    result.param_grad(i) = (up - down) / (2.0 * h);
  }
  return result;
}

} // namespace

PenaltyResult grad_penalty_value_and_grad(const Mlp &net, const MatrixXd &points,
                                          PenaltyGradMode mode) {
  if (net.output_dim() != 1)
    throw Error(ErrorCode::NonScalarOutput, "gradient penalty needs a scalar-output network");
  require(points.rows() > 0, ErrorCode::EmptySample, "no interpolation points");
  require(points.cols() == net.input_dim(), ErrorCode::DimensionMismatch,
          "point width differs from network input");
  return mode == PenaltyGradMode::DoubleBackprop ? penalty_double_backprop(net, points)
                                                 : penalty_finite_difference(net, points);
}

AdamState AdamState::for_size(Index n, double learning_rate) {
  AdamState s;
  s.first_moment = VectorXd::Zero(n);
  s.second_moment = VectorXd::Zero(n);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(AdamState &state, VectorXd &params, const VectorXd &grads) {
  require(params.size() == grads.size(), ErrorCode::DimensionMismatch,
          "gradient length differs from parameters");
  if (state.first_moment.size() == 0) {
    state.first_moment = VectorXd::Zero(params.size());
    state.second_moment = VectorXd::Zero(params.size());
  }
  require(state.first_moment.size() == params.size(), ErrorCode::DimensionMismatch,
          "optimizer state length differs from parameters");
  for (Index i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads(i)))
      throw Error(ErrorCode::NonFiniteGradient, "gradient entry is not finite", i);

  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.eps_hat);
}

std::vector<std::uint8_t> serialize(const Mlp &net) {
  std::vector<std::uint8_t> out{'D', 'P', 'M', 'N'};
  put<std::uint32_t>(out, kBlobVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_layers()));
  for (Index d : net.layer_dims()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (const auto &act : net.activations()) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(act.kind));
    put<double>(out, act.slope);
  }
  put<std::uint64_t>(out, static_cast<std::uint64_t>(net.num_params()));
  for (Index i = 0; i < net.num_params(); ++i) put<double>(out, net.params()(i));
  return out;
}

Mlp deserialize(std::span<const std::uint8_t> blob) {
  if (blob.size() < 4 || std::memcmp(blob.data(), "DPMN", 4) != 0)
    throw Error(ErrorCode::SchemaError, "bad network blob magic");
  Reader r(blob.subspan(4));
  if (r.get<std::uint32_t>() != kBlobVersion)
    throw Error(ErrorCode::SchemaError, "unsupported network blob version");
  const auto layers = r.get<std::uint32_t>();
  if (layers == 0 || layers > 1024) throw Error(ErrorCode::SchemaError, "bad layer count");
  std::vector<Index> dims(layers + 1);
  for (auto &d : dims) d = r.get<std::uint32_t>();
  std::vector<Activation> acts(layers);
  for (auto &a : acts) {
    const auto tag = r.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(ActivationKind::Identity))
      throw Error(ErrorCode::SchemaError, "bad activation tag");
    a.kind = static_cast<ActivationKind>(tag);
    a.slope = r.get<double>();
  }
  Mlp net(dims, acts);
  if (r.get<std::uint64_t>() != static_cast<std::uint64_t>(net.num_params()))
    throw Error(ErrorCode::SchemaError, "parameter count does not match layer dims");
  for (Index i = 0; i < net.num_params(); ++i) net.params()(i) = r.get<double>();
  if (!r.done()) throw Error(ErrorCode::SchemaError, "trailing bytes after network blob");
  return net;
}

void save_network(const Mlp &net, const std::filesystem::path &path) {
  const auto blob = serialize(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char *>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

Mlp load_network(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  const std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  return deserialize(blob);
}

} // namespace dpmine
