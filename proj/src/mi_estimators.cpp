#include "dpmine/mi_estimators.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace dpmine {

VectorXd PairedSample::effective_weights() const {
  return weights.size() ? weights : uniform_weights(size());
}

Points PairedSample::joint() const {
  Points out(size(), dim_x() + dim_y());
  out << xs, ys;
  return out;
}

void PairedSample::validate() const {
  require(size() > 0, ErrorCode::EmptySample, "sample has no pairs");
  require(ys.rows() == xs.rows(), ErrorCode::DimensionMismatch, "xs and ys differ in length");
  if (weights.size()) {
    require(weights.size() == size(), ErrorCode::DimensionMismatch,
            "weights differ in length from pairs");
    require(is_probability_vector(weights), ErrorCode::InvalidArgument,
            "weights must be nonnegative and sum to 1");
  }
}

PairedSample split_draw(const DPPosteriorDraw &draw, Index dim_x) {
  require(dim_x >= 1 && dim_x < draw.atoms.cols(), ErrorCode::DimensionMismatch,
          "x block must be a proper prefix of the atom coordinates");
  return {draw.atoms.leftCols(dim_x), draw.atoms.rightCols(draw.atoms.cols() - dim_x),
          draw.weights};
}

std::string to_string(BoundKind b) { return b == BoundKind::DV ? "dv" : "js"; }
std::string to_string(Weighting w) { return w == Weighting::DP ? "dp" : "empirical"; }

BoundKind parse_bound(const std::string &text) {
  if (text == "dv") return BoundKind::DV;
  if (text == "js") return BoundKind::JS;
  throw Error(ErrorCode::InvalidArgument, "bound must be dv or js, got '" + text + "'");
}

Weighting parse_weighting(const std::string &text) {
  if (text == "dp") return Weighting::DP;
  if (text == "empirical") return Weighting::Empirical;
  throw Error(ErrorCode::InvalidArgument, "weighting must be dp or empirical, got '" + text + "'");
}

std::vector<Index> draw_permutation(Index n, Rng &rng, bool derangement) {
  if (n < 2) throw Error(ErrorCode::TooFewPairs, "permutation needs at least two pairs");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (;;) {
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
    if (!derangement) return perm;
    bool fixed = false;
    for (Index i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
    if (!fixed) return perm;
  }
}

namespace {

void check_bound_inputs(const PairedSample &sample, const Mlp &critic,
                        std::span<const Index> perm) {
  sample.validate();
  require(critic.input_dim() == sample.dim_x() + sample.dim_y(), ErrorCode::DimensionMismatch,
          "critic input width must equal dim_x + dim_y");
  require(critic.output_dim() == 1, ErrorCode::NonScalarOutput, "critic must be scalar-valued");
  require(static_cast<Index>(perm.size()) == sample.size(), ErrorCode::DimensionMismatch,
          "permutation length differs from sample size");
}

Points permuted_pairs(const PairedSample &sample, std::span<const Index> perm) {
  Points out(sample.size(), sample.dim_x() + sample.dim_y());
  out.leftCols(sample.dim_x()) = sample.xs;
  for (Index l = 0; l < sample.size(); ++l)
    out.row(l).tail(sample.dim_y()) = sample.ys.row(perm[static_cast<std::size_t>(l)]);
  return out;
}

} // namespace

CriticScores critic_scores(const PairedSample &sample, const Mlp &critic,
                           std::span<const Index> perm) {
  check_bound_inputs(sample, critic, perm);
  return {critic.forward(sample.joint()).col(0), critic.forward(permuted_pairs(sample, perm)).col(0)};
}

double dv_bound(const PairedSample &sample, const Mlp &critic, std::span<const Index> perm) {
  const auto s = critic_scores(sample, critic, perm);
  return dv_from_scores(sample.effective_weights(), s.joint, s.marginal);
}

double js_bound(const PairedSample &sample, const Mlp &critic, std::span<const Index> perm) {
  const auto s = critic_scores(sample, critic, perm);
  return js_from_scores(sample.effective_weights(), s.joint, s.marginal);
}

double evaluate_bound(BoundKind kind, const PairedSample &sample, const Mlp &critic,
                      std::span<const Index> perm) {
  return kind == BoundKind::DV ? dv_bound(sample, critic, perm) : js_bound(sample, critic, perm);
}

BoundTerms bound_value_and_grad(BoundKind kind, const PairedSample &sample, const Mlp &critic,
                                std::span<const Index> perm) {
  check_bound_inputs(sample, critic, perm);
  const VectorXd w = sample.effective_weights();
  const Index n = sample.size();

  ForwardCache joint_cache, marg_cache;
  const VectorXd tj = critic.forward(sample.joint(), &joint_cache).col(0);
  const VectorXd tm = critic.forward(permuted_pairs(sample, perm), &marg_cache).col(0);

  BoundTerms out;
  MatrixXd up_joint(n, 1), up_marg(n, 1);
  if (kind == BoundKind::DV) {
    const double lse = weighted_log_sum_exp(w, tm);
    out.value = w.dot(tj) - lse;
    up_joint.col(0) = w;
    for (Index l = 0; l < n; ++l) up_marg(l, 0) = w(l) > 0.0 ? -w(l) * std::exp(tm(l) - lse) : 0.0;
  } else {
    out.value = js_from_scores(w, tj, tm);
    for (Index l = 0; l < n; ++l) {
      // d/dt [-softplus(-t)] = sigmoid(-t); d/dt [-softplus(t)] = -sigmoid(t)
      up_joint(l, 0) = w(l) / (1.0 + std::exp(tj(l)));
      up_marg(l, 0) = -w(l) / (1.0 + std::exp(-tm(l)));
    }
  }

  const Gradients gj = critic.backward(joint_cache, up_joint);
  const Gradients gm = critic.backward(marg_cache, up_marg);
  out.param_grad = gj.params + gm.params;

  const Index dx = sample.dim_x();
  const Index dy = sample.dim_y();
  out.grad_x = gj.inputs.leftCols(dx) + gm.inputs.leftCols(dx);
  out.grad_y = gj.inputs.rightCols(dy);
  for (Index l = 0; l < n; ++l)
    out.grad_y.row(perm[static_cast<std::size_t>(l)]) += gm.inputs.row(l).tail(dy);
  return out;
}

VectorXd bound_gradient(const PairedSample &sample, const Mlp &critic, std::span<const Index> perm,
                        BoundKind kind) {
  return bound_value_and_grad(kind, sample, critic, perm).param_grad;
}

void MineConfig::validate() const {
  require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (minibatch) require(*minibatch >= 2, ErrorCode::InvalidArgument, "minibatch must be >= 2");
  require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning rate must be positive");
}

Mlp make_mine_critic(Index input_dim, const MineConfig &config, Rng &rng) {
  std::vector<Index> dims{input_dim};
  std::vector<Activation> acts;
  for (Index h : config.hidden) {
    dims.push_back(h);
    acts.push_back(Activation::relu());
  }
  dims.push_back(1);
  acts.push_back(config.relu_output ? Activation::relu() : Activation::identity());
  return Mlp::glorot(dims, acts, rng);
}

namespace {

PairedSample take_minibatch(const PairedSample &sample, Index size, Rng &rng) {
  if (size >= sample.size()) return sample;
  std::vector<Index> idx(static_cast<std::size_t>(sample.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < size; ++i) std::swap(idx[i], idx[i + uniform_index(rng, sample.size() - i)]);
  const VectorXd w = sample.effective_weights();
  PairedSample out{Points(size, sample.dim_x()), Points(size, sample.dim_y()), VectorXd(size)};
  for (Index i = 0; i < size; ++i) {
    out.xs.row(i) = sample.xs.row(idx[i]);
    out.ys.row(i) = sample.ys.row(idx[i]);
    out.weights(i) = w(idx[i]);
  }
  const double total = out.weights.sum();
  out.weights = total > 0.0 ? VectorXd(out.weights / total) : uniform_weights(size);
  return out;
}

std::string trace_label(const MineConfig &c) {
  return std::string(c.weighting == Weighting::DP ? "DPMINE" : "MINE") + "-" +
         (c.bound == BoundKind::DV ? "DV" : "JS");
}

} // namespace

MineResult train_mine(const Points &xs, const Points &ys, const DPConfig &dp,
                      const MineConfig &config) {
  require(xs.rows() > 0, ErrorCode::EmptyDataset, "no pairs to train on");
  require(xs.rows() == ys.rows(), ErrorCode::DimensionMismatch, "xs and ys differ in length");
  config.validate();

  Rng init_rng = make_rng(config.seed, Stream::Init);
  Rng post_rng = make_rng(config.seed, Stream::Posterior);
  Rng perm_rng = make_rng(config.seed, Stream::Permutation);

  MineResult result;
  result.critic = make_mine_critic(xs.cols() + ys.cols(), config, init_rng);
  result.trace.label = trace_label(config);
  result.trace.seed = config.seed;
  result.trace.dim = xs.cols();
  result.trace.bound = config.bound;
  result.trace.weighting = config.weighting;
  result.trace.values.reserve(static_cast<std::size_t>(config.epochs));

  const PairedSample raw{xs, ys, VectorXd()};
  Points joint;
  BaseMeasure base;
  DPConfig dpc = dp;
  std::optional<Index> fixed_n;
  if (config.weighting == Weighting::DP) {
    joint = raw.joint();
    base = fit_base_measure(joint);
    if (!dpc.map_grid.empty())
      dpc.concentration = fit_concentration_map(joint, base, dpc.map_grid);
    dpc.validate();
    if (!dpc.truncation_override && !config.redraw_truncation)
      fixed_n = select_truncation(dpc.concentration + static_cast<double>(xs.rows()), dpc.epsilon,
                                  post_rng, dpc.truncation_cap);
    result.concentration = dpc.concentration;
  }

  AdamState adam = AdamState::for_size(result.critic.num_params(), config.learning_rate);
  PairedSample current = raw;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.weighting == Weighting::DP && (epoch == 0 || config.redraw_per_epoch)) {
      const auto draw = draw_posterior(joint, dpc, post_rng, &base, fixed_n);
      current = split_draw(draw, xs.cols());
    }
    const PairedSample batch =
        config.minibatch ? take_minibatch(current, *config.minibatch, perm_rng) : current;
    const auto perm = draw_permutation(batch.size(), perm_rng, config.derangement);
    const BoundTerms terms = bound_value_and_grad(config.bound, batch, result.critic, perm);
    if (!std::isfinite(terms.value) || !terms.param_grad.allFinite())
      throw Error(ErrorCode::DivergedTraining, "bound became nonfinite", epoch);
    result.trace.values.push_back(terms.value);
    adam_step(adam, result.critic.params(), -terms.param_grad);
    result.truncation = batch.size();
    if (config.record_timing) {
      const std::chrono::duration<double, std::milli> ms = std::chrono::steady_clock::now() - start;
      result.trace.epoch_ms.push_back(ms.count());
    } else {
      result.trace.epoch_ms.push_back(0.0);
    }
  }
  return result;
}

} // namespace dpmine
