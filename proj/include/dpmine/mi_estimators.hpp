#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpmine/core.hpp"
#include "dpmine/dp_core.hpp"
#include "dpmine/nn.hpp"

namespace dpmine {

/// Aligned (x, y) pairs with optional weights (uniform when empty).
struct PairedSample {
  Points xs;
  Points ys;
  VectorXd weights;

  [[nodiscard]] Index size() const noexcept { return xs.rows(); }
  [[nodiscard]] Index dim_x() const noexcept { return xs.cols(); }
  [[nodiscard]] Index dim_y() const noexcept { return ys.cols(); }
  [[nodiscard]] VectorXd effective_weights() const;
  [[nodiscard]] Points joint() const;
  void validate() const;
};

/// Splits the joint atoms of a posterior draw into (x, y) blocks.
PairedSample split_draw(const DPPosteriorDraw &draw, Index dim_x);

enum class BoundKind { DV, JS };
enum class Weighting { DP, Empirical };

std::string to_string(BoundKind b);
std::string to_string(Weighting w);
BoundKind parse_bound(const std::string &text);
Weighting parse_weighting(const std::string &text);

/// Uniform permutation of {0..n-1}; with `derangement` no fixed points.
std::vector<Index> draw_permutation(Index n, Rng &rng, bool derangement = false);

/// Overflow-safe ln(1 + e^t).
inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

/// Weighted log-sum-exp ln sum_l w_l e^{t_l}, ignoring zero-weight terms.
template <typename DW, typename DT>
double weighted_log_sum_exp(const Eigen::MatrixBase<DW> &w, const Eigen::MatrixBase<DT> &t) {
  double hi = -INFINITY;
  for (Index l = 0; l < t.size(); ++l)
    if (w(l) > 0.0) hi = std::max(hi, static_cast<double>(t(l)));
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (Index l = 0; l < t.size(); ++l)
    if (w(l) > 0.0) s += w(l) * std::exp(t(l) - hi);
  return hi + std::log(s);
}

/// DV bound from critic scores on joint and permuted pairs.
template <typename DW, typename DJ, typename DM>
double dv_from_scores(const Eigen::MatrixBase<DW> &w, const Eigen::MatrixBase<DJ> &joint,
                      const Eigen::MatrixBase<DM> &marginal) {
  return w.dot(joint) - weighted_log_sum_exp(w, marginal);
}

/// JS bound from critic scores on joint and permuted pairs.
template <typename DW, typename DJ, typename DM>
double js_from_scores(const Eigen::MatrixBase<DW> &w, const Eigen::MatrixBase<DJ> &joint,
                      const Eigen::MatrixBase<DM> &marginal) {
  double total = 0.0;
  for (Index l = 0; l < w.size(); ++l)
    total += w(l) * (-softplus(-joint(l)) - softplus(marginal(l)));
  return total;
}

/// Scores of the critic on joint pairs and on pairs (x_l, y_perm[l]).
struct CriticScores {
  VectorXd joint;
  VectorXd marginal;
};

CriticScores critic_scores(const PairedSample &sample, const Mlp &critic,
                           std::span<const Index> perm);

double dv_bound(const PairedSample &sample, const Mlp &critic, std::span<const Index> perm);
double js_bound(const PairedSample &sample, const Mlp &critic, std::span<const Index> perm);
double evaluate_bound(BoundKind kind, const PairedSample &sample, const Mlp &critic,
                      std::span<const Index> perm);

/// Bound value with its gradient w.r.t. critic params and w.r.t. the sample
/// coordinates (the latter lets callers push gradients into networks that
/// produced xs or ys).
struct BoundTerms {
  double value = 0.0;
  VectorXd param_grad;
  MatrixXd grad_x;
  MatrixXd grad_y;
};

BoundTerms bound_value_and_grad(BoundKind kind, const PairedSample &sample, const Mlp &critic,
                                std::span<const Index> perm);

VectorXd bound_gradient(const PairedSample &sample, const Mlp &critic, std::span<const Index> perm,
                        BoundKind kind);

struct MineConfig {
  BoundKind bound = BoundKind::DV;
  Weighting weighting = Weighting::DP;
  Index epochs = 500;
  std::optional<Index> minibatch;   ///< empty: use the full draw / sample
  bool redraw_per_epoch = true;     ///< fresh posterior draw each epoch
  bool redraw_truncation = false;   ///< re-run the stopping rule at each draw
  bool derangement = false;
  double learning_rate = 2e-4;
  std::vector<Index> hidden{400, 400, 400};
  bool relu_output = true;          ///< relu on the final critic layer
  std::uint64_t seed = 0;
  bool record_timing = true;

  void validate() const;
};

Mlp make_mine_critic(Index input_dim, const MineConfig &config, Rng &rng);

struct EstimateTrace {
  std::vector<double> values;
  std::vector<double> epoch_ms;
  std::string label;
  std::uint64_t seed = 0;
  Index dim = 0;
  BoundKind bound = BoundKind::DV;
  Weighting weighting = Weighting::DP;
};

struct MineResult {
  EstimateTrace trace;
  Mlp critic;
  double concentration = 0.0;      ///< DP mode only
  Index truncation = 0;            ///< atoms per draw (DP) or sample size
};

/// Maximizes the chosen bound by Adam ascent. Streams derive from
/// config.seed: Init (critic), Posterior (draws), Permutation (permutations
/// and minibatches).
MineResult train_mine(const Points &xs, const Points &ys, const DPConfig &dp,
                      const MineConfig &config);

} // namespace dpmine
