#include "dpmine/distances.hpp"

#include <algorithm>

namespace dpmine {

void KernelSpec::validate() const {
  if (family == KernelFamily::GaussianMixture) {
    require(!sigmas.empty(), ErrorCode::InvalidArgument, "gaussian kernel needs bandwidths");
    for (double s : sigmas)
      require(s > 0.0 && std::isfinite(s), ErrorCode::InvalidArgument,
              "bandwidths must be positive");
  } else {
    require(poly_degree >= 1, ErrorCode::InvalidArgument, "polynomial degree must be >= 1");
  }
}

namespace {

MatrixXd squared_distances(const Points &p, const Points &q) {
  MatrixXd d = (-2.0 * p * q.transpose()).colwise() + p.rowwise().squaredNorm();
  d.rowwise() += q.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

} // namespace

MatrixXd kernel_matrix(const KernelSpec &spec, const Points &p, const Points &q) {
  require(p.cols() == q.cols(), ErrorCode::DimensionMismatch, "point sets differ in dimension");
  if (spec.family == KernelFamily::Polynomial) {
    const MatrixXd base = (spec.poly_scale * (p * q.transpose())).array() + spec.poly_offset;
    return base.array().pow(spec.poly_degree).matrix();
  }
  const MatrixXd d = squared_distances(p, q);
  MatrixXd k = MatrixXd::Zero(p.rows(), q.rows());
  for (double s : spec.sigmas) k.array() += (-d.array() / (2.0 * s * s)).exp();
  return k;
}

MatrixXd kernel_grad_sum(const KernelSpec &spec, const Points &x, const Points &y,
                         const VectorXd &a) {
  require(x.cols() == y.cols(), ErrorCode::DimensionMismatch, "point sets differ in dimension");
  if (spec.family == KernelFamily::Polynomial) {
    const MatrixXd base = (spec.poly_scale * (x * y.transpose())).array() + spec.poly_offset;
    const MatrixXd d = spec.poly_degree * spec.poly_scale *
                       base.array().pow(spec.poly_degree - 1).matrix();
    return d * a.asDiagonal() * y;
  }
  const MatrixXd d = squared_distances(x, y);
  MatrixXd c = MatrixXd::Zero(x.rows(), y.rows());
  for (double s : spec.sigmas) c.array() += (-d.array() / (2.0 * s * s)).exp() / (s * s);
  const VectorXd ca = c * a;
  return c * a.asDiagonal() * y - ca.asDiagonal() * x;
}

void WeightedPointSet::validate() const {
  require(size() > 0, ErrorCode::EmptySample, "point set is empty");
  require(weights.size() == size(), ErrorCode::DimensionMismatch,
          "weights differ in length from points");
  require(is_probability_vector(weights), ErrorCode::InvalidArgument,
          "weights must be nonnegative and sum to 1");
}

namespace {

void check_pair(const WeightedPointSet &p, const WeightedPointSet &q, const KernelSpec &spec) {
  p.validate();
  q.validate();
  require(p.dim() == q.dim(), ErrorCode::DimensionMismatch, "point sets differ in dimension");
  spec.validate();
}

double mmd_raw(const WeightedPointSet &p, const WeightedPointSet &q, const KernelSpec &spec) {
  const double pp = p.weights.dot(kernel_matrix(spec, p.points, p.points) * p.weights);
  const double pq = p.weights.dot(kernel_matrix(spec, p.points, q.points) * q.weights);
  const double qq = q.weights.dot(kernel_matrix(spec, q.points, q.points) * q.weights);
  return pp - 2.0 * pq + qq;
}

} // namespace

double mmd_squared(const WeightedPointSet &p, const WeightedPointSet &q, const KernelSpec &spec) {
  check_pair(p, q, spec);
  return std::max(mmd_raw(p, q, spec), 0.0);
}

MmdTerms mmd_squared_with_grad(const WeightedPointSet &p, const WeightedPointSet &q,
                               const KernelSpec &spec) {
  check_pair(p, q, spec);
  MmdTerms out;
  out.value = mmd_raw(p, q, spec);
  out.grad_p = 2.0 * p.weights.asDiagonal() *
               (kernel_grad_sum(spec, p.points, p.points, p.weights) -
                kernel_grad_sum(spec, p.points, q.points, q.weights));
  out.grad_q = 2.0 * q.weights.asDiagonal() *
               (kernel_grad_sum(spec, q.points, q.points, q.weights) -
                kernel_grad_sum(spec, q.points, p.points, p.weights));
  return out;
}

void WassersteinConfig::validate() const {
  require(steps >= 0, ErrorCode::InvalidArgument, "steps must be >= 0");
  require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning rate must be positive");
  require(gp_lambda >= 0.0, ErrorCode::InvalidArgument, "penalty coefficient must be >= 0");
}

Mlp make_distance_critic(Index dim, const WassersteinConfig &config, Rng &rng) {
  std::vector<Index> dims{dim};
  std::vector<Activation> acts;
  for (Index h : config.hidden) {
    dims.push_back(h);
    acts.push_back(Activation::relu());
  }
  dims.push_back(1);
  acts.push_back(Activation::identity());
  return Mlp::glorot(dims, acts, rng);
}

Points penalty_interpolates(const Points &p, const Points &q, Index count, Rng &rng) {
  Points out(count, p.cols());
  for (Index k = 0; k < count; ++k) {
    const double u = uniform01(rng);
    out.row(k) = u * p.row(k % p.rows()) + (1.0 - u) * q.row(k % q.rows());
  }
  return out;
}

namespace {

struct DualEval {
  double transport = 0.0;
  double penalty = 0.0;
  VectorXd grad; // gradient of transport - lambda * penalty
};

DualEval dual_objective(const WeightedPointSet &p, const WeightedPointSet &q, const Mlp &critic,
                        double lambda, Index n_interp, Rng &rng) {
  ForwardCache cp, cq;
  const VectorXd dp = critic.forward(p.points, &cp).col(0);
  const VectorXd dq = critic.forward(q.points, &cq).col(0);
  DualEval e;
  e.transport = p.weights.dot(dp) - q.weights.dot(dq);
  e.grad = critic.backward(cp, p.weights).params - critic.backward(cq, q.weights).params;
  if (lambda > 0.0) {
    const Points x = penalty_interpolates(p.points, q.points, n_interp, rng);
    const PenaltyResult gp = grad_penalty_value_and_grad(critic, x);
    e.penalty = gp.value;
    e.grad -= lambda * gp.param_grad;
  }
  return e;
}

// -D has the same penalty as D and the opposite transport term, so negating
// the last layer strictly improves the objective whenever transport < 0.
void flip_output_sign(Mlp &critic, AdamState &adam) {
  const Index last = critic.num_layers() - 1;
  const Index count = critic.weight(last).size() + critic.bias(last).size();
  const Index start = critic.num_params() - count;
  critic.params().tail(count) *= -1.0;
  adam.first_moment.segment(start, count) *= -1.0;
}

} // namespace

WassersteinResult wasserstein_dual(const WeightedPointSet &p, const WeightedPointSet &q,
                                   Mlp &critic, const WassersteinConfig &config, Rng &rng) {
  p.validate();
  q.validate();
  require(p.dim() == q.dim(), ErrorCode::DimensionMismatch, "point sets differ in dimension");
  require(critic.input_dim() == p.dim(), ErrorCode::DimensionMismatch,
          "critic input width differs from point dimension");
  require(critic.output_dim() == 1, ErrorCode::NonScalarOutput, "critic must be scalar-valued");
  config.validate();

  const Index n_interp = std::max({p.size(), q.size(), config.min_interpolates});
  WassersteinResult out;
  AdamState adam = AdamState::for_size(critic.num_params(), config.learning_rate);
  for (Index step = 0; step < config.steps; ++step) {
    const DualEval e = dual_objective(p, q, critic, config.gp_lambda, n_interp, rng);
    const double value = e.transport - config.gp_lambda * e.penalty;
    if (!std::isfinite(value) || !e.grad.allFinite())
      throw Error(ErrorCode::DivergedTraining, "dual objective became nonfinite", step);
    out.history.push_back(value);
    adam_step(adam, critic.params(), -e.grad);
    if (config.sign_flip && e.transport < 0.0) flip_output_sign(critic, adam);
  }
  const DualEval last = dual_objective(p, q, critic, config.gp_lambda, n_interp, rng);
  out.transport = last.transport;
  out.penalty = last.penalty;
  out.value = last.transport - config.gp_lambda * last.penalty;
  if (!std::isfinite(out.value))
    throw Error(ErrorCode::DivergedTraining, "dual objective became nonfinite", config.steps);
  return out;
}

WmmdResult wmmd(const WeightedPointSet &p, const WeightedPointSet &q, Mlp &critic,
                const KernelSpec &spec, const WassersteinConfig &config, Rng &rng) {
  WmmdResult out;
  out.ws = wasserstein_dual(p, q, critic, config, rng).value;
  out.mmd = mmd_squared(p, q, spec);
  out.total = out.ws + out.mmd;
  return out;
}

} // namespace dpmine
