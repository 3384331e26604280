#include "dpmine/gen_demo.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace dpmine {

GenModel make_gen_model(const GenArchitecture &arch, Rng &rng) {
  require(arch.latent > arch.sublatent && arch.sublatent >= 1, ErrorCode::InvalidArgument,
          "latent dimension must exceed the sub-latent dimension");
  const auto relu = Activation::relu();
  const auto leaky = Activation::leaky_relu(0.2);
  const auto id = Activation::identity();
  const Index w = arch.width;
  GenModel m;
  m.encoder = Mlp::glorot({arch.data_dim, w, w, arch.latent}, {relu, relu, id}, rng);
  m.generator =
      Mlp::glorot({arch.latent, w, w, arch.data_dim}, {relu, relu, Activation::tanh()}, rng);
  m.code_generator = Mlp::glorot({arch.sublatent, arch.code_width, arch.code_width, arch.latent},
                                 {relu, relu, id}, rng);
  m.discriminator = Mlp::glorot({arch.data_dim, w, w, 1}, {leaky, leaky, id}, rng);
  m.critic_data_code =
      Mlp::glorot({arch.data_dim + arch.latent, w, w, 1}, {relu, relu, id}, rng);
  m.critic_fake_code =
      Mlp::glorot({arch.data_dim + arch.latent, w, w, 1}, {relu, relu, id}, rng);
  return m;
}

void GenTrainConfig::validate() const {
  require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
  require(max_atoms >= 2, ErrorCode::InvalidArgument, "max_atoms must be >= 2");
  require(gp_lambda > 0.0, ErrorCode::InvalidArgument, "gradient penalty coefficient must be > 0");
  for (double lr : {lr_encoder_generator, lr_discriminator, lr_code_generator, lr_critics})
    require(lr > 0.0, ErrorCode::InvalidArgument, "learning rates must be positive");
  kernel.validate();
  dp.validate();
}

GenBatch make_gen_batch(DPPosteriorDraw draw, const GenModel &model, Rng &noise_rng,
                        Rng &perm_rng, Rng &penalty_rng) {
  const Index n = draw.size();
  require(n >= 2, ErrorCode::TooFewPairs, "a training batch needs at least two atoms");
  GenBatch b;
  b.xi = standard_normal_matrix(noise_rng, n, model.latent_dim());
  b.xi_sub = standard_normal_matrix(noise_rng, n, model.sublatent_dim());
  for (auto &p : b.perms) p = draw_permutation(n, perm_rng);
  b.gp_u.resize(3 * n);
  for (Index i = 0; i < 3 * n; ++i) b.gp_u(i) = uniform01(penalty_rng);
  b.draw = std::move(draw);
  return b;
}

namespace {

// Forward products of one batch that every loss shares.
struct Pass {
  MatrixXd c, ct, gx, gc, gct;
  ForwardCache enc, gen_x, gen_c, gen_ct;
};

Pass run_pass(const GenModel &m, const GenBatch &b) {
  require(b.draw.atoms.cols() == m.data_dim(), ErrorCode::DimensionMismatch,
          "atoms differ in dimension from the model");
  Pass p;
  p.c = m.encoder.forward(b.draw.atoms, &p.enc);
  p.ct = m.code_generator.forward(b.xi_sub);
  p.gx = m.generator.forward(b.xi, &p.gen_x);
  p.gc = m.generator.forward(p.c, &p.gen_c);
  p.gct = m.generator.forward(p.ct, &p.gen_ct);
  return p;
}

// Upstream gradients w.r.t. the pass outputs, pushed into E and G.
struct Upstream {
  MatrixXd gx, gc, gct, c;
};

Upstream zero_upstream(const Pass &p) {
  return {MatrixXd::Zero(p.gx.rows(), p.gx.cols()), MatrixXd::Zero(p.gc.rows(), p.gc.cols()),
          MatrixXd::Zero(p.gct.rows(), p.gct.cols()), MatrixXd::Zero(p.c.rows(), p.c.cols())};
}

void backprop_encoder_generator(const GenModel &m, const Pass &p, Upstream up, GenLoss &out) {
  const Gradients gx = m.generator.backward(p.gen_x, up.gx);
  const Gradients gc = m.generator.backward(p.gen_c, up.gc);
  const Gradients gct = m.generator.backward(p.gen_ct, up.gct);
  out.grad_generator = gx.params + gc.params + gct.params;
  up.c += gc.inputs;
  out.grad_encoder = m.encoder.backward(p.enc, up.c).params;
}

double gan_and_mmd_terms(const GenModel &m, const GenBatch &b, const Pass &p,
                         const KernelSpec &kernel, Upstream &up) {
  const Index n = b.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double value = 0.0;

  const MatrixXd minus_mean = MatrixXd::Constant(n, 1, -inv_n);
  for (auto [fake, grad] : {std::pair{&p.gx, &up.gx}, {&p.gc, &up.gc}, {&p.gct, &up.gct}}) {
    ForwardCache cache;
    value -= inv_n * m.discriminator.forward(*fake, &cache).sum();
    *grad += m.discriminator.backward(cache, minus_mean).inputs;
  }

  const WeightedPointSet post{b.draw.atoms, b.draw.weights};
  for (auto [fake, grad] : {std::pair{&p.gx, &up.gx}, {&p.gct, &up.gct}, {&p.gc, &up.gc}}) {
    const MmdTerms t = mmd_squared_with_grad(post, WeightedPointSet::uniform(*fake), kernel);
    value += t.value;
    *grad += t.grad_q;
  }
  const MmdTerms code =
      mmd_squared_with_grad(WeightedPointSet::uniform(b.xi), WeightedPointSet::uniform(p.c), kernel);
  value += code.value;
  up.c += code.grad_q;
  return value;
}

std::array<double, 4> mi_terms(const GenModel &m, const GenBatch &b, const Pass &p, BoundKind bound,
                               const std::array<double, 4> &coef, Upstream &up, GenLoss &critics) {
  const VectorXd &w = b.draw.weights;
  const MatrixXd *firsts[4] = {&b.draw.atoms, &p.gc, &p.gct, &p.gx};
  MatrixXd *first_grads[4] = {nullptr, &up.gc, &up.gct, &up.gx};
  critics.grad_critic_data_code = VectorXd::Zero(m.critic_data_code.num_params());
  critics.grad_critic_fake_code = VectorXd::Zero(m.critic_fake_code.num_params());

  std::array<double, 4> values{};
  for (int k = 0; k < 4; ++k) {
    const Mlp &critic = k == 0 ? m.critic_data_code : m.critic_fake_code;
    const PairedSample sample{*firsts[k], p.c, w};
    const BoundTerms t = bound_value_and_grad(bound, sample, critic, b.perms[k]);
    values[k] = t.value;
    (k == 0 ? critics.grad_critic_data_code : critics.grad_critic_fake_code) +=
        coef[k] * t.param_grad;
    if (first_grads[k]) *first_grads[k] -= coef[k] * t.grad_x;
    up.c -= coef[k] * t.grad_y;
  }
  return values;
}

void check_finite(double value, const char *what) {
  if (!std::isfinite(value))
    throw Error(ErrorCode::DivergedTraining, std::string(what) + " became nonfinite");
}

} // namespace

GenLoss loss_encoder_generator(const GenModel &model, const GenBatch &batch,
                               const KernelSpec &kernel) {
  const Pass p = run_pass(model, batch);
  Upstream up = zero_upstream(p);
  GenLoss out;
  out.value = gan_and_mmd_terms(model, batch, p, kernel, up);
  check_finite(out.value, "encoder/generator loss");
  backprop_encoder_generator(model, p, std::move(up), out);
  return out;
}

GenLoss loss_discriminator(const GenModel &model, const GenBatch &batch, double gp_lambda) {
  const Pass p = run_pass(model, batch);
  const Mlp &d = model.discriminator;
  const Index n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const MatrixXd &atoms = batch.draw.atoms;

  GenLoss out;
  out.grad_discriminator = VectorXd::Zero(d.num_params());
  const MatrixXd plus_mean = MatrixXd::Constant(n, 1, inv_n);
  for (const MatrixXd *fake : {&p.gx, &p.gc, &p.gct}) {
    ForwardCache cache;
    out.value += inv_n * d.forward(*fake, &cache).sum();
    out.grad_discriminator += d.backward(cache, plus_mean).params;
  }
  ForwardCache real;
  const VectorXd dx = d.forward(atoms, &real).col(0);
  out.value -= 3.0 * batch.draw.weights.dot(dx);
  out.grad_discriminator += d.backward(real, -3.0 * batch.draw.weights).params;

  if (gp_lambda > 0.0) {
    MatrixXd interp(3 * n, atoms.cols());
    const MatrixXd *fakes[3] = {&p.gx, &p.gc, &p.gct};
    for (Index k = 0; k < 3; ++k)
      for (Index i = 0; i < n; ++i) {
        const double u = batch.gp_u(k * n + i);
        interp.row(k * n + i) = u * fakes[k]->row(i) + (1.0 - u) * atoms.row(i);
      }
    const PenaltyResult gp = grad_penalty_value_and_grad(d, interp);
    out.value += gp_lambda * gp.value;
    out.grad_discriminator += gp_lambda * gp.param_grad;
  }
  check_finite(out.value, "discriminator loss");
  return out;
}

MmdTerms loss_code_generator(const MatrixXd &codes, const MatrixXd &generated_codes,
                             const KernelSpec &kernel) {
  return mmd_squared_with_grad(WeightedPointSet::uniform(codes),
                               WeightedPointSet::uniform(generated_codes), kernel);
}

GenLoss code_generator_step_loss(const GenModel &model, const GenBatch &batch,
                                 const KernelSpec &kernel) {
  const MatrixXd c = model.encoder.forward(batch.draw.atoms);
  ForwardCache cache;
  const MatrixXd ct = model.code_generator.forward(batch.xi_sub, &cache);
  const MmdTerms t = loss_code_generator(c, ct, kernel);
  check_finite(t.value, "code generator loss");
  GenLoss out;
  out.value = t.value;
  out.grad_code_generator = model.code_generator.backward(cache, t.grad_q).params;
  return out;
}

MiTerms mi_regularizers(const GenModel &model, const GenBatch &batch, BoundKind bound,
                        const std::array<double, 4> &coefficients) {
  const Pass p = run_pass(model, batch);
  Upstream up = zero_upstream(p);
  MiTerms out;
  out.values = mi_terms(model, batch, p, bound, coefficients, up, out.grads);
  for (double v : out.values) check_finite(v, "mutual information term");
  for (int k = 0; k < 4; ++k) out.grads.value += coefficients[k] * out.values[k];
  backprop_encoder_generator(model, p, std::move(up), out.grads);
  return out;
}

GenLoss encoder_generator_objective(const GenModel &model, const GenBatch &batch,
                                    const GenTrainConfig &config) {
  const Pass p = run_pass(model, batch);
  Upstream up = zero_upstream(p);
  GenLoss out;
  out.value = gan_and_mmd_terms(model, batch, p, config.kernel, up);
  if (config.use_mi) {
    GenLoss critics;
    const auto values = mi_terms(model, batch, p, config.bound, config.mi_coefficients, up, critics);
    for (int k = 0; k < 4; ++k) out.value -= config.mi_coefficients[k] * values[k];
  }
  check_finite(out.value, "encoder/generator objective");
  backprop_encoder_generator(model, p, std::move(up), out);
  return out;
}

GenTrainResult train_genmodel(const Points &data, const GenTrainConfig &config) {
  require(data.rows() >= 2, ErrorCode::EmptyDataset, "need at least two training points");
  require(data.cols() == config.arch.data_dim, ErrorCode::DimensionMismatch,
          "data dimension differs from the architecture");
  config.validate();

  Rng init_rng = make_rng(config.seed, Stream::Init);
  Rng post_rng = make_rng(config.seed, Stream::Posterior);
  Rng noise_rng = make_rng(config.seed, Stream::Noise);
  Rng perm_rng = make_rng(config.seed, Stream::Permutation);
  Rng pen_rng = make_rng(config.seed, Stream::Penalty);

  GenTrainResult result;
  GenModel &m = result.model;
  m = make_gen_model(config.arch, init_rng);

  const BaseMeasure base = fit_base_measure(data);
  DPConfig dpc = config.dp;
  if (!dpc.map_grid.empty()) dpc.concentration = fit_concentration_map(data, base, dpc.map_grid);
  result.concentration = dpc.concentration;
  const double total_mass = dpc.concentration + static_cast<double>(data.rows());

  AdamState adam_e = AdamState::for_size(m.encoder.num_params(), config.lr_encoder_generator);
  AdamState adam_g = AdamState::for_size(m.generator.num_params(), config.lr_encoder_generator);
  AdamState adam_cg = AdamState::for_size(m.code_generator.num_params(), config.lr_code_generator);
  AdamState adam_d = AdamState::for_size(m.discriminator.num_params(), config.lr_discriminator);
  AdamState adam_t1 = AdamState::for_size(m.critic_data_code.num_params(), config.lr_critics);
  AdamState adam_t2 = AdamState::for_size(m.critic_fake_code.num_params(), config.lr_critics);

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    try {
      std::optional<Index> n_atoms;
      if (!dpc.truncation_override)
        n_atoms = std::min(select_truncation(total_mass, dpc.epsilon, post_rng, dpc.truncation_cap),
                           config.max_atoms);
      GenBatch batch =
          make_gen_batch(draw_posterior(data, dpc, post_rng, &base, n_atoms), m, noise_rng,
                         perm_rng, pen_rng);

      const GenLoss ld = loss_discriminator(m, batch, config.gp_lambda);
      adam_step(adam_d, m.discriminator.params(), ld.grad_discriminator);

      const GenLoss lcg = code_generator_step_loss(m, batch, config.kernel);
      adam_step(adam_cg, m.code_generator.params(), lcg.grad_code_generator);

      std::array<double, 4> mi{};
      if (config.use_mi) {
        const MiTerms t = mi_regularizers(m, batch, config.bound, config.mi_coefficients);
        mi = t.values;
        adam_step(adam_t1, m.critic_data_code.params(), -t.grads.grad_critic_data_code);
        adam_step(adam_t2, m.critic_fake_code.params(), -t.grads.grad_critic_fake_code);
      }

      const GenLoss leg = encoder_generator_objective(m, batch, config);
      adam_step(adam_e, m.encoder.params(), leg.grad_encoder);
      adam_step(adam_g, m.generator.params(), leg.grad_generator);

      result.history.discriminator.push_back(ld.value);
      result.history.code_generator.push_back(lcg.value);
      result.history.encoder_generator.push_back(leg.value);
      result.history.mi.push_back(mi);
      result.history.atoms.push_back(batch.size());
    } catch (const Error &e) {
      if (e.code() == ErrorCode::DivergedTraining || e.code() == ErrorCode::NonFiniteGradient)
        throw Error(ErrorCode::DivergedTraining, e.what(), epoch);
      throw;
    }
  }
  return result;
}

Points generate(const GenModel &model, Index count, GenerateMode mode, const Points &inputs,
                Rng &rng) {
  require(count >= 1, ErrorCode::InvalidArgument, "count must be >= 1");
  switch (mode) {
    case GenerateMode::Random:
      return model.generator.forward(standard_normal_matrix(rng, count, model.latent_dim()));
    case GenerateMode::RandomCode: {
      const MatrixXd codes =
          model.code_generator.forward(standard_normal_matrix(rng, count, model.sublatent_dim()));
      return model.generator.forward(codes);
    }
    case GenerateMode::Reconstruct: {
      require(inputs.rows() > 0, ErrorCode::EmptySample, "reconstruction needs real inputs");
      require(inputs.cols() == model.data_dim(), ErrorCode::DimensionMismatch,
              "inputs differ in dimension from the model");
      Points x(count, inputs.cols());
      for (Index i = 0; i < count; ++i) x.row(i) = inputs.row(i % inputs.rows());
      return model.generator.forward(model.encoder.forward(x));
    }
  }
  return {};
}

double coverage_metric(const Points &generated, const Points &reference, const VectorXd &t,
                       Index bins) {
  require(generated.rows() > 0, ErrorCode::EmptySample, "no generated points");
  require(reference.rows() > 0 && reference.rows() == t.size(), ErrorCode::DimensionMismatch,
          "reference points and t values differ in length");
  require(generated.cols() == reference.cols(), ErrorCode::DimensionMismatch,
          "generated and reference points differ in dimension");
  require(bins >= 1, ErrorCode::InvalidArgument, "bins must be >= 1");

  const double lo = t.minCoeff();
  const double width = (t.maxCoeff() - lo) / static_cast<double>(bins);
  std::vector<bool> hit(static_cast<std::size_t>(bins), false);
  for (Index g = 0; g < generated.rows(); ++g) {
    Index nearest = 0;
    double best = INFINITY;
    for (Index r = 0; r < reference.rows(); ++r) {
      const double d = (reference.row(r) - generated.row(g)).squaredNorm();
      if (d < best) {
        best = d;
        nearest = r;
      }
    }
    Index bin = width > 0.0 ? static_cast<Index>((t(nearest) - lo) / width) : 0;
    hit[static_cast<std::size_t>(std::clamp<Index>(bin, 0, bins - 1))] = true;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), true)) /
         static_cast<double>(bins);
}

namespace {

const std::pair<const char *, Mlp GenModel::*> kNetworks[] = {
    {"encoder", &GenModel::encoder},
    {"generator", &GenModel::generator},
    {"code_generator", &GenModel::code_generator},
    {"discriminator", &GenModel::discriminator},
    {"critic_data_code", &GenModel::critic_data_code},
    {"critic_fake_code", &GenModel::critic_fake_code},
};

} // namespace

void save_gen_model(const GenModel &model, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto &[name, member] : kNetworks) {
    const Mlp &net = model.*member;
    const std::string file = std::string(name) + ".bin";
    save_network(net, dir / file);
    manifest << name << ' ' << file << " dims=";
    for (std::size_t i = 0; i < net.layer_dims().size(); ++i)
      manifest << (i ? "," : "") << net.layer_dims()[i];
    manifest << " activations=";
    for (std::size_t i = 0; i < net.activations().size(); ++i)
      manifest << (i ? "," : "") << to_string(net.activations()[i]);
    manifest << '\n';
  }
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "manifest.txt").string());
  out << manifest.str();
}

GenModel load_gen_model(const std::filesystem::path &dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + (dir / "manifest.txt").string());
  GenModel model;
  std::string line;
  int loaded = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string name, file;
    if (!(fields >> name >> file)) continue;
    bool known = false;
    for (const auto &[key, member] : kNetworks)
      if (name == key) {
        model.*member = load_network(dir / file);
        known = true;
        ++loaded;
      }
    if (!known) throw Error(ErrorCode::SchemaError, "unknown network '" + name + "' in manifest");
  }
  if (loaded != 6) throw Error(ErrorCode::SchemaError, "manifest does not list all six networks");
  return model;
}

} // namespace dpmine
