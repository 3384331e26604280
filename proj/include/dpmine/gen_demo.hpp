#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "dpmine/distances.hpp"
#include "dpmine/dp_core.hpp"
#include "dpmine/mi_estimators.hpp"
#include "dpmine/nn.hpp"

namespace dpmine {

struct GenModel {
  Mlp encoder;
  Mlp generator;
  Mlp code_generator;
  Mlp discriminator;
  Mlp critic_data_code;  // T_gamma1
  Mlp critic_fake_code;  // T_gamma2

  [[nodiscard]] Index data_dim() const { return generator.output_dim(); }
  [[nodiscard]] Index latent_dim() const { return encoder.output_dim(); }
  [[nodiscard]] Index sublatent_dim() const { return code_generator.input_dim(); }
};

struct GenArchitecture {
  Index data_dim = 3;
  Index latent = 100;
  Index sublatent = 10;
  Index width = 128;
  Index code_width = 64;
};

GenModel make_gen_model(const GenArchitecture &arch, Rng &rng);

struct GenTrainConfig {
  Index epochs = 5000;
  Index max_atoms = 256;           ///< stopping-rule N is clamped to this
  double gp_lambda = 10.0;
  std::array<double, 4> mi_coefficients{1.0, 1.0, 1.0, 1.0};
  bool use_mi = true;              ///< false: ablation without the MI regularizers
  BoundKind bound = BoundKind::DV;
  double lr_encoder_generator = 2e-4;
  double lr_discriminator = 2e-4;
  double lr_code_generator = 2e-4;
  double lr_critics = 2e-4;
  KernelSpec kernel;
  DPConfig dp;
  GenArchitecture arch;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything random that one training step consumes, drawn up front so the
/// losses below are deterministic functions of (batch, model).
struct GenBatch {
  DPPosteriorDraw draw;
  MatrixXd xi;        ///< N x p latent noise
  MatrixXd xi_sub;    ///< N x q sub-latent noise
  std::array<std::vector<Index>, 4> perms;
  VectorXd gp_u;      ///< 3N interpolation coefficients

  [[nodiscard]] Index size() const { return draw.size(); }
};

GenBatch make_gen_batch(DPPosteriorDraw draw, const GenModel &model, Rng &noise_rng,
                        Rng &perm_rng, Rng &penalty_rng);

/// Value with parameter gradients for whichever networks the loss touches.
struct GenLoss {
  double value = 0.0;
  VectorXd grad_encoder;
  VectorXd grad_generator;
  VectorXd grad_code_generator;
  VectorXd grad_discriminator;
  VectorXd grad_critic_data_code;
  VectorXd grad_critic_fake_code;
};

/// -(1/N) sum [D(G xi) + D(G c) + D(G c~)] + MMD(post, G xi) + MMD(post, G c~)
/// + MMD(post, G c) + MMD(F_xi, F_c); gradients to encoder and generator.
GenLoss loss_encoder_generator(const GenModel &model, const GenBatch &batch,
                               const KernelSpec &kernel);

/// (1/N) sum [D(G xi) + D(G c) + D(G c~)] - 3 sum J_i D(X_i) + lambda * GP;
/// gradients to the discriminator.
GenLoss loss_discriminator(const GenModel &model, const GenBatch &batch, double gp_lambda);

/// Uniform-weight MMD between codes and generated codes, with gradients
/// w.r.t. the generated codes.
MmdTerms loss_code_generator(const MatrixXd &codes, const MatrixXd &generated_codes,
                             const KernelSpec &kernel);

/// Same, pushed through the code generator for `batch`.
GenLoss code_generator_step_loss(const GenModel &model, const GenBatch &batch,
                                 const KernelSpec &kernel);

struct MiTerms {
  /// L(X, c) with T1; L(G c, c), L(G c~, c), L(G xi, c) with T2.
  std::array<double, 4> values{};
  /// Critic grads ascend sum_k coef_k L_k; encoder/generator grads descend
  /// -sum_k coef_k L_k.
  GenLoss grads;
};

MiTerms mi_regularizers(const GenModel &model, const GenBatch &batch, BoundKind bound,
                        const std::array<double, 4> &coefficients = {1.0, 1.0, 1.0, 1.0});

/// Full encoder/generator objective: loss_encoder_generator minus the
/// weighted MI terms (when enabled).
GenLoss encoder_generator_objective(const GenModel &model, const GenBatch &batch,
                                    const GenTrainConfig &config);

struct GenHistory {
  std::vector<double> encoder_generator;
  std::vector<double> discriminator;
  std::vector<double> code_generator;
  std::vector<std::array<double, 4>> mi;
  std::vector<Index> atoms;
};

struct GenTrainResult {
  GenModel model;
  GenHistory history;
  double concentration = 0.0;
};

GenTrainResult train_genmodel(const Points &data, const GenTrainConfig &config);

enum class GenerateMode { Random, RandomCode, Reconstruct };

/// Random: G(xi); RandomCode: G(CG(xi')); Reconstruct: G(E(inputs)).
Points generate(const GenModel &model, Index count, GenerateMode mode, const Points &inputs,
                Rng &rng);

/// Fraction of equal-width bins over the range of `t` that hold the nearest
/// reference point of at least one generated point.
double coverage_metric(const Points &generated, const Points &reference, const VectorXd &t,
                       Index bins = 20);

/// Writes one blob per network plus a plain-text manifest.
void save_gen_model(const GenModel &model, const std::filesystem::path &dir);
GenModel load_gen_model(const std::filesystem::path &dir);

} // namespace dpmine
