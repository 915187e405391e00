#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egcnn/aspect.hpp"
#include "egcnn/autodiff.hpp"
#include "egcnn/model.hpp"
#include "egcnn/text.hpp"

namespace egcnn::multidomain {

enum class Mode {
  full,              // U + per-domain W_k, trace penalty, learned Omega
  fully_shared,      // single head U over all domains
  target_only,       // single head U trained on one domain
  per_domain_heads,  // U fixed at 0, Omega fixed at I/K, per-domain W_k
};

const char* mode_name(Mode m);
Mode parse_mode(std::string_view name);

struct LossConfig {
  double lambda1 = 0.01;
  double lambda2 = 1e-4;
  double ridge_eps = 1e-6;
};

// ---- domain correlation -----------------------------------------------------

// Q sqrt(L) Q^T of a symmetric PSD matrix. Eigenvalues down to -1e-10 (scaled
// by the matrix magnitude) are clamped to zero; anything more negative or an
// asymmetric input is a ContractError.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m);

// Inverse of a symmetric positive definite matrix through its eigendecomposition.
Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m);

// Closed-form minimizer of tr(W Omega^-1 W^T) over Omega PSD with unit trace:
// S = sqrt(W^T W + ridge I), Omega = S / tr(S).
Eigen::MatrixXd omega_update(const Eigen::MatrixXd& w, double ridge_eps);

// tr(W (Omega + ridge I)^-1 W^T).
double trace_term(const Eigen::MatrixXd& w, const Eigen::MatrixXd& omega, double ridge_eps);
// 2 W (Omega + ridge I)^-1.
Eigen::MatrixXd trace_gradient(const Eigen::MatrixXd& w, const Eigen::MatrixXd& omega,
                               double ridge_eps);

struct OmegaCheck {
  double asymmetry = 0.0;   // max |O - O^T|
  double min_eigen = 0.0;
  double trace_error = 0.0;  // |tr(O) - 1|

  bool ok(double tol = 1e-10) const {
    return asymmetry <= tol && min_eigen >= -tol && trace_error <= tol;
  }
};
OmegaCheck check_omega(const Eigen::MatrixXd& omega);

// Tape op: value tr(W Omega_ridged^-1 W^T), adjoint trace_gradient.
Var trace_penalty(Var w, const Eigen::MatrixXd& omega, double ridge_eps);

Eigen::MatrixXd to_eigen(const Tensor& t);
Tensor from_eigen(const Eigen::MatrixXd& m);

// ---- model ----------------------------------------------------------------

struct DomainHeads {
  Parameter shared;  // U [H]
  Parameter domain;  // W [H x K]; unused by single-head modes
};

struct Model {
  model::ModelConfig config;
  Mode mode = Mode::full;
  int target_domain = -1;
  std::vector<std::string> domains;
  model::EncoderParams encoder;
  DomainHeads heads;
  Eigen::MatrixXd omega;
  std::string vocab_hash;
  std::string char_vocab_hash;
  std::string aspect_hash;
  int epochs_run = 0;
  std::string run_config = "{}";  // resolved RunConfig as JSON text

  std::size_t num_domains() const { return domains.size(); }
  bool uses_domain_heads() const { return mode == Mode::full || mode == Mode::per_domain_heads; }
  // Parameters updated by the optimizer in this mode.
  std::vector<Parameter*> trainable();
  // Every parameter tensor, including heads the mode does not train.
  std::vector<Parameter*> all_params();
  std::vector<const Parameter*> all_params() const;
  // ContractError unless the dataset vocabularies and aspect table match.
  void check_compatible(const text::Dataset& ds, const aspect::AspectTable& aspects) const;
};

Model init_model(const model::ModelConfig& config, const text::Dataset& ds,
                 const aspect::AspectTable& aspects, Mode mode, int target_domain,
                 std::uint64_t seed);

// Prediction head for a review of domain k given bound encoder output.
Var predict_review(Model& model, model::BoundEncoder& enc,
                   const text::EncodedReview& review, Var shared, std::optional<Var> domain_w);

struct LossParts {
  Var total;
  double mse = 0.0;
  double trace = 0.0;
  double reg = 0.0;
};

// Sum of squared errors over the batch plus penalty_scale * (lambda1 * trace
// + lambda2 * l_reg). penalty_scale = 1 gives the whole-corpus objective when
// the batch is the entire training set.
LossParts loss_full(Tape& tape, Model& model, const aspect::AspectTable& aspects,
                    std::span<const text::EncodedReview* const> batch, const LossConfig& config,
                    double penalty_scale = 1.0,
                    model::GateMode gate_mode = model::GateMode::learned);

double predict(Model& model, const aspect::AspectTable& aspects,
               const text::EncodedReview& review);

// ---- training ---------------------------------------------------------------

struct TrainConfig {
  int epochs = 10;
  int batch = 32;
  double lr = 0.08;
  double adagrad_eps = 1e-8;
  LossConfig loss;
  std::uint64_t seed = 1;
  int omega_every = 1;  // epochs between Omega updates
  bool check_finite = false;
};

struct EpochLog {
  int epoch = 0;
  double mse = 0.0;    // running squared-error sum over the epoch
  double trace = 0.0;  // trace term at the last batch
  double reg = 0.0;    // l_reg at the last batch
  double total = 0.0;
  bool omega_updated = false;
  Eigen::MatrixXd omega;
};

struct TrainState {
  std::vector<EpochLog> history;
};

// Alternating optimization: AdaGrad over shuffled mixed-domain minibatches
// with Omega fixed, then the closed-form Omega update (full mode only).
TrainState train(Model& model, const text::Dataset& ds, const aspect::AspectTable& aspects,
                 const TrainConfig& config,
                 const std::function<void(const EpochLog&)>& on_epoch = {});

// Training records selected by the model's mode (target_only keeps one domain).
std::vector<const text::EncodedReview*> training_records(const Model& model,
                                                         const text::Dataset& ds,
                                                         text::Split split = text::Split::train);

// ---- checkpoints ------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::string epoch_log_json(const EpochLog& log);

}  // namespace egcnn::multidomain
