#include "egcnn/multidomain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "egcnn/errors.hpp"
#include "egcnn/optim.hpp"
#include "json.hpp"

namespace egcnn::multidomain {

using nlohmann::json;

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::fully_shared: return "fully-shared";
    case Mode::target_only: return "target-only";
    case Mode::per_domain_heads: return "per-domain-heads";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::full, Mode::fully_shared, Mode::target_only, Mode::per_domain_heads}) {
    if (name == mode_name(m)) return m;
  }
  throw ContractError("unknown mode '" + std::string(name) +
                      "' (expected full, fully-shared, target-only or per-domain-heads)");
}

// ---- linear algebra -----------------------------------------------------------

namespace {

double magnitude(const Eigen::MatrixXd& m) {
  return std::max(1.0, m.cwiseAbs().maxCoeff());
}

void require_square_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw ShapeError(std::string(what) + " needs a non-empty square matrix, got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * magnitude(m)) {
    throw ContractError(std::string(what) + " input is not symmetric (max asymmetry " +
                        std::to_string(asym) + ")");
  }
}

}  // namespace

Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m) {
  require_square_symmetric(m, "matrix_sqrt_psd");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw ContractError("eigendecomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  const double tol = 1e-10 * magnitude(m);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -tol) {
      throw ContractError("matrix_sqrt_psd input has eigenvalue " + std::to_string(lambda(i)));
    }
    lambda(i) = std::sqrt(std::max(0.0, lambda(i)));
  }
  const Eigen::MatrixXd& q = es.eigenvectors();
  Eigen::MatrixXd r = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (r + r.transpose());
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m) {
  require_square_symmetric(m, "inverse_spd");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw ContractError("eigendecomposition failed");
  const Eigen::VectorXd& lambda = es.eigenvalues();
  if (lambda.minCoeff() <= 0.0) {
    throw ContractError("matrix is not positive definite (min eigenvalue " +
                        std::to_string(lambda.minCoeff()) + ")");
  }
  const Eigen::MatrixXd& q = es.eigenvectors();
  Eigen::MatrixXd r = q * lambda.cwiseInverse().asDiagonal() * q.transpose();
  return 0.5 * (r + r.transpose());
}

Eigen::MatrixXd omega_update(const Eigen::MatrixXd& w, double ridge_eps) {
  if (!w.allFinite()) throw ContractError("omega_update on non-finite W");
  const Eigen::Index K = w.cols();
  Eigen::MatrixXd gram = w.transpose() * w;
  gram += ridge_eps * Eigen::MatrixXd::Identity(K, K);
  const Eigen::MatrixXd s = matrix_sqrt_psd(gram);
  const double tr = s.trace();
  if (!(tr > 0.0)) throw ContractError("omega_update: degenerate trace " + std::to_string(tr));
  return s / tr;
}

namespace {

Eigen::MatrixXd ridged_inverse(const Eigen::MatrixXd& omega, double ridge_eps) {
  return inverse_spd(omega + ridge_eps * Eigen::MatrixXd::Identity(omega.rows(), omega.cols()));
}

}  // namespace

double trace_term(const Eigen::MatrixXd& w, const Eigen::MatrixXd& omega, double ridge_eps) {
  if (w.cols() != omega.rows()) throw ShapeError("W columns do not match Omega");
  const Eigen::MatrixXd inv = ridged_inverse(omega, ridge_eps);
  return (w * inv * w.transpose()).trace();
}

Eigen::MatrixXd trace_gradient(const Eigen::MatrixXd& w, const Eigen::MatrixXd& omega,
                               double ridge_eps) {
  if (w.cols() != omega.rows()) throw ShapeError("W columns do not match Omega");
  return 2.0 * w * ridged_inverse(omega, ridge_eps);
}

OmegaCheck check_omega(const Eigen::MatrixXd& omega) {
  OmegaCheck c;
  c.asymmetry = (omega - omega.transpose()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (omega + omega.transpose()),
                                                    Eigen::EigenvaluesOnly);
  c.min_eigen = es.eigenvalues().minCoeff();
  c.trace_error = std::abs(omega.trace() - 1.0);
  return c;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected a matrix, got " + shape_str(t.shape()));
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at(i, j);
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
  return t;
}

Var trace_penalty(Var w, const Eigen::MatrixXd& omega, double ridge_eps) {
  Tape& tape = *w.tape;
  const Eigen::MatrixXd wm = to_eigen(w.value());
  const Eigen::MatrixXd inv = ridged_inverse(omega, ridge_eps);
  if (wm.cols() != inv.rows()) throw ShapeError("W columns do not match Omega");
  const double value = (wm * inv * wm.transpose()).trace();
  return tape.push(
      Tensor::scalar(value), {w.id},
      [wi = w.id, inv](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        const Tensor grad = from_eigen(2.0 * to_eigen(t.value(wi)) * inv);
        Tensor& gw = t.grad_slot(wi);
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += g * grad[i];
      },
      "trace_penalty", tape.requires_grad(w.id));
}

// ---- model ----------------------------------------------------------------

std::vector<Parameter*> Model::trainable() {
  std::vector<Parameter*> p = encoder.all();
  if (mode != Mode::per_domain_heads) p.push_back(&heads.shared);
  if (uses_domain_heads()) p.push_back(&heads.domain);
  return p;
}

std::vector<Parameter*> Model::all_params() {
  std::vector<Parameter*> p = encoder.all();
  p.push_back(&heads.shared);
  p.push_back(&heads.domain);
  return p;
}

std::vector<const Parameter*> Model::all_params() const {
  auto p = const_cast<Model*>(this)->all_params();
  return {p.begin(), p.end()};
}

void Model::check_compatible(const text::Dataset& ds, const aspect::AspectTable& aspects) const {
  if (ds.vocab.hash() != vocab_hash || ds.chars.hash() != char_vocab_hash) {
    throw FormatError("dataset vocabulary does not match the model (vocab hash " +
                      ds.vocab.hash() + " vs " + vocab_hash + ")");
  }
  if (aspects.hash() != aspect_hash) {
    throw FormatError("aspect table does not match the model (hash " + aspects.hash() + " vs " +
                      aspect_hash + ")");
  }
  if (aspects.vocab_hash() != vocab_hash) {
    throw FormatError("aspect table was fitted on a different vocabulary");
  }
  if (ds.domains != domains) throw FormatError("dataset domains do not match the model");
  if (ds.shape.m != config.m || ds.shape.max_word_len != config.max_word_len) {
    throw FormatError("dataset was encoded with m=" + std::to_string(ds.shape.m) + ", L_c=" +
                      std::to_string(ds.shape.max_word_len) + "; model expects m=" +
                      std::to_string(config.m) + ", L_c=" + std::to_string(config.max_word_len));
  }
}

Model init_model(const model::ModelConfig& config, const text::Dataset& ds,
                 const aspect::AspectTable& aspects, Mode mode, int target_domain,
                 std::uint64_t seed) {
  config.validate();
  if (ds.num_domains() == 0) throw ContractError("dataset has no domains");
  if (mode == Mode::target_only &&
      (target_domain < 0 || static_cast<std::size_t>(target_domain) >= ds.num_domains())) {
    throw ContractError("target-only mode needs a target domain in [0, " +
                        std::to_string(ds.num_domains()) + ")");
  }
  if (aspects.vocab_hash() != ds.vocab.hash()) {
    throw FormatError("aspect table was fitted on a different vocabulary");
  }
  if (ds.shape.m != config.m || ds.shape.max_word_len != config.max_word_len) {
    throw ContractError("dataset encoding (m, L_c) does not match the model config");
  }
  Model md;
  md.config = config;
  md.mode = mode;
  md.target_domain = mode == Mode::target_only ? target_domain : -1;
  md.domains = ds.domains;
  md.encoder = model::EncoderParams::init(config, ds.vocab.size(), ds.chars.size(), seed);
  const auto H = static_cast<std::size_t>(config.hidden());
  const auto K = ds.num_domains();
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  md.heads.shared = Parameter("head_u", Tensor({H}));
  md.heads.domain = Parameter("head_w", Tensor({H, K}));
  if (mode != Mode::per_domain_heads) {
    for (auto& v : md.heads.shared.value.data()) v = u(rng);
  }
  if (md.uses_domain_heads()) {
    for (auto& v : md.heads.domain.value.data()) v = u(rng);
  }
  const auto k = static_cast<Eigen::Index>(K);
  md.omega = Eigen::MatrixXd::Identity(k, k) / static_cast<double>(K);
  md.vocab_hash = ds.vocab.hash();
  md.char_vocab_hash = ds.chars.hash();
  md.aspect_hash = aspects.hash();
  return md;
}

Var predict_review(Model& md, model::BoundEncoder& enc, const text::EncodedReview& review,
                   Var shared, std::optional<Var> domain_w) {
  Var h = enc.encode(review);
  if (!md.uses_domain_heads() || !domain_w) return model::predict(h, shared);
  return model::predict(h, shared, column(*domain_w, static_cast<std::size_t>(review.domain_id)));
}

LossParts loss_full(Tape& tape, Model& md, const aspect::AspectTable& aspects,
                    std::span<const text::EncodedReview* const> batch, const LossConfig& config,
                    double penalty_scale, model::GateMode gate_mode) {
  if (batch.empty()) throw ContractError("loss over an empty batch");
  model::BoundEncoder enc(tape, md.encoder, aspects, md.config);
  Var shared = md.mode == Mode::per_domain_heads ? tape.constant(md.heads.shared.value)
                                                 : tape.param(md.heads.shared);
  std::optional<Var> w;
  if (md.uses_domain_heads()) w = tape.param(md.heads.domain);

  std::vector<Var> errs;
  errs.reserve(batch.size());
  for (const text::EncodedReview* r : batch) {
    if (r->domain_id < 0 || static_cast<std::size_t>(r->domain_id) >= md.num_domains()) {
      throw ContractError("review domain id " + std::to_string(r->domain_id) + " out of range");
    }
    Var h = enc.encode(*r, gate_mode);
    Var pred = w ? model::predict(h, shared, column(*w, static_cast<std::size_t>(r->domain_id)))
                 : model::predict(h, shared);
    errs.push_back(mse(pred, r->target));
  }
  LossParts parts;
  Var mse_sum = sum(errs);
  parts.mse = mse_sum.value().item();
  std::vector<Var> terms{mse_sum};

  if (w && config.lambda1 > 0.0) {
    Var tr = trace_penalty(*w, md.omega, config.ridge_eps);
    parts.trace = tr.value().item();
    terms.push_back(scale(tr, penalty_scale * config.lambda1));
  }
  if (config.lambda2 > 0.0) {
    std::vector<Var> squares;
    for (Parameter* p : md.trainable()) squares.push_back(sum_squares(tape, *p));
    Var reg = sum(squares);
    parts.reg = reg.value().item();
    terms.push_back(scale(reg, penalty_scale * config.lambda2));
  }
  parts.total = sum(terms);
  return parts;
}

double predict(Model& md, const aspect::AspectTable& aspects, const text::EncodedReview& review) {
  Tape tape;
  model::BoundEncoder enc(tape, md.encoder, aspects, md.config);
  Var shared = tape.constant(md.heads.shared.value);
  std::optional<Var> w;
  if (md.uses_domain_heads()) w = tape.constant(md.heads.domain.value);
  return predict_review(md, enc, review, shared, w).value().item();
}

// ---- training ---------------------------------------------------------------

std::vector<const text::EncodedReview*> training_records(const Model& md, const text::Dataset& ds,
                                                         text::Split split) {
  std::vector<const text::EncodedReview*> out;
  for (const auto& r : ds.splits[split]) {
    if (md.mode == Mode::target_only && r.domain_id != md.target_domain) continue;
    out.push_back(&r);
  }
  return out;
}

TrainState train(Model& md, const text::Dataset& ds, const aspect::AspectTable& aspects,
                 const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
  md.check_compatible(ds, aspects);
  if (config.epochs < 0 || config.batch < 1 || config.lr <= 0.0 || config.omega_every < 1) {
    throw ContractError("invalid training schedule (epochs >= 0, batch >= 1, lr > 0)");
  }
  const LossConfig& lc = config.loss;
  if (lc.lambda1 < 0.0 || lc.lambda2 < 0.0 || lc.ridge_eps < 0.0) {
    throw ContractError("lambda1, lambda2 and ridge_eps must be non-negative");
  }
  const auto records = training_records(md, ds);
  if (records.empty()) throw ContractError("training split is empty for this mode");

  const AdaGrad opt{config.lr, config.adagrad_eps};
  auto params = md.trainable();
  zero_grads(params);
  std::mt19937_64 rng(config.seed * 0x2545F4914F6CDD1DULL + 17);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  const double n = static_cast<double>(records.size());
  const auto bs = static_cast<std::size_t>(config.batch);

  TrainState state;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = md.epochs_run + 1;
    std::vector<const text::EncodedReview*> batch;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(records[order[i]]);
      }
      Tape tape(TapeOptions{.check_finite = config.check_finite});
      LossParts parts =
          loss_full(tape, md, aspects, batch, lc, static_cast<double>(batch.size()) / n);
      const double total = parts.total.value().item();
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << log.epoch << ": mse=" << parts.mse
            << " trace=" << parts.trace << " reg=" << parts.reg;
        throw TrainingError(msg.str());
      }
      tape.backward(parts.total);
      opt.step(params);
      log.mse += parts.mse;
      log.trace = parts.trace;
      log.reg = parts.reg;
    }
    if (md.mode == Mode::full && (epoch + 1) % config.omega_every == 0) {
      md.omega = omega_update(to_eigen(md.heads.domain.value), lc.ridge_eps);
      log.omega_updated = true;
    }
    log.total = log.mse + lc.lambda1 * log.trace + lc.lambda2 * log.reg;
    log.omega = md.omega;
    ++md.epochs_run;
    if (on_epoch) on_epoch(log);
    state.history.push_back(std::move(log));
  }
  return state;
}

// ---- checkpoints ------------------------------------------------------------

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

json config_json(const model::ModelConfig& c) {
  return {{"m", c.m},
          {"dim", c.dim},
          {"char_dim", c.char_dim},
          {"char_width", c.char_width},
          {"char_features", c.char_features},
          {"aspects", c.aspects},
          {"channels", c.channels},
          {"max_word_len", c.max_word_len},
          {"widths", c.widths}};
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig c;
  c.m = j.at("m");
  c.dim = j.at("dim");
  c.char_dim = j.at("char_dim");
  c.char_width = j.at("char_width");
  c.char_features = j.at("char_features");
  c.aspects = j.at("aspects");
  c.channels = j.at("channels");
  c.max_word_len = j.at("max_word_len");
  c.widths = j.at("widths").get<std::vector<int>>();
  c.validate();
  return c;
}

}  // namespace

std::string epoch_log_json(const EpochLog& log) {
  json j = {{"epoch", log.epoch},   {"mse", log.mse},     {"trace", log.trace},
            {"reg", log.reg},       {"total", log.total}, {"omega_updated", log.omega_updated},
            {"omega", matrix_json(log.omega)}};
  return j.dump();
}

void save_checkpoint(const Model& md, const std::filesystem::path& path) {
  json j;
  j["format"] = "egcnn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_json(md.config);
  j["mode"] = mode_name(md.mode);
  j["target_domain"] = md.target_domain;
  j["domains"] = md.domains;
  j["vocab_hash"] = md.vocab_hash;
  j["char_vocab_hash"] = md.char_vocab_hash;
  j["aspect_hash"] = md.aspect_hash;
  j["epochs_run"] = md.epochs_run;
  j["omega"] = matrix_json(md.omega);
  j["run_config"] = json::parse(md.run_config);
  json params = json::array();
  for (const Parameter* p : md.all_params()) {
    params.push_back({{"name", p->name},
                      {"shape", p->value.shape()},
                      {"value", p->value.storage()},
                      {"accum", p->accum.storage()}});
  }
  j["params"] = std::move(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open checkpoint " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "egcnn-checkpoint") {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  if (j.value("version", -1) != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(j.value("version", -1)) +
                      " is not supported");
  }
  Model md;
  md.config = config_from_json(j.at("config"));
  md.mode = parse_mode(j.at("mode").get<std::string>());
  md.target_domain = j.at("target_domain");
  md.domains = j.at("domains").get<std::vector<std::string>>();
  md.vocab_hash = j.at("vocab_hash");
  md.char_vocab_hash = j.at("char_vocab_hash");
  md.aspect_hash = j.at("aspect_hash");
  md.epochs_run = j.at("epochs_run");
  md.run_config = j.at("run_config").dump();
  const auto om = j.at("omega").get<std::vector<std::vector<double>>>();
  md.omega.resize(static_cast<Eigen::Index>(om.size()), static_cast<Eigen::Index>(om.size()));
  for (std::size_t r = 0; r < om.size(); ++r)
    for (std::size_t c = 0; c < om[r].size(); ++c)
      md.omega(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = om[r][c];

  std::size_t vocab = 0, chars = 0;
  for (const auto& p : j.at("params")) {
    const auto shape = p.at("shape").get<Shape>();
    if (p.at("name") == "word_emb") vocab = shape.at(0);
    if (p.at("name") == "char_emb") chars = shape.at(0);
  }
  md.encoder = model::EncoderParams::init(md.config, vocab, chars, 0);
  const auto H = static_cast<std::size_t>(md.config.hidden());
  md.heads.shared = Parameter("head_u", Tensor({H}));
  md.heads.domain = Parameter("head_w", Tensor({H, md.domains.size()}));
  auto targets = md.all_params();
  const auto& stored = j.at("params");
  if (stored.size() != targets.size()) throw FormatError("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Parameter& p = *targets[i];
    const auto& s = stored[i];
    if (s.at("name").get<std::string>() != p.name || s.at("shape").get<Shape>() != p.value.shape()) {
      throw FormatError("checkpoint parameter '" + s.at("name").get<std::string>() +
                        "' does not match the model layout");
    }
    p.value = Tensor(p.value.shape(), s.at("value").get<std::vector<double>>());
    p.accum = Tensor(p.value.shape(), s.at("accum").get<std::vector<double>>());
    p.grad = Tensor(p.value.shape());
  }
  return md;
}

}  // namespace egcnn::multidomain
