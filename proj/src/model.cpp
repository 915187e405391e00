#include "egcnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "egcnn/errors.hpp"

namespace egcnn::model {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ContractError(std::string(name) + " must be >= 1, got " + std::to_string(v));
  };
  positive(m, "m");
  positive(dim, "dim");
  positive(char_dim, "char_dim");
  positive(char_width, "char_width");
  positive(char_features, "char_features");
  positive(aspects, "aspects");
  positive(channels, "channels");
  positive(max_word_len, "max_word_len");
  if (widths.empty()) throw ContractError("at least one filter width is required");
  std::set<int> seen;
  for (int f : widths) {
    if (f < 1 || f > m) {
      throw ContractError("filter width " + std::to_string(f) + " outside [1, " +
                          std::to_string(m) + "]");
    }
    if (!seen.insert(f).second) throw ContractError("duplicate filter width " + std::to_string(f));
  }
  if (char_width > max_word_len) {
    throw ContractError("char_width " + std::to_string(char_width) + " exceeds max_word_len " +
                        std::to_string(max_word_len));
  }
}

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

EncoderParams EncoderParams::init(const ModelConfig& c, std::size_t vocab_size,
                                  std::size_t char_vocab_size, std::uint64_t seed) {
  c.validate();
  if (vocab_size < 2 || char_vocab_size < 2) {
    throw ContractError("vocabularies must contain at least PAD and UNK");
  }
  std::mt19937_64 rng(seed);
  const auto D = static_cast<std::size_t>(c.dim);
  const auto dch = static_cast<std::size_t>(c.char_dim);
  const auto dc = static_cast<std::size_t>(c.char_features);
  const auto wc = static_cast<std::size_t>(c.char_width);
  const auto Dt = static_cast<std::size_t>(c.total_dim());
  const auto C = static_cast<std::size_t>(c.channels);

  EncoderParams p;
  p.word_emb = Parameter("word_emb", uniform({vocab_size, D}, 0.05, rng));
  p.char_emb = Parameter("char_emb", uniform({char_vocab_size, dch}, 0.05, rng));
  for (Parameter* t : {&p.word_emb, &p.char_emb}) {
    t->frozen_rows = {static_cast<std::size_t>(text::kPad)};
    for (auto& v : t->value.row(text::kPad)) v = 0.0;
  }
  p.char_filters = Parameter("char_filters", uniform({wc, dch, dc}, glorot(wc * dch, dc), rng));
  p.char_bias = Parameter("char_bias", Tensor({dc}));
  p.gate_w = Parameter("gate_w", Tensor({Dt}));
  p.gate_b = Parameter("gate_b", Tensor({1}));
  for (int f : c.widths) {
    const auto fw = static_cast<std::size_t>(f);
    p.conv_w.emplace_back("conv" + std::to_string(f) + "_w",
                          uniform({fw, Dt, C}, glorot(fw * Dt, C), rng));
    p.conv_b.emplace_back("conv" + std::to_string(f) + "_b", Tensor({C}));
  }
  return p;
}

std::vector<Parameter*> EncoderParams::all() {
  std::vector<Parameter*> out{&word_emb, &char_emb, &char_filters, &char_bias, &gate_w, &gate_b};
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    out.push_back(&conv_w[i]);
    out.push_back(&conv_b[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

BoundEncoder::BoundEncoder(Tape& tape, EncoderParams& params, const aspect::AspectTable& aspects,
                           const ModelConfig& config)
    : tape_(&tape), params_(&params), aspects_(&aspects), config_(&config) {
  if (aspects.aspects() != static_cast<std::size_t>(config.aspects)) {
    throw ContractError("aspect table has " + std::to_string(aspects.aspects()) +
                        " aspects, model expects " + std::to_string(config.aspects));
  }
  if (aspects.vocab_size() != params.word_emb.value.dim(0)) {
    throw ContractError("aspect table covers " + std::to_string(aspects.vocab_size()) +
                        " words, word table has " + std::to_string(params.word_emb.value.dim(0)));
  }
  char_filters_ = tape.param(params.char_filters);
  char_bias_ = tape.param(params.char_bias);
  gate_w_ = tape.param(params.gate_w);
  gate_b_ = tape.param(params.gate_b);
  for (std::size_t i = 0; i < params.conv_w.size(); ++i) {
    conv_w_.push_back(tape.param(params.conv_w[i]));
    conv_b_.push_back(tape.param(params.conv_b[i]));
  }
  order_.resize(config.widths.size());
  std::iota(order_.begin(), order_.end(), 0);
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return config.widths[a] < config.widths[b]; });
}

Var BoundEncoder::char_emb(std::span<const int> char_ids) {
  std::vector<int> key(char_ids.begin(), char_ids.end());
  if (auto it = char_cache_.find(key); it != char_cache_.end()) return it->second;
  Var chars = embedding_lookup(*tape_, params_->char_emb, char_ids);
  Var out = max_pool_over_time(relu(text_conv(chars, char_filters_, char_bias_)));
  char_cache_.emplace(std::move(key), out);
  return out;
}

Var BoundEncoder::aspect_rows(std::span<const int> word_ids) {
  const std::size_t A = aspects_->aspects();
  Tensor rows({word_ids.size(), A});
  for (std::size_t i = 0; i < word_ids.size(); ++i) {
    auto src = aspects_->lookup(word_ids[i]);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  return tape_->constant(std::move(rows));
}

Var BoundEncoder::compose_word_rep(int word_id, std::span<const int> char_ids) {
  const int ids[1] = {word_id};
  Var word = embedding_lookup(*tape_, params_->word_emb, ids);
  const Var ch[1] = {char_emb(char_ids)};
  const Var parts[3] = {word, stack_rows(ch), aspect_rows(ids)};
  Var row = concat_cols(parts);
  return reshape(row, {row.value().size()});
}

Var BoundEncoder::compose(const text::EncodedReview& review) {
  const auto m = static_cast<std::size_t>(config_->m);
  const auto lc = static_cast<std::size_t>(config_->max_word_len);
  if (review.word_ids.size() != m || review.char_ids.size() != m * lc) {
    throw ShapeError("review encoded with " + std::to_string(review.word_ids.size()) +
                     " words, model expects m=" + std::to_string(m) + " and L_c=" +
                     std::to_string(lc));
  }
  Var words = embedding_lookup(*tape_, params_->word_emb, review.word_ids);
  std::vector<Var> chars;
  chars.reserve(m);
  const std::span<const int> all_chars(review.char_ids);
  for (std::size_t i = 0; i < m; ++i) chars.push_back(char_emb(all_chars.subspan(i * lc, lc)));
  const Var parts[3] = {words, stack_rows(chars), aspect_rows(review.word_ids)};
  return concat_cols(parts);
}

Var BoundEncoder::gate(Var word_rep) {
  return sigmoid(add(dot(word_rep, gate_w_), gate_b_));
}

Var BoundEncoder::gates(Var stacked) { return sigmoid(row_affine(stacked, gate_w_, gate_b_)); }

Var BoundEncoder::encode(const text::EncodedReview& review, GateMode mode) {
  Var e = compose(review);
  switch (mode) {
    case GateMode::learned:
      e = scale_rows(e, gates(e));
      break;
    case GateMode::forced_one:
      e = scale_rows(e, tape_->constant(Tensor({static_cast<std::size_t>(config_->m)}, 1.0)));
      break;
    case GateMode::disabled:
      break;
  }
  std::vector<Var> pooled;
  pooled.reserve(order_.size());
  for (std::size_t i : order_) {
    pooled.push_back(max_pool_over_time(relu(text_conv(e, conv_w_[i], conv_b_[i]))));
  }
  return concat(pooled);
}

Var predict(Var h, Var shared_head, Var domain_head) {
  return dot(add(shared_head, domain_head), h);
}

Var predict(Var h, Var shared_head) { return dot(shared_head, h); }

std::vector<std::pair<std::string, double>> inspect_gates(EncoderParams& params,
                                                          const aspect::AspectTable& aspects,
                                                          const ModelConfig& config,
                                                          const text::EncodedReview& review) {
  Tape tape;
  BoundEncoder enc(tape, params, aspects, config);
  const Tensor& g = enc.gates(enc.compose(review)).value();
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < review.word_ids.size(); ++i) {
    if (review.word_ids[i] == text::kPad) continue;
    std::string tok = i < review.tokens.size() ? review.tokens[i] : "<unk>";
    out.emplace_back(std::move(tok), g[i]);
  }
  return out;
}

std::size_t load_word_vectors(const std::filesystem::path& path, const text::Vocab& vocab,
                              Parameter& word_emb) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open word vector file " + path.string());
  const std::size_t D = word_emb.value.dim(1);
  std::size_t replaced = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> vec;
    double x;
    while (ss >> x) vec.push_back(x);
    if (vec.size() != D) {
      throw FormatError("word vector on line " + std::to_string(lineno) + " has " +
                        std::to_string(vec.size()) + " values, expected " + std::to_string(D));
    }
    const int id = vocab.id(token);
    if (id == text::kUnk || id == text::kPad) continue;
    std::copy(vec.begin(), vec.end(), word_emb.value.row(static_cast<std::size_t>(id)).begin());
    ++replaced;
  }
  return replaced;
}

}  // namespace egcnn::model
