#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egcnn/aspect.hpp"
#include "egcnn/autodiff.hpp"
#include "egcnn/text.hpp"

namespace egcnn::model {

struct ModelConfig {
  int m = 100;              // sentence length limit
  int dim = 100;            // word embedding size D
  int char_dim = 16;        // character embedding size
  int char_width = 3;       // character convolution window
  int char_features = 50;   // d_c, CharEmb output size
  int aspects = 100;        // |A|
  int channels = 128;       // C per filter width
  int max_word_len = 16;    // L_c
  std::vector<int> widths{2, 3, 4, 5};

  int total_dim() const { return dim + char_features + aspects; }
  int hidden() const { return static_cast<int>(widths.size()) * channels; }
  // Throws ContractError on any invalid extent.
  void validate() const;
};

enum class GateMode {
  learned,     // g_i = sigmoid(W_g . e'_i + b_g)
  forced_one,  // every g_i multiplied in as exactly 1
  disabled,    // no gate op at all (the ungated multi-granularity CNN)
};

struct EncoderParams {
  Parameter word_emb;      // [|V| x D], PAD row frozen at zero
  Parameter char_emb;      // [|V_char| x char_dim], PAD row frozen at zero
  Parameter char_filters;  // [char_width x char_dim x char_features]
  Parameter char_bias;     // [char_features]
  Parameter gate_w;        // [D_total]
  Parameter gate_b;        // [1]
  std::vector<Parameter> conv_w;  // per width: [f x D_total x C]
  std::vector<Parameter> conv_b;  // per width: [C]

  static EncoderParams init(const ModelConfig& config, std::size_t vocab_size,
                            std::size_t char_vocab_size, std::uint64_t seed);
  std::vector<Parameter*> all();
};

// Encoder parameters bound to one tape. Dense weights become shared leaves and
// character encodings are memoized per distinct character sequence, so a batch
// reuses both.
class BoundEncoder {
 public:
  BoundEncoder(Tape& tape, EncoderParams& params, const aspect::AspectTable& aspects,
               const ModelConfig& config);

  Tape& tape() { return *tape_; }
  const ModelConfig& config() const { return *config_; }

  // CharEmb: embed -> conv -> relu -> max over positions. [d_c]
  Var char_emb(std::span<const int> char_ids);
  // Stacked representation word (+) char (+) aspect of one word. [D_total]
  Var compose_word_rep(int word_id, std::span<const int> char_ids);
  // Stacked representations of all m positions. [m x D_total]
  Var compose(const text::EncodedReview& review);
  // Gate of a single stacked vector. [1]
  Var gate(Var word_rep);
  // Gates of every row of a stacked matrix. [m]
  Var gates(Var stacked);
  // h_X of length |widths| * C, widths in ascending order.
  Var encode(const text::EncodedReview& review, GateMode mode = GateMode::learned);

 private:
  Var aspect_rows(std::span<const int> word_ids);

  Tape* tape_;
  EncoderParams* params_;
  const aspect::AspectTable* aspects_;
  const ModelConfig* config_;
  Var char_filters_, char_bias_, gate_w_, gate_b_;
  std::vector<Var> conv_w_, conv_b_;
  std::vector<std::size_t> order_;  // conv bank indices sorted by width
  std::map<std::vector<int>, Var> char_cache_;
};

// (U + W_k) . h_X, no output nonlinearity.
Var predict(Var h, Var shared_head, Var domain_head);
// U . h_X for single-head models.
Var predict(Var h, Var shared_head);

// Per-word gate values for the kept (non-PAD) tokens of a review.
std::vector<std::pair<std::string, double>> inspect_gates(EncoderParams& params,
                                                          const aspect::AspectTable& aspects,
                                                          const ModelConfig& config,
                                                          const text::EncodedReview& review);

// Loads "token v1 ... vD" lines into rows of the word table for tokens present
// in the vocabulary. Returns the number of rows replaced.
std::size_t load_word_vectors(const std::filesystem::path& path, const text::Vocab& vocab,
                              Parameter& word_emb);

}  // namespace egcnn::model
