#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "egcnn/text.hpp"

namespace egcnn::synthetic {

// Generator for multi-domain regression data with known ground truth.
//
// Each review is a bag of filler tokens plus a random subset of a shared pool
// of signal tokens (each present with signal_prob). Domain k scores a review as
// y = sigmoid(head_scale * beta_k . (c - signal_prob) + noise * N(0,1)) where c
// is the 0/1 signal-presence vector. Related domains (connected in `related`)
// share a head direction; unrelated groups get mutually orthogonal heads.
struct SyntheticSpec {
  int domains = 3;
  int vocab_size = 60;     // filler + signal tokens
  int signal_tokens = 6;
  // K x K relatedness; must be an equivalence relation. Empty = all unrelated.
  std::vector<std::vector<bool>> related;
  // Documents per domain; one value is broadcast to every domain.
  std::vector<int> train_docs{64};
  std::vector<int> dev_docs{0};
  std::vector<int> test_docs{0};
  int min_len = 6;   // filler tokens per document, inclusive range
  int max_len = 12;
  double signal_prob = 0.3;
  double head_scale = 3.0;
  double noise = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  std::vector<std::string> domains;
  text::Splits<text::LabeledText> splits;
  std::vector<std::string> signal_tokens;
  std::vector<std::string> filler_tokens;
  Eigen::MatrixXd heads;    // K x S generating heads beta_k
  std::vector<int> groups;  // relatedness group of each domain
};

SyntheticData generate(const SyntheticSpec& spec);

// Noise-free score of a signal-presence vector under domain k.
double score(const SyntheticData& data, const SyntheticSpec& spec, int domain,
             const std::vector<std::string>& tokens);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Writes the generating heads, token pools and spec as JSON.
void save_ground_truth(const SyntheticData& data, const SyntheticSpec& spec,
                       const std::filesystem::path& path);

}  // namespace egcnn::synthetic
