#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egcnn/tensor.hpp"

namespace egcnn::aspect {

struct LdaConfig {
  int aspects = 100;
  double alpha = 0.0;  // <= 0 selects 50 / aspects
  double beta = 0.01;
  int iterations = 200;
  std::uint64_t seed = 1;

  double resolved_alpha() const { return alpha > 0.0 ? alpha : 50.0 / aspects; }
};

struct LdaFit {
  Tensor phi;                           // aspect-word distribution [A x V]
  std::vector<std::int64_t> topic_word;  // final count table [A x V]
  std::vector<std::int64_t> topic_total;
};

// Collapsed Gibbs LDA over word-id documents. PAD and UNK ids are not sampled.
// phi[a][v] = (n(a,v) + beta) / (n(a) + V * beta).
LdaFit fit_aspects(const std::vector<std::vector<int>>& docs, std::size_t vocab_size,
                   const LdaConfig& config);

// Row-normalized transpose of phi [A x V] -> [V x A]; all-zero word columns map
// to the uniform row.
Tensor word_aspect_rep(const Tensor& phi);

// Frozen per-word aspect distributions (the topic channel). PAD and UNK rows
// are uniform.
class AspectTable {
 public:
  AspectTable() = default;
  AspectTable(Tensor rows, std::string vocab_hash);

  static AspectTable from_phi(const Tensor& phi, std::string vocab_hash);
  // Every row 1/A; used when no topic model is supplied.
  static AspectTable uniform(std::size_t vocab_size, std::size_t aspects, std::string vocab_hash);

  std::span<const double> lookup(int word_id) const;
  std::size_t aspects() const { return rows_.dim(1); }
  std::size_t vocab_size() const { return rows_.dim(0); }
  const Tensor& rows() const { return rows_; }
  const std::string& vocab_hash() const { return vocab_hash_; }
  std::string hash() const;

  void save(const std::filesystem::path& path, const std::string& run_config = "{}") const;
  static AspectTable load(const std::filesystem::path& path);

 private:
  Tensor rows_;
  std::string vocab_hash_;
};

}  // namespace egcnn::aspect
