#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egcnn/errors.hpp"
#include "egcnn/multidomain.hpp"

namespace egcnn::eval {

// Raised when a correlation is undefined (constant input, fewer than 2 points).
class UndefinedCorrelation : public ContractError {
 public:
  using ContractError::ContractError;
};

// Population-form Pearson r, clamped to [-1, 1].
double pearson(std::span<const double> pred, std::span<const double> truth);
// Pearson over average ranks.
double spearman(std::span<const double> pred, std::span<const double> truth);

enum class Correlation { pearson, spearman };
const char* correlation_name(Correlation c);

struct DomainScore {
  std::string domain;
  std::size_t n = 0;
  std::optional<double> r;  // empty when undefined
};

struct EvalReport {
  std::string mode;
  std::string split;
  std::string metric;
  std::string config_digest;
  std::string checkpoint_digest;
  std::vector<DomainScore> rows;

  // Aligned text table.
  std::string table() const;
  // One JSON object per domain: {domain, n, pearson|spearman, mode}.
  std::string records_jsonl() const;
};

// Predictions for a set of reviews, in order.
std::vector<double> predict_all(multidomain::Model& model, const aspect::AspectTable& aspects,
                                std::span<const text::EncodedReview> reviews);

// Per-domain correlation of predictions (U + W_k, or U for single-head modes)
// against targets on one split. Target-only models report their domain only.
EvalReport evaluate(multidomain::Model& model, const text::Dataset& ds,
                    const aspect::AspectTable& aspects, text::Split split,
                    Correlation metric = Correlation::pearson,
                    const std::string& checkpoint_digest = "");

}  // namespace egcnn::eval
