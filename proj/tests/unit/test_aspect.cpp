#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "egcnn/aspect.hpp"
#include "egcnn/errors.hpp"
#include "egcnn/text.hpp"
#include "json.hpp"

using namespace egcnn;
using namespace egcnn::aspect;
namespace fs = std::filesystem;

namespace {

double row_sum(std::span<const double> r) {
  double s = 0;
  for (double v : r) s += v;
  return s;
}

// Two topics over disjoint halves of ids [2, 2 + 2h): every document draws
// all of its words from one half.
std::vector<std::vector<int>> two_topic_corpus(int half, int docs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> w(0, half - 1);
  std::vector<std::vector<int>> out;
  for (int d = 0; d < docs; ++d) {
    const int base = 2 + (d % 2) * half;
    std::vector<int> doc;
    for (int i = 0; i < 30; ++i) doc.push_back(base + w(rng));
    out.push_back(doc);
  }
  return out;
}

}  // namespace

TEST(FitAspects, SingleTopicSingleWord) {
  LdaConfig cfg;
  cfg.aspects = 1;
  cfg.iterations = 5;
  const auto fit = fit_aspects({{2, 2}}, 3, cfg);
  ASSERT_EQ(fit.phi.shape(), (Shape{1, 3}));
  EXPECT_NEAR(row_sum(fit.phi.row(0)), 1.0, 1e-12);
  // (2 + beta) / (2 + 3 beta) on x, beta / (2 + 3 beta) elsewhere.
  EXPECT_NEAR(fit.phi.at(0, 2), 2.01 / 2.03, 1e-12);
  EXPECT_NEAR(fit.phi.at(0, 0), 0.01 / 2.03, 1e-12);
}

TEST(FitAspects, RowsSumToOne) {
  LdaConfig cfg;
  cfg.aspects = 5;
  cfg.iterations = 10;
  const auto fit = fit_aspects(two_topic_corpus(10, 20, 4), 22, cfg);
  for (std::size_t a = 0; a < 5; ++a) EXPECT_NEAR(row_sum(fit.phi.row(a)), 1.0, 1e-9);
}

TEST(FitAspects, RecoversDisjointTopics) {
  LdaConfig cfg;
  cfg.aspects = 2;
  cfg.alpha = 0.1;
  cfg.iterations = 100;
  cfg.seed = 7;
  const int half = 10;
  const auto fit = fit_aspects(two_topic_corpus(half, 40, 1), 2 + 2 * half, cfg);
  for (std::size_t a = 0; a < 2; ++a) {
    double lo = 0, hi = 0;
    for (int v = 2; v < 2 + half; ++v) lo += fit.phi.at(a, static_cast<std::size_t>(v));
    for (int v = 2 + half; v < 2 + 2 * half; ++v) hi += fit.phi.at(a, static_cast<std::size_t>(v));
    EXPECT_GE(std::max(lo, hi), 0.8) << "topic " << a;
  }

  // A word from one half puts most of its aspect mass on the matching topic.
  const AspectTable table = AspectTable::from_phi(fit.phi, "h");
  const std::size_t topic_of_low = fit.phi.at(0, 2) > fit.phi.at(1, 2) ? 0 : 1;
  EXPECT_GE(table.lookup(3)[topic_of_low], 0.8);
  EXPECT_GE(table.lookup(2 + half + 1)[1 - topic_of_low], 0.8);
}

TEST(FitAspects, Deterministic) {
  LdaConfig cfg;
  cfg.aspects = 3;
  cfg.iterations = 15;
  const auto docs = two_topic_corpus(6, 12, 2);
  EXPECT_EQ(fit_aspects(docs, 14, cfg).phi, fit_aspects(docs, 14, cfg).phi);
}

TEST(FitAspects, EmptyCorpusIsContractError) {
  EXPECT_THROW(fit_aspects({{0, 1, 0}}, 4, LdaConfig{}), ContractError);
  EXPECT_THROW(fit_aspects({{9}}, 4, LdaConfig{}), IndexError);
}

TEST(WordAspectRep, Examples) {
  EXPECT_EQ(word_aspect_rep(Tensor::matrix({{0.5, 0.5}})), Tensor::matrix({{1}, {1}}));

  // Column (0.2, 0.6) of phi normalizes to (0.25, 0.75).
  const Tensor rep = word_aspect_rep(Tensor::matrix({{0.2, 0.3}, {0.6, 0.0}}));
  EXPECT_NEAR(rep.at(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(rep.at(0, 1), 0.75, 1e-15);

  const Tensor zero = word_aspect_rep(Tensor::matrix({{0.0, 1.0}, {0.0, 0.0}, {0.0, 0.0}}));
  for (std::size_t a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(zero.at(0, a), 1.0 / 3.0);
}

TEST(AspectTableLookup, RowsAreDistributionsAndPadIsUniform) {
  LdaConfig cfg;
  cfg.aspects = 4;
  cfg.iterations = 10;
  const auto fit = fit_aspects(two_topic_corpus(5, 10, 3), 12, cfg);
  const auto table = AspectTable::from_phi(fit.phi, "h");
  for (int id = 0; id < 12; ++id) EXPECT_NEAR(row_sum(table.lookup(id)), 1.0, 1e-12);
  for (double v : table.lookup(text::kPad)) EXPECT_DOUBLE_EQ(v, 0.25);
  for (double v : table.lookup(text::kUnk)) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_THROW(table.lookup(12), IndexError);
  EXPECT_THROW(table.lookup(-1), IndexError);
}

TEST(AspectTableFile, RoundTripAndTamperDetection) {
  const fs::path p = fs::temp_directory_path() / "egcnn_aspect_roundtrip.json";
  const auto table = AspectTable::from_phi(Tensor::matrix({{0.1, 0.2, 0.7}, {0.5, 0.3, 0.2}}), "vh");
  table.save(p);
  const auto back = AspectTable::load(p);
  EXPECT_EQ(back.rows(), table.rows());
  EXPECT_EQ(back.vocab_hash(), "vh");

  nlohmann::json j;
  {
    std::ifstream in(p);
    in >> j;
  }
  j["rows"][4] = j["rows"][4].get<double>() + 0.01;  // word id 2
  {
    std::ofstream out(p);
    out << j.dump();
  }
  EXPECT_THROW(AspectTable::load(p), FormatError);
  fs::remove(p);
}
