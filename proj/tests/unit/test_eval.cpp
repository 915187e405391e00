#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "egcnn/eval.hpp"
#include "fixtures.hpp"
#include "json.hpp"

using namespace egcnn;
using namespace egcnn::eval;
using egcnn::testing_support::make_task;
using egcnn::testing_support::small_config;

namespace {

// Direct evaluation of the population formula.
double pearson_by_definition(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST(Pearson, PerfectAndInverse) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, std::vector<double>{4, 3, 2, 1}), -1.0, 1e-12);
}

TEST(Pearson, HandValue) {
  const std::vector<double> a{1, 2, 3}, b{1, 2, 4};
  EXPECT_NEAR(pearson(a, b), 9.0 / std::sqrt(84.0), 1e-12);
  EXPECT_NEAR(pearson(a, b), pearson_by_definition(a, b), 1e-12);
}

TEST(Pearson, MatchesDefinitionOnRandomData) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(25), b(25);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = n(rng);
      b[i] = 0.5 * a[i] + n(rng);
    }
    EXPECT_NEAR(pearson(a, b), pearson_by_definition(a, b), 1e-12);
  }
}

TEST(Pearson, AffineInvariance) {
  const std::vector<double> a{0.1, 0.7, 0.3, 0.9, 0.2}, b{0.2, 0.5, 0.4, 1.0, 0.1};
  std::vector<double> c;
  for (double v : a) c.push_back(3.0 * v - 7.0);
  EXPECT_NEAR(pearson(a, b), pearson(c, b), 1e-12);
}

TEST(Pearson, UndefinedInputs) {
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), UndefinedCorrelation);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{2}), UndefinedCorrelation);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{2}), ShapeError);
}

TEST(Spearman, AverageRanksForTies) {
  EXPECT_NEAR(spearman(std::vector<double>{1, 10, 100}, std::vector<double>{3, 4, 9}), 1.0, 1e-12);
  // Ranks of (1, 2, 2, 3) are (1, 2.5, 2.5, 4).
  const std::vector<double> a{1, 2, 2, 3}, b{1, 2, 3, 4};
  EXPECT_NEAR(spearman(a, b), pearson_by_definition({1, 2.5, 2.5, 4}, {1, 2, 3, 4}), 1e-12);
}

TEST(Evaluate, MemorizedSplitCorrelatesAlmostPerfectly) {
  synthetic::SyntheticSpec spec;
  spec.domains = 1;
  spec.vocab_size = 20;
  spec.signal_tokens = 4;
  spec.min_len = 3;
  spec.max_len = 5;
  spec.train_docs = {10};
  spec.seed = 2;
  auto t = make_task(spec);
  auto cfg = small_config(t);
  cfg.dim = 8;
  cfg.channels = 8;
  auto md = multidomain::init_model(cfg, t.ds, t.aspects, multidomain::Mode::fully_shared, -1, 2);
  multidomain::TrainConfig tc;
  tc.epochs = 300;
  tc.batch = 10;
  tc.loss.lambda2 = 0.0;
  multidomain::train(md, t.ds, t.aspects, tc);
  const auto rep = evaluate(md, t.ds, t.aspects, text::Split::train);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].n, 10u);
  ASSERT_TRUE(rep.rows[0].r.has_value());
  EXPECT_GT(*rep.rows[0].r, 0.99);
}

TEST(Evaluate, OneRowPerDomainAndFormats) {
  synthetic::SyntheticSpec spec;
  spec.domains = 2;
  spec.vocab_size = 20;
  spec.signal_tokens = 4;
  spec.min_len = 3;
  spec.max_len = 5;
  spec.train_docs = {6};
  spec.test_docs = {5, 1};
  auto t = make_task(spec);
  auto md = multidomain::init_model(small_config(t), t.ds, t.aspects, multidomain::Mode::full, -1, 1);
  const auto rep = evaluate(md, t.ds, t.aspects, text::Split::test, Correlation::spearman, "abc");
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[0].n, 5u);
  EXPECT_FALSE(rep.rows[1].r.has_value());  // single review
  EXPECT_NE(rep.table().find("n/a"), std::string::npos);
  EXPECT_NE(rep.table().find("checkpoint=abc"), std::string::npos);

  std::istringstream lines(rep.records_jsonl());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("spearman"));
    EXPECT_EQ(j.at("mode"), "full");
    ++count;
  }
  EXPECT_EQ(count, 2);

  auto target = multidomain::init_model(small_config(t), t.ds, t.aspects,
                                        multidomain::Mode::target_only, 1, 1);
  const auto single = evaluate(target, t.ds, t.aspects, text::Split::test);
  ASSERT_EQ(single.rows.size(), 1u);
  EXPECT_EQ(single.rows[0].domain, t.ds.domains[1]);
}
