#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "egcnn/cli.hpp"
#include "json.hpp"

using namespace egcnn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("egcnn_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small synthetic dataset plus aspect table.
  void prepare() {
    ASSERT_EQ(run({"gen-synthetic", "--num-domains", "2", "--vocab", "20", "--signal", "4",
                   "--train-docs", "12", "--test-docs", "4", "--min-len", "3", "--max-len", "5",
                   "--out", path("syn.json")})
                  .code,
              0);
    ASSERT_EQ(run({"fit-aspects", "--data", path("syn.json"), "--aspects", "3", "--lda-iters", "5",
                   "--out", path("phi.json")})
                  .code,
              0);
  }

  std::vector<std::string> train_args(const std::string& out, const std::string& epochs) const {
    return {"train", "--data", path("syn.json"), "--phi", path("phi.json"), "--dim", "4",
            "--char-dim", "3", "--char-features", "3", "--channels", "4", "--widths", "2,3",
            "--epochs", epochs, "--out", out};
  }

  fs::path dir_;
};

}  // namespace

TEST(CliBasics, HelpAndUnknownFlags) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"train", "--bogus"}).code, cli::kContractError);
  EXPECT_EQ(run({"evaluate", "--checkpoint", "/nonexistent/x", "--data", "/nonexistent/y", "--phi",
                 "/nonexistent/z"})
                .code,
            cli::kContractError);
}

TEST_F(CliTest, IngestReportsCountsWithSeparators) {
  {
    std::ofstream f(path("r.json"));
    for (int i = 0; i < 1234; ++i) {
      f << R"({"reviewText": "review )" << i << R"( works", "helpful": [4, 6]})" << "\n";
    }
  }
  {
    std::ofstream f(path("empty.json"));
  }
  const auto r = run({"ingest", "--data", path("r.json"), "--data", path("empty.json"), "--domains",
                      "Full,Empty", "--out", path("ds.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Full: kept 1,234 / 1,234"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("Empty: no reviews kept"), std::string::npos) << r.err;

  // Existing outputs are not replaced without --force.
  const auto again = run({"ingest", "--data", path("r.json"), "--out", path("ds.json")});
  EXPECT_EQ(again.code, cli::kContractError);
  EXPECT_EQ(run({"ingest", "--data", path("r.json"), "--out", path("ds.json"), "--force"}).code, 0);
}

TEST_F(CliTest, GenSyntheticReportsHeadCosines) {
  const auto r = run({"gen-synthetic", "--num-domains", "3", "--related", "1:2", "--train-docs", "4",
                      "--out", path("syn.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto at = r.out.find("cos(h1, h2) = ");
  ASSERT_NE(at, std::string::npos) << r.out;
  EXPECT_GE(std::stod(r.out.substr(at + 14, 6)), 0.95);
  EXPECT_NE(r.out.find("cos(h1, h3) = 0.0000"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("syn.json.truth.json")));
}

TEST_F(CliTest, UntrainedGatesAreHalf) {
  prepare();
  ASSERT_EQ(run(train_args(path("m.ckpt"), "0")).code, 0);
  const auto r = run({"inspect-gates", "--checkpoint", path("m.ckpt"), "--data", path("syn.json"),
                      "--phi", path("phi.json"), "--split", "test", "--index", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(line.substr(line.find('\t') + 1), "0.500000") << line;
    ++n;
  }
  EXPECT_GT(n, 0);
}

TEST_F(CliTest, TrainEvaluatePredictEmbedRunConfig) {
  prepare();
  const auto tr = run(train_args(path("m.ckpt"), "2"));
  ASSERT_EQ(tr.code, 0) << tr.err;

  std::ifstream log(path("m.ckpt.log.jsonl"));
  std::string first;
  std::getline(log, first);
  const auto head = nlohmann::json::parse(first);
  EXPECT_EQ(head.at("run_config").at("command"), "train");
  EXPECT_EQ(head.at("run_config").at("options").at("epochs"), "2");
  int epochs = 0;
  for (std::string line; std::getline(log, line);) ++epochs;
  EXPECT_EQ(epochs, 2);

  const auto ev = run({"evaluate", "--checkpoint", path("m.ckpt"), "--data", path("syn.json"),
                       "--phi", path("phi.json"), "--split", "test", "--out", path("eval.json")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  std::ifstream ef(path("eval.json"));
  const auto report = nlohmann::json::parse(ef);
  EXPECT_TRUE(report.contains("run_config"));
  EXPECT_TRUE(report.contains("checkpoint_digest"));

  const auto pr = run({"predict", "--checkpoint", path("m.ckpt"), "--data", path("syn.json"),
                       "--phi", path("phi.json"), "--text", "anything at all", "--domain", "2"});
  ASSERT_EQ(pr.code, 0) << pr.err;
  EXPECT_FALSE(pr.out.empty());
}

TEST_F(CliTest, MismatchedAspectTableIsRefused) {
  prepare();
  ASSERT_EQ(run({"gen-synthetic", "--num-domains", "2", "--vocab", "30", "--train-docs", "6",
                 "--seed", "9", "--out", path("other.json")})
                .code,
            0);
  ASSERT_EQ(run({"fit-aspects", "--data", path("other.json"), "--aspects", "3", "--lda-iters", "2",
                 "--out", path("other_phi.json")})
                .code,
            0);
  auto args = train_args(path("m.ckpt"), "1");
  args[4] = path("other_phi.json");
  const auto r = run(args);
  EXPECT_EQ(r.code, cli::kContractError);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(CliGradCheck, SmallInstancePasses) {
  const auto r = run({"grad-check", "--instances", "1", "--m", "8", "--dim", "4", "--channels", "3",
                      "--widths", "2,3"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("ok"), std::string::npos) << r.out;
}
