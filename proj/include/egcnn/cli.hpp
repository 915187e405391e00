#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "egcnn/optim.hpp"

namespace egcnn::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,           // unexpected error
  kContractError = 2,     // bad flags, missing files, hash mismatches
  kVerificationFailed = 3,
  kTrainingError = 4,     // non-finite loss or NaN trap
};

// Entry point shared by the egcnn executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Dimensions of the randomized full-model gradient check.
struct GradCheckSetup {
  int m = 12;
  int dim = 8;
  int char_dim = 4;
  int char_width = 3;
  int char_features = 4;
  int aspects = 6;
  int channels = 8;
  int max_word_len = 6;
  std::vector<int> widths{2, 3, 4, 5};
  int domains = 3;
  int reviews = 4;
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  std::uint64_t seed = 1;
  GradCheckOptions options;
};

// One randomized instance: all parameters drawn from U[-0.5, 0.5], a random
// feasible Omega, and the complete loss (squared error + trace + l_reg)
// differentiated through gates, character encoder, convolutions and heads.
GradCheckResult full_model_grad_check(const GradCheckSetup& setup);

}  // namespace egcnn::cli
