#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "egcnn/autodiff.hpp"

namespace egcnn {

// AdaGrad: acc += g^2; value -= lr * g / (sqrt(acc) + eps); grad cleared.
struct AdaGrad {
  double lr = 0.08;
  double eps = 1e-8;

  void step(std::span<Parameter* const> params) const;
};

void zero_grads(std::span<Parameter* const> params);

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates whose +/-eps evaluations cross (or land within this distance
  // of) a relu or max-pool kink are excluded.
  double kink_margin = 1e-6;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst;  // "<param>[index]" of the worst coordinate
};

// Builds the loss on the supplied tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

// Compares reverse-mode gradients against central differences
// (f(x+eps) - f(x-eps)) / 2eps on every non-frozen coordinate of params.
GradCheckResult grad_check(const LossBuilder& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace egcnn
