#include "egcnn/optim.hpp"

#include <algorithm>
#include <cmath>

#include "egcnn/errors.hpp"

namespace egcnn {

void AdaGrad::step(std::span<Parameter* const> params) const {
  for (Parameter* p : params) {
    auto val = p->value.data();
    auto g = p->grad.data();
    auto acc = p->accum.data();
    for (std::size_t i = 0; i < val.size(); ++i) {
      if (g[i] == 0.0) continue;
      acc[i] += g[i] * g[i];
      val[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
    }
    p->zero_grad();
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

namespace {

struct Probe {
  double loss;
  std::uint64_t signature;
  bool tainted;
};

Probe evaluate(const LossBuilder& loss_fn, double margin) {
  Tape tape(TapeOptions{.check_finite = false, .record_kinks = true, .kink_margin = margin});
  Var loss = loss_fn(tape);
  return {loss.value().item(), tape.kink_signature(), tape.kink_tainted()};
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss_fn, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (options.eps <= 0.0) throw ContractError("grad_check eps must be positive");
  zero_grads(params);
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);
  zero_grads(params);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    const std::size_t w = p.row_width();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      if (!p.frozen_rows.empty() && p.is_frozen_row(k / w)) continue;
      const double orig = p.value[k];
      p.value[k] = orig + options.eps;
      const Probe plus = evaluate(loss_fn, options.kink_margin);
      p.value[k] = orig - options.eps;
      const Probe minus = evaluate(loss_fn, options.kink_margin);
      p.value[k] = orig;
      if (plus.tainted || minus.tainted || plus.signature != minus.signature) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * options.eps);
      const double a = analytic[pi][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = p.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return result;
}

}  // namespace egcnn
