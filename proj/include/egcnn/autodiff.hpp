#pragma once

// Tape-based reverse-mode automatic differentiation over dense Tensors.
//
// Every op appends one node to the Tape. Tape::backward walks the nodes in
// exact reverse order, accumulating adjoints; leaves created with
// Tape::param() flush their adjoint into Parameter::grad. Embedding lookups
// scatter straight into the table's gradient so large tables never need a
// dense per-step adjoint.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "egcnn/tensor.hpp"

namespace egcnn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

struct TapeOptions {
  // Throw TrainingError as soon as any op produces NaN/Inf.
  bool check_finite = false;
  // Track which side of each relu/max kink the forward pass landed on; used
  // by grad_check to skip coordinates whose perturbation crosses a kink.
  bool record_kinks = false;
  double kink_margin = 1e-6;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(TapeOptions options = {});
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var param(Parameter& p);
  Var constant(Tensor value);
  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward,
           const char* op, bool requires_grad);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adjoint of node id; null when nothing flowed into it.
  const Tensor* grad(std::size_t id) const;
  // Mutable adjoint, allocated (zeros) on first touch.
  Tensor& grad_slot(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable Parameter.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const TapeOptions& options() const { return options_; }

  void note_kink(double distance, std::uint64_t side);
  std::uint64_t kink_signature() const { return kink_hash_; }
  bool kink_tainted() const { return kink_tainted_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    const char* op = "";
  };

  TapeOptions options_;
  std::vector<Node> nodes_;
  std::uint64_t kink_hash_ = 1469598103934665603ULL;
  bool kink_tainted_ = false;
  bool backward_done_ = false;
};

// ---- operations -----------------------------------------------------------

// Rows of `table` selected by ids -> [ids.size() x D]. Adjoints scatter-add
// into table.grad; rows listed in table.frozen_rows are skipped.
Var embedding_lookup(Tape& tape, Parameter& table, std::span<const int> ids);

// Full-width convolution sliding over rows.
// input [T x Din], filters [f x Din x C], bias [C] -> [(T-f+1) x C].
Var text_conv(Var input, Var filters, Var bias);

// Per-column maximum over rows. [T x C] -> [C]. Ties route to the lowest row.
Var max_pool_over_time(Var input);

Var relu(Var x);
Var sigmoid(Var x);

// x [n], weight [n x p], bias [p] -> [p]
Var dense(Var x, Var weight, Var bias);
// X [m x n], w [n], b [1] -> [m] with out[i] = X[i].w + b
Var row_affine(Var x, Var w, Var b);

// 1-D concatenation of vectors.
Var concat(std::span<const Var> parts);
// Horizontal concatenation of matrices sharing a row count.
Var concat_cols(std::span<const Var> parts);
// Stack equal-length vectors as rows of a matrix.
Var stack_rows(std::span<const Var> rows);

// X [m x D], gates [m] -> row i scaled by gates[i].
Var scale_rows(Var x, Var gates);

// Same data under a new shape of equal size.
Var reshape(Var x, Shape shape);

Var add(Var a, Var b);
Var scale(Var x, double factor);
Var dot(Var a, Var b);
// Column k of a [H x K] matrix -> [H].
Var column(Var m, std::size_t k);
// Sum of scalar nodes in the given order.
Var sum(std::span<const Var> scalars);
Var mse(Var pred, double target);
// Sum of squared entries, skipping the parameter's frozen rows.
Var sum_squares(Tape& tape, Parameter& p);

}  // namespace egcnn
