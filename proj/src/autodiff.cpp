#include "egcnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "egcnn/errors.hpp"

namespace egcnn {

namespace {

constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape;
  for (const auto& v : vars) {
    if (v.tape != t || t == nullptr) throw ContractError("operands recorded on different tapes");
  }
  return *t;
}

bool any_requires(Tape& t, std::initializer_list<Var> vars) {
  return std::any_of(vars.begin(), vars.end(), [&](const Var& v) { return t.requires_grad(v.id); });
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Tape::Tape(TapeOptions options) : options_(options) { nodes_.reserve(256); }

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  n.op = "param";
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward,
               const char* op, bool requires_grad) {
  if (options_.check_finite && !value.all_finite()) {
    throw TrainingError(std::string("non-finite value produced by op '") + op + "'");
  }
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  n.op = op;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor* Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.has_grad ? &n.grad : nullptr;
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss was not recorded on this tape");
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                        shape_str(value(loss.id).shape()));
  }
  if (backward_done_) throw ContractError("backward already run on this tape");
  backward_done_ = true;
  grad_slot(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      const std::size_t w = p.row_width();
      for (std::size_t k = 0; k < n.grad.size(); ++k) {
        if (!p.frozen_rows.empty() && p.is_frozen_row(k / w)) continue;
        p.grad[k] += n.grad[k];
      }
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

void Tape::note_kink(double distance, std::uint64_t side) {
  if (!options_.record_kinks) return;
  // Exact ties come from identical windows (padding) that move together.
  if (distance > 0.0 && distance <= options_.kink_margin) kink_tainted_ = true;
  kink_hash_ = (kink_hash_ ^ side) * kFnvPrime;
}

// ---------------------------------------------------------------------------

Var embedding_lookup(Tape& tape, Parameter& table, std::span<const int> ids) {
  require(table.value.rank() == 2, "embedding table must be a matrix, got " +
                                       shape_str(table.value.shape()));
  const std::size_t rows = table.value.dim(0);
  const std::size_t width = table.value.dim(1);
  require(!ids.empty(), "embedding lookup with no ids");
  Tensor out({ids.size(), width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw IndexError("embedding id " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside table '" + table.name + "' of " +
                       std::to_string(rows) + " rows");
    }
    auto src = table.value.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> kept(ids.begin(), ids.end());
  Parameter* tp = &table;
  return tape.push(
      std::move(out), {},
      [tp, kept = std::move(kept), width](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        for (std::size_t i = 0; i < kept.size(); ++i) {
          const auto r = static_cast<std::size_t>(kept[i]);
          if (!tp->frozen_rows.empty() && tp->is_frozen_row(r)) continue;
          double* dst = tp->grad.data().data() + r * width;
          for (std::size_t d = 0; d < width; ++d) dst[d] += g.at(i, d);
        }
      },
      "embedding_lookup", true);
}

Var text_conv(Var input, Var filters, Var bias) {
  Tape& tape = same_tape({input, filters, bias});
  const Tensor& x = input.value();
  const Tensor& w = filters.value();
  const Tensor& b = bias.value();
  require(x.rank() == 2 && w.rank() == 3 && b.rank() == 1,
          "text_conv expects input [T x D], filters [f x D x C], bias [C]; got " +
              shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()));
  const std::size_t T = x.dim(0), D = x.dim(1);
  const std::size_t f = w.dim(0), C = w.dim(2);
  require(w.dim(1) == D, "text_conv filter width " + shape_str(w.shape()) +
                             " does not match input " + shape_str(x.shape()));
  require(b.dim(0) == C, "text_conv bias " + shape_str(b.shape()) + " does not match filters " +
                             shape_str(w.shape()));
  require(f <= T, "text_conv window " + std::to_string(f) + " longer than input " +
                      shape_str(x.shape()));
  const std::size_t out_len = T - f + 1;
  const std::size_t span = f * D;  // a window is f consecutive rows, contiguous in memory
  Tensor out({out_len, C});
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (std::size_t t = 0; t < out_len; ++t) {
    double* o = out.data().data() + t * C;
    for (std::size_t c = 0; c < C; ++c) o[c] = b[c];
    const double* win = xd + t * D;
    for (std::size_t k = 0; k < span; ++k) {
      const double v = win[k];
      if (v == 0.0) continue;
      const double* wk = wd + k * C;
      for (std::size_t c = 0; c < C; ++c) o[c] += v * wk[c];
    }
  }
  return tape.push(
      std::move(out), {input.id, filters.id, bias.id},
      [in = input.id, fi = filters.id, bi = bias.id, out_len, span, C, D](Tape& t,
                                                                         std::size_t self) {
        const Tensor& g = *t.grad(self);
        const double* gd = g.data().data();
        const double* xd = t.value(in).data().data();
        const double* wd = t.value(fi).data().data();
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_slot(bi);
          for (std::size_t s = 0; s < out_len; ++s)
            for (std::size_t c = 0; c < C; ++c) gb[c] += gd[s * C + c];
        }
        if (t.requires_grad(fi)) {
          double* gw = t.grad_slot(fi).data().data();
          for (std::size_t s = 0; s < out_len; ++s) {
            const double* win = xd + s * D;
            const double* gs = gd + s * C;
            for (std::size_t k = 0; k < span; ++k) {
              const double v = win[k];
              if (v == 0.0) continue;
              double* gwk = gw + k * C;
              for (std::size_t c = 0; c < C; ++c) gwk[c] += v * gs[c];
            }
          }
        }
        if (t.requires_grad(in)) {
          double* gx = t.grad_slot(in).data().data();
          for (std::size_t s = 0; s < out_len; ++s) {
            double* gwin = gx + s * D;
            const double* gs = gd + s * C;
            for (std::size_t k = 0; k < span; ++k) {
              const double* wk = wd + k * C;
              double acc = 0.0;
              for (std::size_t c = 0; c < C; ++c) acc += wk[c] * gs[c];
              gwin[k] += acc;
            }
          }
        }
      },
      "text_conv", any_requires(tape, {input, filters, bias}));
}

Var max_pool_over_time(Var input) {
  Tape& tape = *input.tape;
  const Tensor& x = input.value();
  require(x.rank() == 2, "max_pool_over_time expects [T x C], got " + shape_str(x.shape()));
  const std::size_t T = x.dim(0), C = x.dim(1);
  Tensor out({C});
  std::vector<std::size_t> arg(C, 0);
  for (std::size_t c = 0; c < C; ++c) {
    double best = x.at(0, c);
    double second = -INFINITY;
    for (std::size_t t = 1; t < T; ++t) {
      const double v = x.at(t, c);
      if (v > best) {
        second = best;
        best = v;
        arg[c] = t;
      } else if (v > second) {
        second = v;
      }
    }
    out[c] = best;
    if (T > 1) tape.note_kink(best - second, arg[c] + 1);
  }
  return tape.push(
      std::move(out), {input.id},
      [in = input.id, arg = std::move(arg), C](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& gx = t.grad_slot(in);
        for (std::size_t c = 0; c < C; ++c) gx.at(arg[c], c) += g[c];
      },
      "max_pool_over_time", tape.requires_grad(input.id));
}

Var relu(Var x) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) {
    tape.note_kink(std::abs(v), v > 0.0 ? 2 : 3);
    if (v <= 0.0) v = 0.0;
  }
  return tape.push(
      std::move(out), {x.id},
      [in = x.id](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        const Tensor& xv = t.value(in);
        Tensor& gx = t.grad_slot(in);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xv[i] > 0.0) gx[i] += g[i];
      },
      "relu", tape.requires_grad(x.id));
}

Var sigmoid(Var x) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  return tape.push(
      std::move(out), {x.id},
      [in = x.id](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gx = t.grad_slot(in);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      },
      "sigmoid", tape.requires_grad(x.id));
}

Var dense(Var x, Var weight, Var bias) {
  Tape& tape = same_tape({x, weight, bias});
  const Tensor& xv = x.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  require(xv.rank() == 1 && w.rank() == 2 && b.rank() == 1 && w.dim(0) == xv.dim(0) &&
              w.dim(1) == b.dim(0),
          "dense shape mismatch: x " + shape_str(xv.shape()) + ", weight " +
              shape_str(w.shape()) + ", bias " + shape_str(b.shape()));
  const std::size_t n = w.dim(0), p = w.dim(1);
  Tensor out = b;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) out[j] += xv[i] * w.at(i, j);
  return tape.push(
      std::move(out), {x.id, weight.id, bias.id},
      [xi = x.id, wi = weight.id, bi = bias.id, n, p](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        const Tensor& xv = t.value(xi);
        const Tensor& w = t.value(wi);
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_slot(bi);
          for (std::size_t j = 0; j < p; ++j) gb[j] += g[j];
        }
        if (t.requires_grad(wi)) {
          Tensor& gw = t.grad_slot(wi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) gw.at(i, j) += xv[i] * g[j];
        }
        if (t.requires_grad(xi)) {
          Tensor& gx = t.grad_slot(xi);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) gx[i] += w.at(i, j) * g[j];
        }
      },
      "dense", any_requires(tape, {x, weight, bias}));
}

Var row_affine(Var x, Var w, Var b) {
  Tape& tape = same_tape({x, w, b});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require(xv.rank() == 2 && wv.rank() == 1 && wv.dim(0) == xv.dim(1) && b.value().size() == 1,
          "row_affine shape mismatch: x " + shape_str(xv.shape()) + ", w " +
              shape_str(wv.shape()) + ", b " + shape_str(b.value().shape()));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out({m}, b.value()[0]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += xv.at(i, j) * wv[j];
  return tape.push(
      std::move(out), {x.id, w.id, b.id},
      [xi = x.id, wi = w.id, bi = b.id, m, n](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        const Tensor& xv = t.value(xi);
        const Tensor& wv = t.value(wi);
        if (t.requires_grad(bi)) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += g[i];
          t.grad_slot(bi)[0] += s;
        }
        if (t.requires_grad(wi)) {
          Tensor& gw = t.grad_slot(wi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gw[j] += xv.at(i, j) * g[i];
        }
        if (t.requires_grad(xi)) {
          Tensor& gx = t.grad_slot(xi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += wv[j] * g[i];
        }
      },
      "row_affine", any_requires(tape, {x, w, b}));
}

Var concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat of zero tensors");
  Tape& tape = *parts[0].tape;
  std::vector<double> data;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.tape != &tape) throw ContractError("operands recorded on different tapes");
    const Tensor& v = p.value();
    require(v.rank() == 1, "concat expects vectors, got " + shape_str(v.shape()));
    offsets.push_back(data.size());
    data.insert(data.end(), v.data().begin(), v.data().end());
    ids.push_back(p.id);
    rg = rg || tape.requires_grad(p.id);
  }
  const std::size_t n = data.size();
  return tape.push(
      Tensor({n}, std::move(data)), ids,
      [ids, offsets](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& gk = t.grad_slot(ids[k]);
          for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
        }
      },
      "concat", rg);
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of zero tensors");
  Tape& tape = *parts[0].tape;
  const std::size_t rows = parts[0].value().dim(0);
  std::vector<std::size_t> ids, widths, offsets;
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.tape != &tape) throw ContractError("operands recorded on different tapes");
    const Tensor& v = p.value();
    require(v.rank() == 2 && v.dim(0) == rows,
            "concat_cols expects matrices with " + std::to_string(rows) + " rows, got " +
                shape_str(v.shape()));
    ids.push_back(p.id);
    widths.push_back(v.dim(1));
    offsets.push_back(total);
    total += v.dim(1);
    rg = rg || tape.requires_grad(p.id);
  }
  Tensor out({rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out.at(i, offsets[k] + j) = v.at(i, j);
  }
  return tape.push(
      std::move(out), ids,
      [ids, widths, offsets, rows](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& gk = t.grad_slot(ids[k]);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) gk.at(i, j) += g.at(i, offsets[k] + j);
        }
      },
      "concat_cols", rg);
}

Var stack_rows(std::span<const Var> rows) {
  require(!rows.empty(), "stack_rows of zero tensors");
  Tape& tape = *rows[0].tape;
  const std::size_t width = rows[0].value().size();
  std::vector<double> data;
  data.reserve(rows.size() * width);
  std::vector<std::size_t> ids;
  bool rg = false;
  for (const auto& r : rows) {
    if (r.tape != &tape) throw ContractError("operands recorded on different tapes");
    const Tensor& v = r.value();
    require(v.rank() == 1 && v.dim(0) == width,
            "stack_rows expects vectors of length " + std::to_string(width) + ", got " +
                shape_str(v.shape()));
    data.insert(data.end(), v.data().begin(), v.data().end());
    ids.push_back(r.id);
    rg = rg || tape.requires_grad(r.id);
  }
  return tape.push(
      Tensor({rows.size(), width}, std::move(data)), ids,
      [ids, width](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& gk = t.grad_slot(ids[k]);
          for (std::size_t j = 0; j < width; ++j) gk[j] += g.at(k, j);
        }
      },
      "stack_rows", rg);
}

Var scale_rows(Var x, Var gates) {
  Tape& tape = same_tape({x, gates});
  const Tensor& xv = x.value();
  const Tensor& gv = gates.value();
  require(xv.rank() == 2 && gv.rank() == 1 && gv.dim(0) == xv.dim(0),
          "scale_rows shape mismatch: x " + shape_str(xv.shape()) + ", gates " +
              shape_str(gv.shape()));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) *= gv[i];
  return tape.push(
      std::move(out), {x.id, gates.id},
      [xi = x.id, gi = gates.id, m, n](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        const Tensor& xv = t.value(xi);
        const Tensor& gv = t.value(gi);
        if (t.requires_grad(gi)) {
          Tensor& gg = t.grad_slot(gi);
          for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * xv.at(i, j);
            gg[i] += s;
          }
        }
        if (t.requires_grad(xi)) {
          Tensor& gx = t.grad_slot(xi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += g.at(i, j) * gv[i];
        }
      },
      "scale_rows", any_requires(tape, {x, gates}));
}

Var reshape(Var x, Shape shape) {
  Tape& tape = *x.tape;
  require(shape_size(shape) == x.value().size(),
          "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  return tape.push(
      Tensor(std::move(shape), x.value().storage()), {x.id},
      [xi = x.id](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& gx = t.grad_slot(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape", tape.requires_grad(x.id));
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(),
          "add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape.push(
      std::move(out), {a.id, b.id},
      [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        for (auto id : {ai, bi}) {
          if (!t.requires_grad(id)) continue;
          Tensor& gi = t.grad_slot(id);
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
      },
      "add", any_requires(tape, {a, b}));
}

Var scale(Var x, double factor) {
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return tape.push(
      std::move(out), {x.id},
      [xi = x.id, factor](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& gx = t.grad_slot(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
      },
      "scale", tape.requires_grad(x.id));
}

Var dot(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.value().rank() == 1 && a.shape() == b.shape(),
          "dot shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
  return tape.push(
      Tensor::scalar(s), {a.id, b.id},
      [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        const Tensor& av = t.value(ai);
        const Tensor& bv = t.value(bi);
        if (t.requires_grad(ai)) {
          Tensor& ga = t.grad_slot(ai);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.grad_slot(bi);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
        }
      },
      "dot", any_requires(tape, {a, b}));
}

Var column(Var m, std::size_t k) {
  Tape& tape = *m.tape;
  const Tensor& mv = m.value();
  require(mv.rank() == 2, "column expects a matrix, got " + shape_str(mv.shape()));
  if (k >= mv.dim(1)) {
    throw IndexError("column " + std::to_string(k) + " outside matrix " + shape_str(mv.shape()));
  }
  const std::size_t H = mv.dim(0);
  Tensor out({H});
  for (std::size_t i = 0; i < H; ++i) out[i] = mv.at(i, k);
  return tape.push(
      std::move(out), {m.id},
      [mi = m.id, k, H](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(self);
        Tensor& gm = t.grad_slot(mi);
        for (std::size_t i = 0; i < H; ++i) gm.at(i, k) += g[i];
      },
      "column", tape.requires_grad(m.id));
}

Var sum(std::span<const Var> scalars) {
  require(!scalars.empty(), "sum of zero terms");
  Tape& tape = *scalars[0].tape;
  double s = 0.0;
  std::vector<std::size_t> ids;
  bool rg = false;
  for (const auto& v : scalars) {
    if (v.tape != &tape) throw ContractError("operands recorded on different tapes");
    require(v.value().size() == 1, "sum expects scalars, got " + shape_str(v.shape()));
    s += v.value()[0];
    ids.push_back(v.id);
    rg = rg || tape.requires_grad(v.id);
  }
  return tape.push(
      Tensor::scalar(s), ids,
      [ids](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        for (auto id : ids)
          if (t.requires_grad(id)) t.grad_slot(id)[0] += g;
      },
      "sum", rg);
}

Var mse(Var pred, double target) {
  Tape& tape = *pred.tape;
  require(pred.value().size() == 1, "mse expects a scalar prediction, got " +
                                        shape_str(pred.shape()));
  const double diff = pred.value()[0] - target;
  return tape.push(
      Tensor::scalar(diff * diff), {pred.id},
      [pi = pred.id, diff](Tape& t, std::size_t self) {
        t.grad_slot(pi)[0] += 2.0 * diff * (*t.grad(self))[0];
      },
      "mse", tape.requires_grad(pred.id));
}

Var sum_squares(Tape& tape, Parameter& p) {
  Var leaf = tape.param(p);
  const Tensor& v = p.value;
  const std::size_t w = p.row_width();
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!p.frozen_rows.empty() && p.is_frozen_row(k / w)) continue;
    s += v[k] * v[k];
  }
  return tape.push(
      Tensor::scalar(s), {leaf.id},
      [li = leaf.id](Tape& t, std::size_t self) {
        const double g = (*t.grad(self))[0];
        const Tensor& v = t.value(li);
        Tensor& gl = t.grad_slot(li);
        for (std::size_t k = 0; k < v.size(); ++k) gl[k] += 2.0 * g * v[k];
      },
      "sum_squares", true);
}

}  // namespace egcnn
