#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied during one forward pass. Values are
// immutable once recorded; backward() walks the entries once, in reverse
// order, accumulating gradients into every node that requires them. All
// reductions run left to right in index order so repeated passes are
// bitwise identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusenet/error.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet::ad {

/// Handle to a tensor recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

enum class OpKind {
  matmul,
  add,
  add_bias,
  scale,
  leaky_relu,
  relu,
  elu,
  sigmoid,
  gather_rows,
  segment_softmax,
  edge_weighted_sum,
  sum,
  concat_cols,
  slice_rows,
  bce_loss,
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::add_bias: return "add_bias";
    case OpKind::scale: return "scale";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::relu: return "relu";
    case OpKind::elu: return "elu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::segment_softmax: return "segment_softmax";
    case OpKind::edge_weighted_sum: return "edge_weighted_sum";
    case OpKind::sum: return "sum";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::bce_loss: return "bce_loss";
  }
  return "unknown";
}

class Tape;

/// One recorded operation. `saved` holds forward intermediates the
/// backward rule needs (e.g. softmax outputs, activation masks).
struct Entry {
  using BackwardFn = std::function<void(Tape&, const Entry&)>;

  OpKind op;
  std::vector<std::size_t> inputs;
  std::size_t output;
  std::vector<double> saved;
  BackwardFn backward;
};

class Tape {
 public:
  /// Registers a leaf; gradient tracking follows t.requires_grad().
  Var leaf(Tensor t) {
    t.clear_grad();
    nodes_.push_back(std::move(t));
    return Var{nodes_.size() - 1};
  }

  Var constant(Tensor t) {
    t.set_requires_grad(false);
    return leaf(std::move(t));
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad(); }

  /// Gradient of the last backward() target with respect to v.
  const std::vector<double>& grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (!n.has_grad()) {
      throw ContractError("no gradient recorded for tape node " + std::to_string(v.id));
    }
    return n.grad();
  }

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  Var record(OpKind op, std::initializer_list<Var> inputs, Tensor out,
             std::vector<double> saved, Entry::BackwardFn fn) {
    return record(op, std::vector<Var>(inputs), std::move(out), std::move(saved), std::move(fn));
  }

  Var record(OpKind op, const std::vector<Var>& inputs, Tensor out, std::vector<double> saved,
             Entry::BackwardFn fn) {
    bool any = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (auto v : inputs) {
      if (v.id >= nodes_.size()) throw ContractError(std::string(op_name(op)) + ": input not on tape");
      any = any || nodes_[v.id].requires_grad();
      ids.push_back(v.id);
    }
    out.clear_grad();
    out.set_requires_grad(any);
    nodes_.push_back(std::move(out));
    std::size_t id = nodes_.size() - 1;
    entries_.push_back(Entry{op, std::move(ids), id, std::move(saved), std::move(fn)});
    return Var{id};
  }

  /// Populates d loss / d node on every node that requires a gradient.
  /// Leaves off the path to `loss` receive an all-zero gradient.
  void backward(Var loss) {
    if (backward_done_) throw ContractError("backward already ran on this tape");
    const auto& l = nodes_.at(loss.id);
    if (l.size() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " + shape_str(l.shape()));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad()) n.zero_grad();
    }
    if (!nodes_[loss.id].requires_grad()) {
      backward_done_ = true;
      return;
    }
    nodes_[loss.id].grad()[0] = 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (it->output > loss.id) continue;
      if (!nodes_[it->output].requires_grad()) continue;
      it->backward(*this, *it);
    }
    backward_done_ = true;
  }

  // Accessors used by backward rules.
  const Tensor& node(std::size_t id) const { return nodes_[id]; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad(); }
  const std::vector<double>& out_grad(const Entry& e) const { return nodes_[e.output].grad(); }
  std::vector<double>& grad_acc(std::size_t id) { return nodes_[id].grad(); }

 private:
  std::vector<Tensor> nodes_;
  std::vector<Entry> entries_;
  bool backward_done_ = false;
};

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

template <class Fn, class DFn>
Var unary(Tape& tape, Var x, OpKind op, Fn fn, DFn dfn) {
  const Tensor& in = tape.value(x);
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  return tape.record(op, {x}, std::move(out), {}, [dfn](Tape& t, const Entry& e) {
    if (!t.needs_grad(e.inputs[0])) return;
    const auto& xin = t.node(e.inputs[0]).values();
    const auto& y = t.node(e.output).values();
    const auto& g = t.out_grad(e);
    auto& gx = t.grad_acc(e.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfn(xin[i], y[i]);
  });
}

}  // namespace detail

/// C = A·B for A[m×k], B[k×n].
inline Var matmul(Tape& tape, Var a, Var b) {
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  detail::require_rank2(A, "matmul");
  detail::require_rank2(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()));
  }
  Tensor C({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
      C[i * n + j] = acc;
    }
  }
  return tape.record(OpKind::matmul, {a, b}, std::move(C), {}, [m, k, n](Tape& t, const Entry& e) {
    const auto& g = t.out_grad(e);
    const auto& Av = t.node(e.inputs[0]).values();
    const auto& Bv = t.node(e.inputs[1]).values();
    if (t.needs_grad(e.inputs[0])) {
      // dA = dC · Bᵀ
      auto& gA = t.grad_acc(e.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * Bv[p * n + j];
          gA[i * k + p] += acc;
        }
      }
    }
    if (t.needs_grad(e.inputs[1])) {
      // dB = Aᵀ · dC
      auto& gB = t.grad_acc(e.inputs[1]);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += Av[i * k + p] * g[i * n + j];
          gB[p * n + j] += acc;
        }
      }
    }
  });
}

inline Var add(Tape& tape, Var a, Var b) {
  const Tensor& A = tape.value(a);
  const Tensor& B = tape.value(b);
  if (A.shape() != B.shape()) {
    throw DimensionError("add: shapes differ, " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  }
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + B[i];
  return tape.record(OpKind::add, {a, b}, std::move(C), {}, [](Tape& t, const Entry& e) {
    const auto& g = t.out_grad(e);
    for (std::size_t in : e.inputs) {
      if (!t.needs_grad(in)) continue;
      auto& gi = t.grad_acc(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

/// Adds a length-m bias to every row of x[N×m].
inline Var add_bias(Tape& tape, Var x, Var bias) {
  const Tensor& X = tape.value(x);
  const Tensor& b = tape.value(bias);
  detail::require_rank2(X, "add_bias");
  const std::size_t rows = X.rows(), cols = X.cols();
  if (b.size() != cols) {
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not fit " + shape_str(X.shape()));
  }
  Tensor Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) Y[r * cols + c] = X[r * cols + c] + b[c];
  return tape.record(OpKind::add_bias, {x, bias}, std::move(Y), {}, [rows, cols](Tape& t, const Entry& e) {
    const auto& g = t.out_grad(e);
    if (t.needs_grad(e.inputs[0])) {
      auto& gx = t.grad_acc(e.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.needs_grad(e.inputs[1])) {
      auto& gb = t.grad_acc(e.inputs[1]);
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) acc += g[r * cols + c];
        gb[c] += acc;
      }
    }
  });
}

inline Var scale(Tape& tape, Var x, double factor) {
  return detail::unary(
      tape, x, OpKind::scale, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

inline Var leaky_relu(Tape& tape, Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ContractError("leaky_relu: slope must lie in (0,1)");
  return detail::unary(
      tape, x, OpKind::leaky_relu, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

inline Var relu(Tape& tape, Var x) {
  return detail::unary(
      tape, x, OpKind::relu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// ELU with unit scale: x for x>0, e^x − 1 otherwise.
inline Var elu(Tape& tape, Var x) {
  return detail::unary(
      tape, x, OpKind::elu, [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

inline double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double z = std::exp(v);
  return z / (1.0 + z);
}

inline Var sigmoid(Tape& tape, Var x) {
  return detail::unary(
      tape, x, OpKind::sigmoid, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

/// Row gather: out[e] = x[index[e]].
inline Var gather_rows(Tape& tape, Var x, std::shared_ptr<const std::vector<std::size_t>> index) {
  const Tensor& X = tape.value(x);
  detail::require_rank2(X, "gather_rows");
  const std::size_t cols = X.cols();
  Tensor Y({index->size(), cols});
  for (std::size_t e = 0; e < index->size(); ++e) {
    const std::size_t r = (*index)[e];
    if (r >= X.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(X.values().begin() + static_cast<std::ptrdiff_t>(r * cols), cols,
                Y.values().begin() + static_cast<std::ptrdiff_t>(e * cols));
  }
  return tape.record(OpKind::gather_rows, {x}, std::move(Y), {}, [index, cols](Tape& t, const Entry& e) {
    if (!t.needs_grad(e.inputs[0])) return;
    const auto& g = t.out_grad(e);
    auto& gx = t.grad_acc(e.inputs[0]);
    for (std::size_t k = 0; k < index->size(); ++k) {
      const std::size_t r = (*index)[k];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[k * cols + c];
    }
  });
}

/// Softmax within segments. `segment[e]` names the segment of entry e;
/// every segment in [0, num_segments) must own at least one entry.
inline Var segment_softmax(Tape& tape, Var logits, std::shared_ptr<const std::vector<std::size_t>> segment,
                           std::size_t num_segments) {
  const Tensor& L = tape.value(logits);
  if (L.size() != segment->size()) {
    throw DimensionError("segment_softmax: " + std::to_string(L.size()) + " logits but " +
                         std::to_string(segment->size()) + " segment ids");
  }
  std::vector<double> seg_max(num_segments, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> count(num_segments, 0);
  for (std::size_t e = 0; e < L.size(); ++e) {
    const std::size_t s = (*segment)[e];
    if (s >= num_segments) throw ContractError("segment_softmax: segment id out of range");
    seg_max[s] = std::max(seg_max[s], L[e]);
    ++count[s];
  }
  for (std::size_t s = 0; s < num_segments; ++s) {
    if (count[s] == 0) throw ContractError("segment_softmax: segment " + std::to_string(s) + " is empty");
  }
  Tensor Y(L.shape());
  std::vector<double> denom(num_segments, 0.0);
  for (std::size_t e = 0; e < L.size(); ++e) {
    const std::size_t s = (*segment)[e];
    Y[e] = std::exp(L[e] - seg_max[s]);
    denom[s] += Y[e];
  }
  for (std::size_t e = 0; e < L.size(); ++e) Y[e] /= denom[(*segment)[e]];

  return tape.record(OpKind::segment_softmax, {logits}, std::move(Y), {},
                     [segment, num_segments](Tape& t, const Entry& e) {
                       if (!t.needs_grad(e.inputs[0])) return;
                       const auto& g = t.out_grad(e);
                       const auto& y = t.node(e.output).values();
                       std::vector<double> dot(num_segments, 0.0);
                       for (std::size_t k = 0; k < y.size(); ++k) dot[(*segment)[k]] += g[k] * y[k];
                       auto& gx = t.grad_acc(e.inputs[0]);
                       for (std::size_t k = 0; k < y.size(); ++k) gx[k] += y[k] * (g[k] - dot[(*segment)[k]]);
                     });
}

/// Message aggregation: out[dst[e]] += weight[e] · values[src[e]].
/// Output has `num_out` rows and the column count of `values`.
inline Var edge_weighted_sum(Tape& tape, Var weights, Var values,
                             std::shared_ptr<const std::vector<std::size_t>> src,
                             std::shared_ptr<const std::vector<std::size_t>> dst, std::size_t num_out) {
  const Tensor& W = tape.value(weights);
  const Tensor& V = tape.value(values);
  detail::require_rank2(V, "edge_weighted_sum");
  if (W.size() != src->size() || src->size() != dst->size()) {
    throw DimensionError("edge_weighted_sum: edge arrays disagree in length");
  }
  const std::size_t cols = V.cols();
  Tensor Y({num_out, cols});
  for (std::size_t e = 0; e < W.size(); ++e) {
    const std::size_t s = (*src)[e], d = (*dst)[e];
    if (s >= V.rows() || d >= num_out) throw DimensionError("edge_weighted_sum: endpoint out of range");
    for (std::size_t c = 0; c < cols; ++c) Y[d * cols + c] += W[e] * V[s * cols + c];
  }
  return tape.record(OpKind::edge_weighted_sum, {weights, values}, std::move(Y), {},
                     [src, dst, cols](Tape& t, const Entry& e) {
                       const auto& g = t.out_grad(e);
                       const auto& Wv = t.node(e.inputs[0]).values();
                       const auto& Vv = t.node(e.inputs[1]).values();
                       const bool gw = t.needs_grad(e.inputs[0]);
                       const bool gv = t.needs_grad(e.inputs[1]);
                       for (std::size_t k = 0; k < Wv.size(); ++k) {
                         const std::size_t s = (*src)[k], d = (*dst)[k];
                         if (gw) {
                           double acc = 0.0;
                           for (std::size_t c = 0; c < cols; ++c) acc += g[d * cols + c] * Vv[s * cols + c];
                           t.grad_acc(e.inputs[0])[k] += acc;
                         }
                         if (gv) {
                           auto& gV = t.grad_acc(e.inputs[1]);
                           for (std::size_t c = 0; c < cols; ++c) gV[s * cols + c] += Wv[k] * g[d * cols + c];
                         }
                       }
                     });
}

inline Var sum(Tape& tape, Var x) {
  const Tensor& X = tape.value(x);
  double acc = 0.0;
  for (double v : X.values()) acc += v;
  return tape.record(OpKind::sum, {x}, Tensor::scalar(acc), {}, [](Tape& t, const Entry& e) {
    if (!t.needs_grad(e.inputs[0])) return;
    const double g = t.out_grad(e)[0];
    for (auto& gi : t.grad_acc(e.inputs[0])) gi += g;
  });
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = tape.value(parts[0]).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (auto p : parts) {
    const Tensor& T = tape.value(p);
    detail::require_rank2(T, "concat_cols");
    if (T.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(T.cols());
    total += T.cols();
  }
  Tensor Y({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& T = tape.value(parts[k]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) Y[r * total + off + c] = T[r * widths[k] + c];
    off += widths[k];
  }
  return tape.record(OpKind::concat_cols, parts, std::move(Y), {}, [widths, rows, total](Tape& t, const Entry& e) {
    const auto& g = t.out_grad(e);
    std::size_t o = 0;
    for (std::size_t k = 0; k < e.inputs.size(); ++k) {
      if (t.needs_grad(e.inputs[k])) {
        auto& gi = t.grad_acc(e.inputs[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gi[r * widths[k] + c] += g[r * total + o + c];
      }
      o += widths[k];
    }
  });
}

/// Rows [begin, end) of a matrix.
inline Var slice_rows(Tape& tape, Var x, std::size_t begin, std::size_t end) {
  const Tensor& X = tape.value(x);
  detail::require_rank2(X, "slice_rows");
  if (begin >= end || end > X.rows()) throw DimensionError("slice_rows: bad range for " + shape_str(X.shape()));
  const std::size_t cols = X.cols();
  Tensor Y({end - begin, cols},
           std::vector<double>(X.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                               X.values().begin() + static_cast<std::ptrdiff_t>(end * cols)));
  return tape.record(OpKind::slice_rows, {x}, std::move(Y), {}, [begin, cols](Tape& t, const Entry& e) {
    if (!t.needs_grad(e.inputs[0])) return;
    const auto& g = t.out_grad(e);
    auto& gx = t.grad_acc(e.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * cols + i] += g[i];
  });
}

/// Element-wise mean of equally shaped tensors, summed left to right.
inline Var mean_of(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("mean_of: no inputs");
  Var acc = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) acc = add(tape, acc, parts[k]);
  if (parts.size() == 1) return acc;
  return scale(tape, acc, 1.0 / static_cast<double>(parts.size()));
}

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over the entries listed in `mask`.
/// Predictions are clamped to [ε, 1−ε]; the clamp has zero derivative.
inline Var bce_loss(Tape& tape, Var pred, std::span<const double> labels, std::span<const std::size_t> mask) {
  const Tensor& P = tape.value(pred);
  if (mask.empty()) throw ContractError("bce_loss: empty mask");
  if (labels.size() != P.size()) {
    throw DimensionError("bce_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(P.size()) + " predictions");
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(mask.begin(), mask.end());
  auto y = std::make_shared<std::vector<double>>(labels.begin(), labels.end());
  const double n = static_cast<double>(idx->size());
  double acc = 0.0;
  for (std::size_t i : *idx) {
    if (i >= P.size()) throw DimensionError("bce_loss: mask index out of range");
    const double p = P[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("bce_loss: prediction outside [0,1]");
    const double ph = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    const double yi = (*y)[i];
    acc += -(yi * std::log(ph) + (1.0 - yi) * std::log(1.0 - ph));
  }
  return tape.record(OpKind::bce_loss, {pred}, Tensor::scalar(acc / n), {}, [idx, y, n](Tape& t, const Entry& e) {
    if (!t.needs_grad(e.inputs[0])) return;
    const double g = t.out_grad(e)[0];
    const auto& p = t.node(e.inputs[0]).values();
    auto& gp = t.grad_acc(e.inputs[0]);
    for (std::size_t i : *idx) {
      if (p[i] < kBceClamp || p[i] > 1.0 - kBceClamp) continue;
      const double yi = (*y)[i];
      gp[i] += g * (-yi / p[i] + (1.0 - yi) / (1.0 - p[i])) / n;
    }
  });
}

}  // namespace fusenet::ad
