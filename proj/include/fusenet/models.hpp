#pragma once

// Model architectures: the two-layer GAT graph encoder, the GCN baseline,
// linear fusion X = Z·Wz + H·Wh, the two-layer MLP head, and the variant
// compositions used by the benchmark and ablation tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/error.hpp"
#include "fusenet/graph.hpp"
#include "fusenet/rng.hpp"
#include "fusenet/tensor.hpp"
#include "fusenet/text_embed.hpp"

namespace fusenet {

enum class ModelVariant { full, no_text, no_graph, gcn_only, gat_only, text_only, late_fusion };

inline constexpr ModelVariant kAllVariants[] = {ModelVariant::full,     ModelVariant::no_text,
                                                ModelVariant::no_graph, ModelVariant::gcn_only,
                                                ModelVariant::gat_only, ModelVariant::text_only,
                                                ModelVariant::late_fusion};

inline const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "full";
    case ModelVariant::no_text: return "no_text";
    case ModelVariant::no_graph: return "no_graph";
    case ModelVariant::gcn_only: return "gcn_only";
    case ModelVariant::gat_only: return "gat_only";
    case ModelVariant::text_only: return "text_only";
    case ModelVariant::late_fusion: return "late_fusion";
  }
  return "unknown";
}

inline ModelVariant parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (s == variant_name(v)) return v;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

inline bool uses_text(ModelVariant v) {
  return v == ModelVariant::full || v == ModelVariant::no_graph || v == ModelVariant::text_only ||
         v == ModelVariant::late_fusion;
}

struct ModelDims {
  std::size_t num_nodes = 0;
  std::size_t d_text = 64;   // text embedding width
  std::size_t d_in = 16;     // trainable node-embedding width
  std::size_t heads = 4;     // attention heads on the hidden GAT layer
  std::size_t d_head = 8;    // per-head width of the hidden GAT layer
  std::size_t d_graph = 32;  // graph embedding width (Z)
  std::size_t d_fuse = 32;   // fused width (X)
  std::size_t d_mlp = 32;    // MLP hidden width

  std::size_t d_hidden() const { return heads * d_head; }
};

/// Named trainable tensors, in a fixed registration order.
class ParamSet {
 public:
  void add(std::string name, Tensor t) {
    if (find(name)) throw ContractError("duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    entries_.emplace_back(std::move(name), std::move(t));
  }

  const Tensor* find(std::string_view name) const {
    for (const auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }
  Tensor* find(std::string_view name) {
    for (auto& [n, t] : entries_)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor& at(std::string_view name) const {
    if (auto* t = find(name)) return *t;
    throw ContractError("missing parameter '" + std::string(name) + "'");
  }
  Tensor& at(std::string_view name) {
    if (auto* t = find(name)) return *t;
    throw ContractError("missing parameter '" + std::string(name) + "'");
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

namespace detail {

inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  Rng rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

/// Each tensor draws from its own named sub-seed, so blocks shared by two
/// variants initialize identically.
struct ParamBuilder {
  ParamSet& params;
  std::uint64_t seed;
  std::string prefix;

  void weight(const std::string& name, std::size_t rows, std::size_t cols) {
    params.add(prefix + name, glorot(rows, cols, sub_seed(seed, prefix + name)));
  }
  void bias(const std::string& name, std::size_t cols) { params.add(prefix + name, Tensor({1, cols})); }

  void node_table(const ModelDims& d) { weight("node_embed", d.num_nodes, d.d_in); }
  void gat(const ModelDims& d) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      weight("gat1.W.h" + std::to_string(h), d.d_in, d.d_head);
      weight("gat1.a.h" + std::to_string(h), 2 * d.d_head, 1);
    }
    weight("gat2.W", d.d_hidden(), d.d_graph);
    weight("gat2.a", 2 * d.d_graph, 1);
  }
  void gcn(const ModelDims& d) {
    weight("gcn1.W", d.d_in, d.d_hidden());
    weight("gcn2.W", d.d_hidden(), d.d_graph);
  }
  void mlp(std::size_t d_input, const ModelDims& d) {
    weight("mlp.W1", d_input, d.d_mlp);
    bias("mlp.b1", d.d_mlp);
    weight("mlp.W2", d.d_mlp, 1);
    bias("mlp.b2", 1);
  }
};

}  // namespace detail

/// Glorot-uniform weights, zero biases; deterministic per seed.
inline ParamSet init_params(ModelVariant variant, const ModelDims& d, std::uint64_t seed) {
  if (d.num_nodes == 0) throw ContractError("init_params: graph has no nodes");
  ParamSet p;
  detail::ParamBuilder b{p, seed, ""};
  switch (variant) {
    case ModelVariant::full:
      b.node_table(d);
      b.gat(d);
      b.weight("fuse.Wz", d.d_graph, d.d_fuse);
      b.weight("fuse.Wh", d.d_text, d.d_fuse);
      b.mlp(d.d_fuse, d);
      break;
    case ModelVariant::no_text:
      b.node_table(d);
      b.gat(d);
      b.weight("fuse.Wz", d.d_graph, d.d_fuse);
      b.mlp(d.d_fuse, d);
      break;
    case ModelVariant::no_graph:
      b.weight("fuse.Wh", d.d_text, d.d_fuse);
      b.mlp(d.d_fuse, d);
      break;
    case ModelVariant::gat_only:
      b.node_table(d);
      b.gat(d);
      b.mlp(d.d_graph, d);
      break;
    case ModelVariant::gcn_only:
      b.node_table(d);
      b.gcn(d);
      b.mlp(d.d_graph, d);
      break;
    case ModelVariant::text_only:
      b.mlp(d.d_text, d);
      break;
    case ModelVariant::late_fusion: {
      detail::ParamBuilder g{p, seed, "gcn/"};
      g.node_table(d);
      g.gcn(d);
      g.mlp(d.d_graph, d);
      detail::ParamBuilder t{p, seed, "text/"};
      t.mlp(d.d_text, d);
      break;
    }
  }
  return p;
}

/// Graph-derived constants shared by every forward pass over one dataset.
class ModelContext {
 public:
  ModelContext(const Graph& graph, std::optional<Tensor> text)
      : num_nodes_(graph.num_nodes()), edges_(message_edges(graph)), text_(std::move(text)) {
    std::vector<double> coeff(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const double du = static_cast<double>(graph.neighbors((*edges_.src)[e]).size());
      const double dv = static_cast<double>(graph.neighbors((*edges_.dst)[e]).size());
      coeff[e] = 1.0 / std::sqrt(du * dv);
    }
    gcn_coeff_ = Tensor({edges_.size(), 1}, std::move(coeff));
    if (text_ && text_->rows() != num_nodes_) {
      throw DimensionError("text embeddings have " + std::to_string(text_->rows()) + " rows for " +
                           std::to_string(num_nodes_) + " nodes");
    }
  }

  ModelContext(const Graph& graph, const EmbeddingMatrix& text) : ModelContext(graph, text.to_tensor()) {}

  std::size_t num_nodes() const { return num_nodes_; }
  const MessageEdges& edges() const { return edges_; }
  const Tensor& gcn_coeff() const { return gcn_coeff_; }
  bool has_text() const { return text_.has_value(); }
  const Tensor& text() const {
    if (!text_) throw ConfigError("model variant needs text embeddings but no corpus was provided");
    return *text_;
  }
  std::size_t text_dim() const { return text_ ? text_->cols() : 0; }

 private:
  std::size_t num_nodes_;
  MessageEdges edges_;
  Tensor gcn_coeff_;
  std::optional<Tensor> text_;
};

inline constexpr double kAttentionSlope = 0.2;

/// Multi-head graph attention. For target i and neighbor j (self included):
///   e_ij = LeakyReLU(a_left·(W x_i) + a_right·(W x_j)), α = softmax_j(e),
///   out_i = Σ_j α_ij W x_j.
/// Hidden layers concatenate heads and apply ELU; output layers average.
inline ad::Var gat_layer(ad::Tape& tape, ad::Var x, const MessageEdges& edges, const std::vector<ad::Var>& W,
                         const std::vector<ad::Var>& a, bool concat_heads) {
  if (W.empty() || W.size() != a.size()) throw ContractError("gat_layer: need one attention vector per head");
  std::vector<ad::Var> heads;
  for (std::size_t h = 0; h < W.size(); ++h) {
    ad::Var wx = ad::matmul(tape, x, W[h]);
    const std::size_t d = tape.value(wx).cols();
    if (tape.value(a[h]).rows() != 2 * d) {
      throw DimensionError("gat_layer: attention vector must have " + std::to_string(2 * d) + " rows");
    }
    ad::Var score_target = ad::matmul(tape, wx, ad::slice_rows(tape, a[h], 0, d));
    ad::Var score_source = ad::matmul(tape, wx, ad::slice_rows(tape, a[h], d, 2 * d));
    ad::Var logits = ad::add(tape, ad::gather_rows(tape, score_target, edges.dst),
                             ad::gather_rows(tape, score_source, edges.src));
    logits = ad::leaky_relu(tape, logits, kAttentionSlope);
    ad::Var alpha = ad::segment_softmax(tape, logits, edges.dst, edges.num_nodes);
    heads.push_back(ad::edge_weighted_sum(tape, alpha, wx, edges.src, edges.dst, edges.num_nodes));
  }
  if (concat_heads) return ad::elu(tape, ad::concat_cols(tape, heads));
  return ad::mean_of(tape, heads);
}

/// out = D̂^(-1/2) Â D̂^(-1/2) x W, with ReLU when `hidden`.
inline ad::Var gcn_layer(ad::Tape& tape, ad::Var x, const MessageEdges& edges, ad::Var coeff, ad::Var W,
                         bool hidden) {
  ad::Var xw = ad::matmul(tape, x, W);
  ad::Var out = ad::edge_weighted_sum(tape, coeff, xw, edges.src, edges.dst, edges.num_nodes);
  return hidden ? ad::relu(tape, out) : out;
}

/// Fusion in row-vector form: X = Z·Wz + H·Wh (no bias).
inline ad::Var fuse(ad::Tape& tape, ad::Var Z, ad::Var H, ad::Var Wz, ad::Var Wh) {
  if (tape.value(Z).rows() != tape.value(H).rows()) {
    throw DimensionError("fuse: Z has " + std::to_string(tape.value(Z).rows()) + " rows, H has " +
                         std::to_string(tape.value(H).rows()));
  }
  return ad::add(tape, ad::matmul(tape, Z, Wz), ad::matmul(tape, H, Wh));
}

/// y = sigmoid(relu(X·W1 + b1)·W2 + b2), shape [N×1].
inline ad::Var mlp_predict(ad::Tape& tape, ad::Var X, ad::Var W1, ad::Var b1, ad::Var W2, ad::Var b2) {
  ad::Var h = ad::relu(tape, ad::add_bias(tape, ad::matmul(tape, X, W1), b1));
  return ad::sigmoid(tape, ad::add_bias(tape, ad::matmul(tape, h, W2), b2));
}

/// Every ParamSet tensor registered on a tape, in ParamSet order.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ParamSet& params) {
    for (const auto& [name, t] : params) {
      names_.push_back(name);
      vars_.push_back(tape.leaf(t));
    }
  }

  ad::Var operator()(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return vars_[i];
    throw ContractError("missing parameter '" + std::string(name) + "'");
  }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ad::Var>& vars() const { return vars_; }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

/// Two-layer GAT over the trainable node table.
inline ad::Var encode_graph(ad::Tape& tape, const ModelContext& ctx, const BoundParams& p, std::size_t heads,
                            const std::string& prefix = "") {
  std::vector<ad::Var> W1, a1;
  for (std::size_t h = 0; h < heads; ++h) {
    W1.push_back(p(prefix + "gat1.W.h" + std::to_string(h)));
    a1.push_back(p(prefix + "gat1.a.h" + std::to_string(h)));
  }
  ad::Var hidden = gat_layer(tape, p(prefix + "node_embed"), ctx.edges(), W1, a1, true);
  return gat_layer(tape, hidden, ctx.edges(), {p(prefix + "gat2.W")}, {p(prefix + "gat2.a")}, false);
}

inline ad::Var encode_graph_gcn(ad::Tape& tape, const ModelContext& ctx, const BoundParams& p,
                                const std::string& prefix = "") {
  ad::Var coeff = tape.constant(ctx.gcn_coeff());
  ad::Var hidden = gcn_layer(tape, p(prefix + "node_embed"), ctx.edges(), coeff, p(prefix + "gcn1.W"), true);
  return gcn_layer(tape, hidden, ctx.edges(), coeff, p(prefix + "gcn2.W"), false);
}

namespace detail {

inline ad::Var head(ad::Tape& tape, ad::Var X, const BoundParams& p, const std::string& prefix) {
  return mlp_predict(tape, X, p(prefix + "mlp.W1"), p(prefix + "mlp.b1"), p(prefix + "mlp.W2"),
                     p(prefix + "mlp.b2"));
}

}  // namespace detail

/// Records the forward pass of `variant` and returns the N×1 probabilities.
inline ad::Var forward_on_tape(ad::Tape& tape, ModelVariant variant, const ModelContext& ctx,
                               const BoundParams& p, std::size_t heads) {
  auto text = [&] { return tape.constant(ctx.text()); };
  switch (variant) {
    case ModelVariant::full:
      return detail::head(tape, fuse(tape, encode_graph(tape, ctx, p, heads), text(), p("fuse.Wz"), p("fuse.Wh")),
                          p, "");
    case ModelVariant::no_text:
      return detail::head(tape, ad::matmul(tape, encode_graph(tape, ctx, p, heads), p("fuse.Wz")), p, "");
    case ModelVariant::no_graph:
      return detail::head(tape, ad::matmul(tape, text(), p("fuse.Wh")), p, "");
    case ModelVariant::gat_only:
      return detail::head(tape, encode_graph(tape, ctx, p, heads), p, "");
    case ModelVariant::gcn_only:
      return detail::head(tape, encode_graph_gcn(tape, ctx, p), p, "");
    case ModelVariant::text_only:
      return detail::head(tape, text(), p, "");
    case ModelVariant::late_fusion: {
      ad::Var y_graph = detail::head(tape, encode_graph_gcn(tape, ctx, p, "gcn/"), p, "gcn/");
      ad::Var y_text = detail::head(tape, text(), p, "text/");
      return ad::mean_of(tape, {y_graph, y_text});
    }
  }
  throw ConfigError("unhandled model variant");
}

/// Per-node probabilities and their thresholded labels (p ≥ threshold → 1).
struct Prediction {
  std::vector<double> probabilities;
  std::vector<std::uint8_t> labels;
  double threshold = 0.5;
};

inline Prediction make_prediction(std::vector<double> probs, double threshold) {
  Prediction out;
  out.threshold = threshold;
  out.labels.reserve(probs.size());
  for (double p : probs) out.labels.push_back(p >= threshold ? 1 : 0);
  out.probabilities = std::move(probs);
  return out;
}

inline Prediction forward(ModelVariant variant, const ModelContext& ctx, const ParamSet& params,
                          const ModelDims& dims, double threshold = 0.5) {
  if (uses_text(variant) && !ctx.has_text()) {
    throw ConfigError(std::string("variant '") + variant_name(variant) + "' needs a text corpus");
  }
  ad::Tape tape;
  BoundParams bound(tape, params);
  ad::Var y = forward_on_tape(tape, variant, ctx, bound, dims.heads);
  return make_prediction(tape.value(y).values(), threshold);
}

}  // namespace fusenet
