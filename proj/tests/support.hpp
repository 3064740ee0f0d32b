#pragma once

// Shared test helpers: small graph builders and dense brute-force oracles
// that recompute each layer from an explicit adjacency matrix, with no use
// of the tape or the message-edge lists.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusenet/fusenet.hpp"

namespace fusenet::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline Tensor to_tensor(const Mat& m) {
  std::vector<double> v;
  for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
  return Tensor({m.size(), m.front().size()}, std::move(v));
}

inline Mat mat_mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat mat_add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
  return d;
}

inline double max_abs_diff(const Tensor& a, const Mat& b) { return max_abs_diff(to_mat(a), b); }

/// Dense adjacency with self-loops, built from the raw edge list.
inline Mat dense_adjacency(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Mat a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  for (auto [u, v] : edges) a[u][v] = a[v][u] = 1.0;
  return a;
}

inline Mat oracle_gat_head(const Mat& adj, const Mat& x, const Mat& W, const Mat& a, double slope = 0.2) {
  const Mat h = mat_mul(x, W);
  const std::size_t n = adj.size(), d = W.front().size();
  Mat out(n, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e(n, -INFINITY);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (adj[i][j] == 0.0) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a[k][0] * h[i][k] + a[d + k][0] * h[j][k];
      e[j] = s >= 0 ? s : slope * s;
      mx = std::max(mx, e[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j] != 0.0) z += std::exp(e[j] - mx);
    for (std::size_t j = 0; j < n; ++j) {
      if (adj[i][j] == 0.0) continue;
      const double alpha = std::exp(e[j] - mx) / z;
      for (std::size_t k = 0; k < d; ++k) out[i][k] += alpha * h[j][k];
    }
  }
  return out;
}

/// Concatenate + ELU when `concat`, otherwise average the heads.
inline Mat oracle_gat(const Mat& adj, const Mat& x, const std::vector<Mat>& W, const std::vector<Mat>& a, bool concat) {
  std::vector<Mat> heads;
  for (std::size_t k = 0; k < W.size(); ++k) heads.push_back(oracle_gat_head(adj, x, W[k], a[k]));
  const std::size_t n = adj.size();
  Mat out(n);
  if (concat) {
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& h : heads)
        for (double v : h[i]) out[i].push_back(v > 0 ? v : std::expm1(v));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out[i].assign(heads[0][i].size(), 0.0);
      for (const auto& h : heads)
        for (std::size_t k = 0; k < h[i].size(); ++k) out[i][k] += h[i][k] / static_cast<double>(heads.size());
    }
  }
  return out;
}

inline Mat oracle_gcn(const Mat& adj, const Mat& x, const Mat& W, bool relu) {
  const std::size_t n = adj.size();
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += adj[i][j];
  Mat norm(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) norm[i][j] = adj[i][j] / std::sqrt(deg[i] * deg[j]);
  Mat out = mat_mul(mat_mul(norm, x), W);
  if (relu)
    for (auto& row : out)
      for (double& v : row) v = std::max(v, 0.0);
  return out;
}

inline Mat oracle_fuse(const Mat& Z, const Mat& H, const Mat& Wz, const Mat& Wh) {
  return mat_add(mat_mul(Z, Wz), mat_mul(H, Wh));
}

inline Mat oracle_mlp(const Mat& X, const Mat& W1, const Mat& b1, const Mat& W2, const Mat& b2) {
  Mat h = mat_mul(X, W1);
  for (auto& row : h)
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = std::max(row[k] + b1[0][k], 0.0);
  Mat y = mat_mul(h, W2);
  for (auto& row : y) row[0] = 1.0 / (1.0 + std::exp(-(row[0] + b2[0][0])));
  return y;
}

/// Dense end-to-end forward of the full variant.
inline Mat oracle_full(const Mat& adj, const ParamSet& p, const Mat& H, std::size_t heads) {
  std::vector<Mat> W1, a1;
  for (std::size_t k = 0; k < heads; ++k) {
    W1.push_back(to_mat(p.at("gat1.W.h" + std::to_string(k))));
    a1.push_back(to_mat(p.at("gat1.a.h" + std::to_string(k))));
  }
  Mat hidden = oracle_gat(adj, to_mat(p.at("node_embed")), W1, a1, true);
  Mat Z = oracle_gat(adj, hidden, {to_mat(p.at("gat2.W"))}, {to_mat(p.at("gat2.a"))}, false);
  Mat X = oracle_fuse(Z, H, to_mat(p.at("fuse.Wz")), to_mat(p.at("fuse.Wh")));
  return oracle_mlp(X, to_mat(p.at("mlp.W1")), to_mat(p.at("mlp.b1")), to_mat(p.at("mlp.W2")), to_mat(p.at("mlp.b2")));
}

/// Node ids "n0".."n{n-1}"; edges given as index pairs.
inline Graph make_graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
  return Graph::from_edges(ids, edges);
}

/// `m` distinct undirected edges on `n` nodes, chosen by a seeded shuffle.
inline std::vector<std::pair<std::size_t, std::size_t>> random_edges(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) all.emplace_back(u, v);
  Rng rng(seed);
  rng.shuffle(all);
  all.resize(std::min(m, all.size()));
  std::sort(all.begin(), all.end());
  return all;
}

inline Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return Tensor({r, c}, std::move(v));
}

/// Small dims for fast exhaustive checks.
inline ModelDims tiny_dims(std::size_t n, std::size_t d_text = 6) {
  ModelDims d;
  d.num_nodes = n;
  d.d_text = d_text;
  d.d_in = 4;
  d.heads = 2;
  d.d_head = 3;
  d.d_graph = 4;
  d.d_fuse = 5;
  d.d_mlp = 6;
  return d;
}

/// The graphs with at most 5 nodes used by the oracle tests.
struct SmallInstance {
  std::string name;
  std::size_t n;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

inline std::vector<SmallInstance> small_instances() {
  return {
      {"single node", 1, {}},
      {"edge", 2, {{0, 1}}},
      {"path3", 3, {{0, 1}, {1, 2}}},
      {"star4", 4, {{0, 1}, {0, 2}, {0, 3}}},
      {"k4", 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}},
      {"isolated", 5, {{0, 1}, {1, 2}, {2, 0}}},
      {"5n8e", 5, random_edges(5, 8, 11)},
  };
}

/// Central finite differences of `loss` against every entry of every
/// parameter. Returns the worst violation of
/// |analytic - numeric| <= max(abs_floor, rel * max(|analytic|, |numeric|)),
/// as (ratio of error to allowance, tensor name).
struct GradCheck {
  double worst_ratio = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

inline GradCheck grad_check(ParamSet& params, const std::function<double(const ParamSet&)>& loss,
                            const std::vector<std::vector<double>>& analytic, double h = 1e-6, double rel = 1e-4,
                            double abs_floor = 1e-7) {
  GradCheck out;
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.values()[i];
      t.values()[i] = orig + h;
      const double up = loss(params);
      t.values()[i] = orig - h;
      const double down = loss(params);
      t.values()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double allowance = std::max(abs_floor, rel * std::max(std::abs(a), std::abs(numeric)));
      const double ratio = std::abs(a - numeric) / allowance;
      if (ratio > out.worst_ratio) {
        out.worst_ratio = ratio;
        out.worst_name = name + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
    ++k;
  }
  return out;
}

/// Loss of `variant` on every labeled node, without touching gradients.
inline double plain_loss(ModelVariant variant, const ModelContext& ctx, const ParamSet& params, const ModelDims& dims,
                         const std::vector<double>& labels, const std::vector<std::size_t>& mask) {
  ad::Tape tape;
  BoundParams bound(tape, params);
  ad::Var y = forward_on_tape(tape, variant, ctx, bound, dims.heads);
  return tape.value(ad::bce_loss(tape, y, labels, mask))[0];
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("fusenet_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Median of an odd-length sample (upper median otherwise).
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

/// Mean F1 of fixed predictions against random shuffles of the true labels
/// over the same nodes. This is what a model with no usable signal scores.
inline double permutation_baseline(std::span<const std::uint8_t> predicted, const LabelSet& labels,
                                   const std::vector<std::size_t>& nodes, std::uint64_t seed,
                                   int permutations = 200) {
  std::vector<std::uint8_t> truth;
  for (std::size_t i : nodes) truth.push_back(*labels.labels[i]);
  Rng rng(seed);
  double sum = 0.0;
  for (int k = 0; k < permutations; ++k) {
    rng.shuffle(truth);
    LabelSet shuffled;
    shuffled.labels.assign(labels.size(), std::nullopt);
    for (std::size_t j = 0; j < nodes.size(); ++j) shuffled.labels[nodes[j]] = truth[j];
    sum += compute_metrics(predicted, shuffled, nodes).f1;
  }
  return sum / permutations;
}

/// One synthetic dataset, hashed text embeddings, split and training setup,
/// seeded the same way as a CLI run with `seed`.
struct SynthSetup {
  SynthDataset ds;
  std::optional<ModelContext> ctx;
  Split split;
  ModelDims dims;
  TrainConfig train;

  SynthSetup(SynthConfig sc, std::uint64_t seed, std::size_t patience = 50) {
    sc.seed = sub_seed(seed, "synthgen");
    ds = generate(sc);
    const EmbeddingMatrix H = embed_corpus(ds.graph, ds.corpus, ProviderConfig{});
    ctx.emplace(ds.graph, H);
    split = split_nodes(ds.labels, {}, sub_seed(seed, "split"));
    dims.num_nodes = ds.graph.num_nodes();
    dims.d_text = H.dim;
    dims.d_in = 4;
    train.seed = seed;
    train.patience = patience;
  }

  TrainResult fit(ModelVariant v) const { return fusenet::train(v, *ctx, ds.labels, split, dims, train); }

  double baseline_for(const TrainResult& r, std::uint64_t seed) const {
    const auto pred = forward(r.model.variant, *ctx, r.model.params, dims, train.threshold);
    return permutation_baseline(pred.labels, ds.labels, split.test, seed);
  }
};

}  // namespace fusenet::testing
