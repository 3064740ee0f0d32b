#pragma once

// Criminal-network graph, per-node labels and texts, and the seeded
// train/validation/test split. File formats:
//
//   edges   UTF-8, one "src<TAB>dst" per line, '#' starts a comment line
//   labels  one "node_id<TAB>{0|1}" per line
//   texts   JSON lines, {"id": "<node>", "text": "<document>"}

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fusenet/error.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

/// Undirected graph with a self-loop on every node. Node indices follow the
/// order in which external ids were first seen.
class Graph {
 public:
  Graph() = default;

  /// Builds from external ids and index pairs. Orientation, duplicates and
  /// explicit self-loops are normalized away.
  static Graph from_edges(std::vector<std::string> node_ids,
                          const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    Graph g;
    g.node_ids_ = std::move(node_ids);
    const std::size_t n = g.node_ids_.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = g.index_.emplace(g.node_ids_[i], i);
      if (!inserted) throw DataError("duplicate node id '" + g.node_ids_[i] + "'");
    }
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw DataError("edge endpoint out of range");
      if (u == v) continue;
      g.edges_.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(g.edges_.begin(), g.edges_.end());
    g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());

    g.adj_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) g.adj_[i].push_back(i);
    for (auto [u, v] : g.edges_) {
      g.adj_[u].push_back(v);
      g.adj_[v].push_back(u);
    }
    for (auto& a : g.adj_) std::sort(a.begin(), a.end());
    return g;
  }

  std::size_t num_nodes() const noexcept { return node_ids_.size(); }

  /// Canonical undirected edges (u < v), sorted, self-loops excluded.
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }

  const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
  const std::string& node_id(std::size_t i) const { return node_ids_.at(i); }

  std::optional<std::size_t> index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Sorted neighbor list including the node itself.
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adj_.at(i); }

  /// Neighbor count excluding the self-loop.
  std::size_t degree(std::size_t i) const { return adj_.at(i).size() - 1; }

  /// Relabels nodes so that old node i becomes perm[i].
  Graph permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != num_nodes()) throw ContractError("permutation size mismatch");
    std::vector<std::string> ids(num_nodes());
    for (std::size_t i = 0; i < num_nodes(); ++i) ids.at(perm[i]) = node_ids_[i];
    std::vector<std::pair<std::size_t, std::size_t>> e;
    e.reserve(edges_.size());
    for (auto [u, v] : edges_) e.emplace_back(perm[u], perm[v]);
    return from_edges(std::move(ids), e);
  }

 private:
  std::vector<std::string> node_ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<std::size_t>> adj_;
};

/// Directed message list derived from the adjacency: for every target i
/// (in index order) and every j in neighbors(i), one edge j → i. Edges of
/// one target are contiguous, so `dst` doubles as the softmax segment map.
struct MessageEdges {
  std::shared_ptr<const std::vector<std::size_t>> src;
  std::shared_ptr<const std::vector<std::size_t>> dst;
  std::size_t num_nodes = 0;

  std::size_t size() const { return src->size(); }
};

inline MessageEdges message_edges(const Graph& g) {
  auto src = std::make_shared<std::vector<std::size_t>>();
  auto dst = std::make_shared<std::vector<std::size_t>>();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (std::size_t j : g.neighbors(i)) {
      src->push_back(j);
      dst->push_back(i);
    }
  }
  return MessageEdges{std::move(src), std::move(dst), g.num_nodes()};
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return in;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

/// Splits "a<TAB>b" into exactly two non-empty fields.
inline std::optional<std::pair<std::string, std::string>> split_tab2(const std::string& line) {
  const auto tab = line.find('\t');
  if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) return std::nullopt;
  std::string a = line.substr(0, tab), b = line.substr(tab + 1);
  if (a.empty() || b.empty()) return std::nullopt;
  return std::make_pair(std::move(a), std::move(b));
}

}  // namespace detail

inline Graph load_graph(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  auto intern = [&](const std::string& id) {
    auto [it, inserted] = index.emplace(id, ids.size());
    if (inserted) ids.push_back(id);
    return it->second;
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty() || line[0] == '#' || detail::blank(line)) continue;
    auto fields = detail::split_tab2(line);
    if (!fields) throw ParseError(path.string(), lineno, "expected 'src<TAB>dst'");
    const std::size_t u = intern(fields->first);
    const std::size_t v = intern(fields->second);
    edges.emplace_back(u, v);
  }
  if (ids.empty()) throw DataError("empty graph: '" + path.string() + "' lists no edges");
  return Graph::from_edges(std::move(ids), edges);
}

/// Per-node binary labels; nodes without a label are unknown.
struct LabelSet {
  std::vector<std::optional<std::uint8_t>> labels;

  std::size_t size() const { return labels.size(); }

  std::vector<std::size_t> labeled() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i]) out.push_back(i);
    return out;
  }

  std::size_t count(std::uint8_t value) const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [value](const auto& l) { return l && *l == value; }));
  }

  /// Dense 0/1 vector with unknown labels mapped to 0.
  std::vector<double> as_dense() const {
    std::vector<double> out(labels.size(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i]) out[i] = *labels[i];
    return out;
  }
};

inline LabelSet load_labels(const std::filesystem::path& path, const Graph& graph) {
  auto in = detail::open_input(path);
  LabelSet out;
  out.labels.assign(graph.num_nodes(), std::nullopt);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty() || line[0] == '#' || detail::blank(line)) continue;
    auto fields = detail::split_tab2(line);
    if (!fields) throw ParseError(path.string(), lineno, "expected 'node_id<TAB>label'");
    auto idx = graph.index_of(fields->first);
    if (!idx) throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown node id '" + fields->first + "'");
    if (fields->second != "0" && fields->second != "1") {
      throw ParseError(path.string(), lineno, "label must be 0 or 1, got '" + fields->second + "'");
    }
    const std::uint8_t value = fields->second == "1" ? 1 : 0;
    auto& slot = out.labels[*idx];
    if (slot && *slot != value) throw ParseError(path.string(), lineno, "conflicting label for '" + fields->first + "'");
    slot = value;
  }
  return out;
}

/// One document per node in index order; a node without text has "".
struct TextCorpus {
  std::vector<std::string> documents;

  std::size_t size() const { return documents.size(); }
};

/// Several lines for one id are concatenated with a single space.
inline TextCorpus load_texts(const std::filesystem::path& path, const Graph& graph) {
  auto in = detail::open_input(path);
  TextCorpus out;
  out.documents.assign(graph.num_nodes(), std::string{});
  std::vector<bool> seen(graph.num_nodes(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (detail::blank(line)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("text") ||
        !obj["text"].is_string()) {
      throw ParseError(path.string(), lineno, "expected {\"id\": string, \"text\": string}");
    }
    const auto id = obj["id"].get<std::string>();
    auto idx = graph.index_of(id);
    if (!idx) throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown node id '" + id + "'");
    auto& doc = out.documents[*idx];
    if (seen[*idx]) doc += ' ';
    doc += obj["text"].get<std::string>();
    seen[*idx] = true;
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Disjoint node-index sets, each sorted ascending.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle of the labeled nodes, then floor(N·ratio) nodes for
/// validation and test; whatever remains goes to train.
inline Split split_nodes(const LabelSet& labels, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0)) throw ConfigError("split ratios must be positive");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  auto nodes = labels.labeled();
  const std::size_t n = nodes.size();
  if (n < 3) throw DataError("need at least 3 labeled nodes to split, have " + std::to_string(n));

  Rng rng(seed);
  rng.shuffle(nodes);
  const auto take = [n](double r) { return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9)); };
  const std::size_t n_val = take(ratios.val);
  const std::size_t n_test = take(ratios.test);
  const std::size_t n_train = n - n_val - n_test;

  Split s;
  s.seed = seed;
  auto first = nodes.begin();
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(first + static_cast<std::ptrdiff_t>(n_train), first + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), nodes.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

/// Writes a self-loop line per node (in index order) followed by every
/// edge, so that reloading reproduces the node indexing exactly.
inline void write_graph(const std::filesystem::path& path, const Graph& g) {
  auto out = detail::open_output(path);
  out << "# nodes\n";
  for (const auto& id : g.node_ids()) out << id << '\t' << id << '\n';
  out << "# edges\n";
  for (auto [u, v] : g.edges()) out << g.node_id(u) << '\t' << g.node_id(v) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_labels(const std::filesystem::path& path, const Graph& g, const LabelSet& labels) {
  auto out = detail::open_output(path);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels.labels[i]) out << g.node_id(i) << '\t' << static_cast<int>(*labels.labels[i]) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_texts(const std::filesystem::path& path, const Graph& g, const TextCorpus& corpus) {
  auto out = detail::open_output(path);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.documents[i].empty()) continue;
    nlohmann::json obj{{"id", g.node_id(i)}, {"text", corpus.documents[i]}};
    out << obj.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace fusenet
