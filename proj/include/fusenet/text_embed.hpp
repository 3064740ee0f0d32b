#pragma once

// Node text embeddings. Three interchangeable providers fill the same
// N×d matrix: a precomputed JSON-lines file, an offline feature-hashing
// embedder, and a remote transformer service reached over HTTP.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fusenet/error.hpp"
#include "fusenet/graph.hpp"
#include "fusenet/rng.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<double> values;  // row-major, num_rows × dim
  std::string source;

  std::size_t num_rows() const { return dim == 0 ? 0 : values.size() / dim; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * dim, dim);
  }

  Tensor to_tensor() const { return Tensor({num_rows(), dim}, values); }
};

enum class ProviderKind { precomputed, hashing, remote };

inline const char* provider_name(ProviderKind k) {
  switch (k) {
    case ProviderKind::precomputed: return "precomputed";
    case ProviderKind::hashing: return "hashing";
    case ProviderKind::remote: return "remote";
  }
  return "unknown";
}

inline ProviderKind parse_provider_kind(std::string_view s) {
  if (s == "precomputed") return ProviderKind::precomputed;
  if (s == "hashing") return ProviderKind::hashing;
  if (s == "remote") return ProviderKind::remote;
  throw ConfigError("unknown provider kind '" + std::string(s) + "'");
}

struct ProviderConfig {
  ProviderKind kind = ProviderKind::hashing;
  std::size_t dim = 64;
  std::filesystem::path path;  // precomputed
  std::string endpoint;        // remote, e.g. http://127.0.0.1:8080
  std::size_t batch = 64;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds backoff{250};
  int max_retries = 3;
  std::size_t max_in_flight = 4;

  void validate() const {
    if (dim == 0) throw ConfigError("provider dim must be positive");
    if (kind == ProviderKind::remote) {
      if (batch < 1 || batch > 64) throw ConfigError("remote batch size must lie in [1, 64]");
      if (endpoint.empty()) throw ConfigError("remote provider needs an endpoint URL");
      if (max_in_flight < 1 || max_in_flight > 4) throw ConfigError("remote in-flight chunks must lie in [1, 4]");
    }
    if (kind == ProviderKind::precomputed && path.empty()) {
      throw ConfigError("precomputed provider needs an embedding file path");
    }
  }
};

/// Lowercased maximal runs of ASCII alphanumerics; bytes >= 0x80 are kept
/// inside tokens so UTF-8 words survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// Signed feature hashing: token → FNV-1a bucket (h mod dim) with the sign
/// taken from bit 63, term counts accumulated, then L2-normalized.
inline std::vector<double> hash_embed(std::string_view text, std::size_t dim) {
  if (dim == 0) throw ContractError("hash_embed: dim must be positive");
  std::vector<double> v(dim, 0.0);
  for (const auto& tok : tokenize(text)) {
    const std::uint64_t h = fnv1a64(tok);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq > 0.0) {
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
  }
  return v;
}

/// Precomputed file: JSON lines {"id": "<node>", "vec": [d reals]}.
/// Nodes absent from the file get the zero vector.
inline EmbeddingMatrix load_precomputed(const std::filesystem::path& path, const Graph& graph, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  EmbeddingMatrix m{dim, std::vector<double>(graph.num_nodes() * dim, 0.0), "precomputed"};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::blank(line)) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("vec") ||
        !obj["vec"].is_array()) {
      throw ParseError(path.string(), lineno, "expected {\"id\": string, \"vec\": [numbers]}");
    }
    const auto id = obj["id"].get<std::string>();
    auto idx = graph.index_of(id);
    if (!idx) throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown node id '" + id + "'");
    const auto& vec = obj["vec"];
    if (vec.size() != dim) {
      throw ContractError(path.string() + ":" + std::to_string(lineno) + ": vector has " +
                          std::to_string(vec.size()) + " entries, configured dim is " + std::to_string(dim));
    }
    for (std::size_t k = 0; k < dim; ++k) {
      if (!vec[k].is_number()) throw ParseError(path.string(), lineno, "non-numeric vector entry");
      const double x = vec[k].get<double>();
      if (!std::isfinite(x)) throw ParseError(path.string(), lineno, "non-finite vector entry");
      m.values[*idx * dim + k] = x;
    }
  }
  return m;
}

inline void write_embeddings(const std::filesystem::path& path, const Graph& graph, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < m.num_rows(); ++i) {
    auto r = m.row(i);
    nlohmann::json obj{{"id", graph.node_id(i)}, {"vec", std::vector<double>(r.begin(), r.end())}};
    out << obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace detail {

/// "http://host:port/prefix" → ("http://host:port", "/prefix").
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', start);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

struct ChunkResult {
  std::vector<std::vector<double>> rows;
  std::size_t dim = 0;
};

inline ChunkResult post_chunk(const ProviderConfig& cfg, std::span<const std::string> texts) {
  const auto [base, prefix] = split_endpoint(cfg.endpoint);
  const std::string body = nlohmann::json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump(
      -1, ' ', false, nlohmann::json::error_handler_t::replace);

  int last_status = 0;
  std::string last_error;
  auto delay = cfg.backoff;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client cli(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout).count();
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout).count() % 1000000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    auto res = cli.Post(prefix + "/embed", body, "application/json");
    if (!res) {
      last_status = 0;
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    nlohmann::json payload;
    try {
      payload = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
      throw ContractError("embed service returned malformed JSON");
    }
    if (!payload.is_object() || !payload.contains("embeddings") || !payload["embeddings"].is_array() ||
        !payload.contains("dim") || !payload["dim"].is_number_integer()) {
      throw ContractError("embed service response lacks 'embeddings'/'dim'");
    }
    ChunkResult out;
    out.dim = payload["dim"].get<std::size_t>();
    const auto& rows = payload["embeddings"];
    if (rows.size() != texts.size()) {
      throw ContractError("embed service returned " + std::to_string(rows.size()) + " rows for " +
                          std::to_string(texts.size()) + " texts");
    }
    for (const auto& r : rows) {
      if (!r.is_array() || r.size() != out.dim) throw ContractError("embed service row length differs from 'dim'");
      out.rows.push_back(r.get<std::vector<double>>());
    }
    return out;
  }
  throw TransportError("embed request to " + cfg.endpoint + " failed after " + std::to_string(cfg.max_retries) +
                           " retries: " + last_error,
                       last_status);
}

}  // namespace detail

/// Embeds texts through the remote service in chunks of at most
/// cfg.batch, keeping at most cfg.max_in_flight chunks outstanding.
/// Output order matches input order.
inline std::vector<std::vector<double>> remote_embed_batch(std::span<const std::string> texts,
                                                           const ProviderConfig& cfg) {
  if (cfg.batch < 1 || cfg.batch > 64) throw ContractError("remote batch size must lie in [1, 64]");
  std::vector<std::vector<double>> out;
  if (texts.empty()) return out;

  std::vector<std::span<const std::string>> chunks;
  for (std::size_t off = 0; off < texts.size(); off += cfg.batch) {
    chunks.push_back(texts.subspan(off, std::min(cfg.batch, texts.size() - off)));
  }
  const std::size_t depth = std::clamp<std::size_t>(cfg.max_in_flight, 1, 4);
  std::optional<std::size_t> dim;
  for (std::size_t wave = 0; wave < chunks.size(); wave += depth) {
    std::vector<std::future<detail::ChunkResult>> pending;
    for (std::size_t c = wave; c < std::min(wave + depth, chunks.size()); ++c) {
      pending.push_back(std::async(std::launch::async, detail::post_chunk, std::cref(cfg), chunks[c]));
    }
    for (auto& f : pending) {
      auto res = f.get();
      if (dim && *dim != res.dim) {
        throw ContractError("embed service dim changed between chunks (" + std::to_string(*dim) + " vs " +
                            std::to_string(res.dim) + ")");
      }
      dim = res.dim;
      for (auto& r : res.rows) out.push_back(std::move(r));
    }
  }
  return out;
}

/// GET /health → reported dim.
inline std::size_t remote_health(const ProviderConfig& cfg) {
  const auto [base, prefix] = detail::split_endpoint(cfg.endpoint);
  httplib::Client cli(base);
  auto res = cli.Get(prefix + "/health");
  if (!res) throw TransportError("health check on " + cfg.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError("health check returned HTTP " + std::to_string(res->status), res->status);
  try {
    auto j = nlohmann::json::parse(res->body);
    return j.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw ContractError("health response lacks 'dim'");
  }
}

/// One row per graph node in index order. Nodes with empty text map to
/// the zero vector under the hashing and remote providers.
inline EmbeddingMatrix embed_corpus(const Graph& graph, const TextCorpus& corpus, const ProviderConfig& cfg) {
  cfg.validate();
  if (corpus.size() != graph.num_nodes() && cfg.kind != ProviderKind::precomputed) {
    throw ContractError("corpus has " + std::to_string(corpus.size()) + " documents for " +
                        std::to_string(graph.num_nodes()) + " nodes");
  }
  const std::size_t n = graph.num_nodes();
  switch (cfg.kind) {
    case ProviderKind::precomputed:
      return load_precomputed(cfg.path, graph, cfg.dim);
    case ProviderKind::hashing: {
      EmbeddingMatrix m{cfg.dim, std::vector<double>(n * cfg.dim, 0.0), "hashing"};
      for (std::size_t i = 0; i < n; ++i) {
        auto v = hash_embed(corpus.documents[i], cfg.dim);
        std::copy(v.begin(), v.end(), m.values.begin() + static_cast<std::ptrdiff_t>(i * cfg.dim));
      }
      return m;
    }
    case ProviderKind::remote: {
      std::vector<std::size_t> nodes;
      std::vector<std::string> texts;
      for (std::size_t i = 0; i < n; ++i) {
        if (corpus.documents[i].empty()) continue;
        nodes.push_back(i);
        texts.push_back(corpus.documents[i]);
      }
      auto rows = remote_embed_batch(texts, cfg);
      EmbeddingMatrix m{cfg.dim, std::vector<double>(n * cfg.dim, 0.0), "remote:" + cfg.endpoint};
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() != cfg.dim) {
          throw ContractError("remote provider returned dim " + std::to_string(rows[k].size()) +
                              ", configured dim is " + std::to_string(cfg.dim));
        }
        std::copy(rows[k].begin(), rows[k].end(), m.values.begin() + static_cast<std::ptrdiff_t>(nodes[k] * cfg.dim));
      }
      return m;
    }
  }
  throw ConfigError("unhandled provider kind");
}

}  // namespace fusenet
