#pragma once

// Run configuration: one JSON file that names the dataset, the embedding
// provider, model sizes, training settings, and a single seed.
//
//   {
//     "seed": 7,
//     "data":     {"edges": "edges.tsv", "labels": "labels.tsv",
//                  "texts": "texts.jsonl", "embeddings": "emb.jsonl"},
//     "provider": {"kind": "hashing", "dim": 64, "endpoint": "...",
//                  "batch": 64, "timeout_ms": 30000, "max_retries": 3},
//     "model":    {"variant": "full", "d_in": 16, "heads": 4, "d_head": 8,
//                  "d_graph": 32, "d_fuse": 32, "d_mlp": 32},
//     "train":    {"lr": 0.01, "weight_decay": 5e-4, "max_epochs": 200,
//                  "patience": 20, "threshold": 0.5,
//                  "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
//     "split":    {"train": 0.8, "val": 0.1, "test": 0.1},
//     "synth":    {... generator settings ...},
//     "out": "out"
//   }
//
// Every section is optional. Relative data paths resolve against the
// directory holding the config file. Randomness derives from `seed` through
// the named sub-seeds "split", "init" and "synthgen".

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fusenet/checkpoint.hpp"
#include "fusenet/error.hpp"
#include "fusenet/graph.hpp"
#include "fusenet/models.hpp"
#include "fusenet/rng.hpp"
#include "fusenet/synthgen.hpp"
#include "fusenet/text_embed.hpp"
#include "fusenet/train.hpp"

namespace fusenet {

struct DataPaths {
  std::filesystem::path edges;
  std::filesystem::path labels;
  std::filesystem::path texts;       // optional
  std::filesystem::path embeddings;  // precomputed provider only
};

struct RunConfig {
  std::uint64_t seed = 1;
  DataPaths data;
  ProviderConfig provider;
  ModelVariant variant = ModelVariant::full;
  ModelDims dims;
  TrainConfig train;
  SplitRatios split;
  SynthConfig synth;
  std::filesystem::path out = "out";

  std::uint64_t split_seed() const { return sub_seed(seed, "split"); }
  std::uint64_t synth_seed() const { return sub_seed(seed, "synthgen"); }

  /// Synth settings with the seed taken from the run seed.
  SynthConfig seeded_synth() const {
    SynthConfig c = synth;
    c.seed = synth_seed();
    return c;
  }

  TrainConfig seeded_train() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json data{{"edges", c.data.edges.string()},
                      {"labels", c.data.labels.string()},
                      {"texts", c.data.texts.string()},
                      {"embeddings", c.data.embeddings.string()}};
  nlohmann::json provider{{"kind", provider_name(c.provider.kind)},
                          {"dim", c.provider.dim},
                          {"endpoint", c.provider.endpoint},
                          {"batch", c.provider.batch},
                          {"timeout_ms", c.provider.timeout.count()},
                          {"backoff_ms", c.provider.backoff.count()},
                          {"max_retries", c.provider.max_retries}};
  nlohmann::json model = to_json(c.dims);
  model.erase("num_nodes");
  model.erase("d_text");
  model["variant"] = variant_name(c.variant);
  nlohmann::json train{{"lr", c.train.adam.lr},
                       {"weight_decay", c.train.adam.weight_decay},
                       {"beta1", c.train.adam.beta1},
                       {"beta2", c.train.adam.beta2},
                       {"eps", c.train.adam.eps},
                       {"max_epochs", c.train.max_epochs},
                       {"patience", c.train.patience},
                       {"threshold", c.train.threshold}};
  nlohmann::json split{{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
  nlohmann::json synth = to_json(c.synth);
  synth.erase("seed");
  return nlohmann::json{{"seed", c.seed},   {"data", data},   {"provider", provider}, {"model", model},
                        {"train", train},   {"split", split}, {"synth", synth},       {"out", c.out.string()}};
}

/// FNV-1a 64 of the canonical JSON echo, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) { return detail::hex64(fnv1a64(to_json(c).dump())); }

/// `base_dir` anchors relative paths.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("out")) c.out = detail::resolve(base_dir, j["out"].get<std::string>());

    if (const auto it = j.find("data"); it != j.end()) {
      c.data.edges = detail::resolve(base_dir, it->value("edges", std::string()));
      c.data.labels = detail::resolve(base_dir, it->value("labels", std::string()));
      c.data.texts = detail::resolve(base_dir, it->value("texts", std::string()));
      c.data.embeddings = detail::resolve(base_dir, it->value("embeddings", std::string()));
    }

    if (const auto it = j.find("provider"); it != j.end()) {
      if (it->is_string()) {
        c.provider.kind = parse_provider_kind(it->get<std::string>());
      } else {
        c.provider.kind = parse_provider_kind(it->value("kind", std::string("hashing")));
        c.provider.dim = it->value("dim", c.provider.dim);
        c.provider.endpoint = it->value("endpoint", c.provider.endpoint);
        c.provider.batch = it->value("batch", c.provider.batch);
        c.provider.timeout = std::chrono::milliseconds(it->value("timeout_ms", c.provider.timeout.count()));
        c.provider.backoff = std::chrono::milliseconds(it->value("backoff_ms", c.provider.backoff.count()));
        c.provider.max_retries = it->value("max_retries", c.provider.max_retries);
      }
    }
    c.provider.path = c.data.embeddings;

    if (const auto it = j.find("model"); it != j.end()) {
      if (it->contains("variant")) c.variant = parse_variant((*it)["variant"].get<std::string>());
      c.dims = dims_from_json(*it, c.dims);
    }

    if (const auto it = j.find("train"); it != j.end()) {
      c.train.adam.lr = it->value("lr", c.train.adam.lr);
      c.train.adam.weight_decay = it->value("weight_decay", c.train.adam.weight_decay);
      c.train.adam.beta1 = it->value("beta1", c.train.adam.beta1);
      c.train.adam.beta2 = it->value("beta2", c.train.adam.beta2);
      c.train.adam.eps = it->value("eps", c.train.adam.eps);
      c.train.max_epochs = it->value("max_epochs", c.train.max_epochs);
      c.train.patience = it->value("patience", c.train.patience);
      c.train.threshold = it->value("threshold", c.train.threshold);
    }

    if (const auto it = j.find("split"); it != j.end()) {
      c.split.train = it->value("train", c.split.train);
      c.split.val = it->value("val", c.split.val);
      c.split.test = it->value("test", c.split.test);
    }

    if (const auto it = j.find("synth"); it != j.end()) c.synth = synth_config_from_json(*it, c.synth);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
  c.dims.d_text = c.provider.dim;
  c.train.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

/// Everything the training commands need, loaded and embedded.
struct Dataset {
  Graph graph;
  LabelSet labels;
  std::optional<TextCorpus> corpus;
  std::optional<EmbeddingMatrix> embeddings;
};

namespace detail {

inline void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("config names no ") + what + " file");
  if (!std::filesystem::is_regular_file(p)) throw DataError(std::string(what) + " file not found: " + p.string());
}

}  // namespace detail

/// Loads graph and labels, plus texts and embeddings when the configured
/// provider can supply them. `need_text` makes a missing text source fatal.
inline Dataset load_dataset(const RunConfig& cfg, bool need_text) {
  detail::require_file(cfg.data.edges, "edges");
  detail::require_file(cfg.data.labels, "labels");
  Dataset ds;
  ds.graph = load_graph(cfg.data.edges);
  ds.labels = load_labels(cfg.data.labels, ds.graph);

  const bool precomputed = cfg.provider.kind == ProviderKind::precomputed;
  const bool have_source = precomputed ? !cfg.data.embeddings.empty() : !cfg.data.texts.empty();
  if (!have_source && !need_text) return ds;

  cfg.provider.validate();
  if (precomputed) {
    detail::require_file(cfg.data.embeddings, "embeddings");
    ds.embeddings = load_precomputed(cfg.data.embeddings, ds.graph, cfg.provider.dim);
  } else {
    detail::require_file(cfg.data.texts, "texts");
    ds.corpus = load_texts(cfg.data.texts, ds.graph);
    ds.embeddings = embed_corpus(ds.graph, *ds.corpus, cfg.provider);
  }
  return ds;
}

inline ModelDims dims_for(const RunConfig& cfg, const Dataset& ds) {
  ModelDims d = cfg.dims;
  d.num_nodes = ds.graph.num_nodes();
  d.d_text = ds.embeddings ? ds.embeddings->dim : cfg.provider.dim;
  return d;
}

inline ModelContext context_for(const Dataset& ds) {
  if (ds.embeddings) return ModelContext(ds.graph, *ds.embeddings);
  return ModelContext(ds.graph, std::nullopt);
}

}  // namespace fusenet
