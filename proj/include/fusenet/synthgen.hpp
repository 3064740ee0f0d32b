#pragma once

// Seeded synthetic criminal networks with independently plantable
// structural and textual crime signals.
//
//   graph   stochastic block model over contiguous communities
//   s_i     community mode: a N(0,1) level per community, z-scored over
//           nodes; degree mode: within-community edge count, z-scored
//           inside each community
//   u_i     uniform on [-√3, √3] (zero mean, unit variance)
//   r_i     α·s_i + β·u_i + σ·ε_i,   ε_i ~ N(0,1)
//   labels  the floor(prevalence·N) nodes with the largest r_i
//   texts   tokens drawn from a neutral vocabulary, except that each token
//           comes from the crime lexicon with probability
//           base_rate·(1 + boost·(u_i+√3)/(2√3))

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusenet/error.hpp"
#include "fusenet/graph.hpp"
#include "fusenet/rng.hpp"
#include "fusenet/text_embed.hpp"

namespace fusenet {

/// How the latent structural score s_i is derived from the graph.
enum class StructuralSignal {
  degree,     // within-community edge count, z-scored per community
  community,  // one N(0,1) draw per community, shared by its members
};

inline const char* structural_signal_name(StructuralSignal s) {
  return s == StructuralSignal::degree ? "degree" : "community";
}

inline StructuralSignal parse_structural_signal(std::string_view s) {
  if (s == "degree") return StructuralSignal::degree;
  if (s == "community") return StructuralSignal::community;
  throw ConfigError("unknown structural signal '" + std::string(s) + "'");
}

struct SynthConfig {
  std::size_t num_nodes = 300;
  std::size_t num_communities = 10;
  double p_intra = 0.4;
  double p_inter = 0.005;
  double prevalence = 0.3;
  double alpha = 1.0;  // structural signal weight
  double beta = 1.0;   // textual signal weight
  double noise = 0.3;
  std::size_t lexicon_size = 2;
  double lexicon_base_rate = 0.05;
  double emission_boost = 4.0;
  std::size_t vocab_size = 500;
  std::size_t doc_length = 400;
  StructuralSignal structural = StructuralSignal::community;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_nodes < 3) throw ConfigError("synth: need at least 3 nodes");
    if (num_communities == 0 || num_communities > num_nodes) throw ConfigError("synth: bad community count");
    for (double p : {p_intra, p_inter, lexicon_base_rate}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: probabilities must lie in [0,1]");
    }
    if (!(alpha >= 0.0 && beta >= 0.0 && noise >= 0.0)) throw ConfigError("synth: alpha, beta, noise must be >= 0");
    if (!(prevalence > 0.0 && prevalence < 1.0)) throw ConfigError("synth: prevalence must lie in (0,1)");
    if (emission_boost < 0.0) throw ConfigError("synth: emission boost must be >= 0");
    if (vocab_size == 0 || lexicon_size == 0) throw ConfigError("synth: vocabulary and lexicon must be non-empty");
    const auto k = static_cast<std::size_t>(std::floor(prevalence * static_cast<double>(num_nodes) + 1e-9));
    if (k == 0) throw ConfigError("synth: prevalence implies an empty positive class");
    if (k >= num_nodes) throw ConfigError("synth: prevalence implies an empty negative class");
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return nlohmann::json{{"num_nodes", c.num_nodes},
                        {"num_communities", c.num_communities},
                        {"p_intra", c.p_intra},
                        {"p_inter", c.p_inter},
                        {"prevalence", c.prevalence},
                        {"alpha", c.alpha},
                        {"beta", c.beta},
                        {"noise", c.noise},
                        {"lexicon_size", c.lexicon_size},
                        {"lexicon_base_rate", c.lexicon_base_rate},
                        {"emission_boost", c.emission_boost},
                        {"vocab_size", c.vocab_size},
                        {"doc_length", c.doc_length},
                        {"structural_signal", structural_signal_name(c.structural)},
                        {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  try {
    c.num_nodes = j.value("num_nodes", c.num_nodes);
    c.num_communities = j.value("num_communities", c.num_communities);
    c.p_intra = j.value("p_intra", c.p_intra);
    c.p_inter = j.value("p_inter", c.p_inter);
    c.prevalence = j.value("prevalence", c.prevalence);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.noise = j.value("noise", c.noise);
    c.lexicon_size = j.value("lexicon_size", c.lexicon_size);
    c.lexicon_base_rate = j.value("lexicon_base_rate", c.lexicon_base_rate);
    c.emission_boost = j.value("emission_boost", c.emission_boost);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.doc_length = j.value("doc_length", c.doc_length);
    c.seed = j.value("seed", c.seed);
    if (j.contains("structural_signal")) c.structural = parse_structural_signal(j["structural_signal"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return c;
}

/// Hidden quantities behind a generated dataset.
struct SynthLatent {
  std::vector<std::size_t> community;
  std::vector<double> structural;  // s_i
  std::vector<double> textual;     // u_i
  std::vector<double> propensity;  // r_i
};

struct SynthDataset {
  SynthConfig config;
  Graph graph;
  TextCorpus corpus;
  LabelSet labels;
  SynthLatent latent;
};

inline std::string lexicon_token(std::size_t k) { return "lex" + std::to_string(k); }
inline std::string vocab_token(std::size_t k) { return "tok" + std::to_string(k); }
inline bool is_lexicon_token(std::string_view t) { return t.substr(0, 3) == "lex"; }

inline SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_nodes;
  SynthDataset ds;
  ds.config = cfg;
  auto& lat = ds.latent;

  lat.community.resize(n);
  for (std::size_t i = 0; i < n; ++i) lat.community[i] = i * cfg.num_communities / n;

  Rng graph_rng(sub_seed(cfg.seed, "graph"));
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> intra(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = lat.community[i] == lat.community[j];
      if (graph_rng.uniform() < (same ? cfg.p_intra : cfg.p_inter)) {
        edges.emplace_back(i, j);
        if (same) {
          intra[i] += 1.0;
          intra[j] += 1.0;
        }
      }
    }
  }
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "v" + std::to_string(i);
  ds.graph = Graph::from_edges(std::move(ids), edges);

  lat.structural.assign(n, 0.0);
  if (cfg.structural == StructuralSignal::degree) {
    // z-score the intra-community degree inside each community
    for (std::size_t c = 0; c < cfg.num_communities; ++c) {
      double sum = 0.0, sq = 0.0, cnt = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (lat.community[i] != c) continue;
        sum += intra[i];
        cnt += 1.0;
      }
      const double mean = sum / cnt;
      for (std::size_t i = 0; i < n; ++i)
        if (lat.community[i] == c) sq += (intra[i] - mean) * (intra[i] - mean);
      const double sd = std::sqrt(sq / cnt);
      for (std::size_t i = 0; i < n; ++i)
        if (lat.community[i] == c) lat.structural[i] = sd > 0.0 ? (intra[i] - mean) / sd : 0.0;
    }
  } else {
    Rng community_rng(sub_seed(cfg.seed, "community"));
    std::vector<double> level(cfg.num_communities);
    for (auto& v : level) v = community_rng.normal();
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += level[lat.community[i]];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) sq += (level[lat.community[i]] - mean) * (level[lat.community[i]] - mean);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) lat.structural[i] = sd > 0.0 ? (level[lat.community[i]] - mean) / sd : 0.0;
  }

  const double half_width = std::sqrt(3.0);
  Rng latent_rng(sub_seed(cfg.seed, "latent"));
  lat.textual.resize(n);
  for (auto& u : lat.textual) u = latent_rng.uniform(-half_width, half_width);
  Rng noise_rng(sub_seed(cfg.seed, "noise"));
  lat.propensity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    lat.propensity[i] = cfg.alpha * lat.structural[i] + cfg.beta * lat.textual[i] + cfg.noise * noise_rng.normal();
  }

  const auto k = static_cast<std::size_t>(std::floor(cfg.prevalence * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lat.propensity[a] > lat.propensity[b]; });
  ds.labels.labels.assign(n, std::uint8_t{0});
  for (std::size_t r = 0; r < k; ++r) ds.labels.labels[order[r]] = 1;

  Rng text_rng(sub_seed(cfg.seed, "text"));
  ds.corpus.documents.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u01 = (lat.textual[i] + half_width) / (2.0 * half_width);
    const double q = std::min(1.0, cfg.lexicon_base_rate * (1.0 + cfg.emission_boost * u01));
    std::string doc;
    for (std::size_t t = 0; t < cfg.doc_length; ++t) {
      if (t) doc += ' ';
      if (text_rng.uniform() < q) {
        doc += lexicon_token(text_rng.below(cfg.lexicon_size));
      } else {
        doc += vocab_token(text_rng.below(cfg.vocab_size));
      }
    }
    ds.corpus.documents[i] = std::move(doc);
  }
  return ds;
}

struct SynthSummary {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::size_t positives = 0;
  double prevalence = 0.0;
  double mean_degree = 0.0;
  double mean_intra_degree = 0.0;
  double lexicon_rate_positive = 0.0;  // lexicon tokens / all tokens, per class
  double lexicon_rate_negative = 0.0;
};

inline SynthSummary describe(const SynthDataset& ds) {
  SynthSummary s;
  const auto& g = ds.graph;
  s.num_nodes = g.num_nodes();
  s.num_edges = g.edges().size();
  s.positives = ds.labels.count(1);
  s.prevalence = static_cast<double>(s.positives) / static_cast<double>(s.num_nodes);
  s.mean_degree = 2.0 * static_cast<double>(s.num_edges) / static_cast<double>(s.num_nodes);
  std::size_t intra = 0;
  for (auto [u, v] : g.edges())
    if (ds.latent.community[u] == ds.latent.community[v]) ++intra;
  s.mean_intra_degree = 2.0 * static_cast<double>(intra) / static_cast<double>(s.num_nodes);

  double hits[2] = {0, 0}, total[2] = {0, 0};
  for (std::size_t i = 0; i < s.num_nodes; ++i) {
    const int cls = ds.labels.labels[i].value_or(0) ? 1 : 0;
    for (const auto& tok : tokenize(ds.corpus.documents[i])) {
      total[cls] += 1.0;
      if (is_lexicon_token(tok)) hits[cls] += 1.0;
    }
  }
  s.lexicon_rate_positive = total[1] > 0 ? hits[1] / total[1] : 0.0;
  s.lexicon_rate_negative = total[0] > 0 ? hits[0] / total[0] : 0.0;
  return s;
}

inline nlohmann::json to_json(const SynthSummary& s) {
  return nlohmann::json{{"num_nodes", s.num_nodes},
                        {"num_edges", s.num_edges},
                        {"positives", s.positives},
                        {"prevalence", s.prevalence},
                        {"mean_degree", s.mean_degree},
                        {"mean_intra_degree", s.mean_intra_degree},
                        {"lexicon_rate_positive", s.lexicon_rate_positive},
                        {"lexicon_rate_negative", s.lexicon_rate_negative}};
}

}  // namespace fusenet
