#pragma once

// Benchmark and ablation harness: train a list of variants on one shared
// split and report their metrics as JSON and as an aligned text table.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusenet/graph.hpp"
#include "fusenet/metrics.hpp"
#include "fusenet/models.hpp"
#include "fusenet/train.hpp"

namespace fusenet {

inline constexpr ModelVariant kBenchVariants[] = {ModelVariant::gcn_only, ModelVariant::gat_only,
                                                  ModelVariant::text_only, ModelVariant::late_fusion,
                                                  ModelVariant::full};
inline constexpr ModelVariant kAblationVariants[] = {ModelVariant::full, ModelVariant::no_text,
                                                     ModelVariant::no_graph};

inline const char* display_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::full: return "Fused (GAT+text)";
    case ModelVariant::no_text: return "Fused w/o text";
    case ModelVariant::no_graph: return "Fused w/o graph";
    case ModelVariant::gcn_only: return "GCN";
    case ModelVariant::gat_only: return "GAT";
    case ModelVariant::text_only: return "Text only";
    case ModelVariant::late_fusion: return "Late fusion (GCN+text)";
  }
  return "?";
}

struct ReportRow {
  ModelVariant variant;
  TrainResult result;
};

struct Report {
  std::string kind;  // "bench" or "ablation"
  std::uint64_t seed = 0;
  nlohmann::json config;  // echoed verbatim
  std::vector<ReportRow> rows;

  const ReportRow& row(ModelVariant v) const {
    for (const auto& r : rows)
      if (r.variant == v) return r;
    throw ContractError(std::string("report has no row for ") + variant_name(v));
  }
  double test_f1(ModelVariant v) const { return row(v).result.test.f1; }

  /// Variants ordered by test F1, best first; ties keep table order.
  std::vector<ModelVariant> ranking() const {
    std::vector<ModelVariant> order;
    for (const auto& r : rows) order.push_back(r.variant);
    std::stable_sort(order.begin(), order.end(),
                     [&](ModelVariant a, ModelVariant b) { return test_f1(a) > test_f1(b); });
    return order;
  }
};

/// Trains every variant with the same seed and split, one after another.
inline Report run_variants(std::string kind, std::span<const ModelVariant> variants, const ModelContext& ctx,
                           const LabelSet& labels, const Split& split, const ModelDims& dims,
                           const TrainConfig& cfg, nlohmann::json config_echo = nlohmann::json::object()) {
  Report rep;
  rep.kind = std::move(kind);
  rep.seed = cfg.seed;
  rep.config = std::move(config_echo);
  for (ModelVariant v : variants) rep.rows.push_back({v, train(v, ctx, labels, split, dims, cfg)});
  return rep;
}

inline Report run_bench(const ModelContext& ctx, const LabelSet& labels, const Split& split, const ModelDims& dims,
                        const TrainConfig& cfg, nlohmann::json config_echo = nlohmann::json::object()) {
  return run_variants("bench", kBenchVariants, ctx, labels, split, dims, cfg, std::move(config_echo));
}

inline Report run_ablation(const ModelContext& ctx, const LabelSet& labels, const Split& split,
                           const ModelDims& dims, const TrainConfig& cfg,
                           nlohmann::json config_echo = nlohmann::json::object()) {
  return run_variants("ablation", kAblationVariants, ctx, labels, split, dims, cfg, std::move(config_echo));
}

inline nlohmann::json to_json(const EpochRecord& e) {
  return nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"train_f1", e.train_f1}, {"val_f1", e.val_f1}};
}

inline nlohmann::json history_json(const std::vector<EpochRecord>& h) {
  auto arr = nlohmann::json::array();
  for (const auto& e : h) arr.push_back(to_json(e));
  return arr;
}

inline nlohmann::json to_json(const TrainResult& r) {
  nlohmann::json j{{"variant", variant_name(r.model.variant)},
                   {"best_epoch", r.best_epoch},
                   {"epochs_run", r.epochs_run},
                   {"train", to_json(r.train)},
                   {"val", to_json(r.val)},
                   {"test", to_json(r.test)},
                   {"history", history_json(r.history)}};
  if (!r.member_histories.empty()) {
    nlohmann::json members = nlohmann::json::object();
    for (const auto& [name, h] : r.member_histories) members[name] = history_json(h);
    j["member_histories"] = members;
  }
  return j;
}

/// Current UTC time as ISO-8601.
inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// The timestamp is the only field that differs between identical runs.
inline nlohmann::json to_json(const Report& rep, const std::string& generated_at) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    auto j = to_json(r.result);
    j["name"] = display_name(r.variant);
    rows.push_back(std::move(j));
  }
  nlohmann::json ranking = nlohmann::json::array();
  for (auto v : rep.ranking()) ranking.push_back(variant_name(v));
  return nlohmann::json{{"kind", rep.kind},  {"seed", rep.seed},       {"config", rep.config},
                        {"results", rows},   {"ranking", ranking},     {"generated_at", generated_at}};
}

inline std::string format_table(const Report& rep) {
  std::size_t name_w = 5;
  for (const auto& r : rep.rows) name_w = std::max(name_w, std::string(display_name(r.variant)).size());
  std::ostringstream out;
  const auto cell = [&out](const std::string& s, std::size_t w) { out << std::left << std::setw(static_cast<int>(w)) << s; };
  cell("Model", name_w + 2);
  out << std::right << std::setw(10) << "Precision" << std::setw(10) << "Recall" << std::setw(10) << "F1"
      << std::setw(10) << "Val F1" << std::setw(8) << "Epochs" << '\n';
  out << std::string(name_w + 2 + 48, '-') << '\n';
  for (const auto& r : rep.rows) {
    cell(display_name(r.variant), name_w + 2);
    out << std::right << std::fixed << std::setprecision(4) << std::setw(10) << r.result.test.precision
        << std::setw(10) << r.result.test.recall << std::setw(10) << r.result.test.f1 << std::setw(10)
        << r.result.val.f1 << std::setw(8) << r.result.epochs_run << '\n';
  }
  return out.str();
}

}  // namespace fusenet
