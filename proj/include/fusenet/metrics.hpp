#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fusenet/graph.hpp"
#include "fusenet/models.hpp"

namespace fusenet {

/// Positive-class (crime = 1) confusion statistics over a node set.
struct Metrics {
  std::size_t count = 0;
  std::size_t positives = 0;  // labeled positives in the set
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.count = tp + fp + fn + tn;
  m.positives = tp + fn;
  const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = (m.precision + m.recall) == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.accuracy = ratio(tp + tn, m.count);
  return m;
}

/// Unknown labels inside `nodes` are skipped.
inline Metrics compute_metrics(std::span<const std::uint8_t> predicted, const LabelSet& labels,
                               std::span<const std::size_t> nodes) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i : nodes) {
    const auto& y = labels.labels.at(i);
    if (!y) continue;
    const bool pred = predicted[i] != 0;
    const bool truth = *y != 0;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

inline nlohmann::json to_json(const Metrics& m) {
  return nlohmann::json{{"count", m.count},         {"positives", m.positives}, {"tp", m.tp},
                        {"fp", m.fp},               {"fn", m.fn},               {"tn", m.tn},
                        {"precision", m.precision}, {"recall", m.recall},       {"f1", m.f1},
                        {"accuracy", m.accuracy}};
}

}  // namespace fusenet
