#pragma once

// Full-batch training with binary cross-entropy, early stopping on
// validation F1, and evaluation of trained models.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/error.hpp"
#include "fusenet/graph.hpp"
#include "fusenet/metrics.hpp"
#include "fusenet/models.hpp"
#include "fusenet/optim.hpp"
#include "fusenet/rng.hpp"

namespace fusenet {

struct TrainConfig {
  AdamConfig adam;
  std::size_t max_epochs = 200;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  void validate() const {
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (adam.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience > max_epochs) throw ConfigError("patience may not exceed max_epochs");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in [0,1)");
    }
    if (!(adam.eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  }
};

/// A model ready for inference or checkpointing.
struct ModelState {
  ModelVariant variant = ModelVariant::full;
  ModelDims dims;
  ParamSet params;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;      // training loss before this epoch's update
  double train_f1 = 0.0;  // after the update
  double val_f1 = 0.0;    // after the update
};

struct TrainResult {
  ModelState model;
  std::vector<EpochRecord> history;
  // late_fusion trains its two members separately; their histories land here.
  std::vector<std::pair<std::string, std::vector<EpochRecord>>> member_histories;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  Metrics train, val, test;
};

/// Mean BCE over `mask`; fills every parameter's grad buffer.
inline double loss_and_gradients(ModelVariant variant, const ModelContext& ctx, ParamSet& params,
                                 const ModelDims& dims, std::span<const double> labels,
                                 std::span<const std::size_t> mask) {
  ad::Tape tape;
  BoundParams bound(tape, params);
  ad::Var y = forward_on_tape(tape, variant, ctx, bound, dims.heads);
  ad::Var loss = ad::bce_loss(tape, y, labels, mask);
  tape.backward(loss);
  std::size_t k = 0;
  for (auto& [name, t] : params) t.set_grad(tape.grad(bound.vars()[k++]));
  return tape.value(loss)[0];
}

inline Metrics evaluate(const ModelState& model, const ModelContext& ctx, const LabelSet& labels,
                        std::span<const std::size_t> nodes, double threshold) {
  auto pred = forward(model.variant, ctx, model.params, model.dims, threshold);
  return compute_metrics(pred.labels, labels, nodes);
}

namespace detail {

inline void require_both_classes(const LabelSet& labels, std::span<const std::size_t> train) {
  std::size_t pos = 0, neg = 0;
  for (std::size_t i : train) {
    const auto& y = labels.labels.at(i);
    if (!y) throw TrainingError("training node " + std::to_string(i) + " has no label");
    (*y ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw TrainingError("training split is single-class (" + std::to_string(pos) + " positive, " +
                        std::to_string(neg) + " negative)");
  }
}

inline TrainResult train_single(ModelVariant variant, const ModelContext& ctx, const LabelSet& labels,
                                const Split& split, const ModelDims& dims, const TrainConfig& cfg) {
  TrainResult result;
  result.model.variant = variant;
  result.model.dims = dims;
  result.model.seed = cfg.seed;
  result.model.params = init_params(variant, dims, sub_seed(cfg.seed, "init"));

  const auto dense = labels.as_dense();
  // With no validation nodes, selection falls back to the training split.
  const std::span<const std::size_t> select_nodes = split.val.empty() ? std::span(split.train) : std::span(split.val);

  ParamSet& params = result.model.params;
  AdamState state = AdamState::for_params(params);
  ParamSet best = params;
  double best_f1 = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double loss = loss_and_gradients(variant, ctx, params, dims, dense, split.train);
    if (!std::isfinite(loss)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
    adam_step(params, state, cfg.adam);

    auto pred = forward(variant, ctx, params, dims, cfg.threshold);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss;
    rec.train_f1 = compute_metrics(pred.labels, labels, split.train).f1;
    rec.val_f1 = compute_metrics(pred.labels, labels, select_nodes).f1;
    result.history.push_back(rec);

    if (rec.val_f1 > best_f1) {
      best_f1 = rec.val_f1;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.epochs_run = result.history.size();
  params = std::move(best);
  for (auto& [name, t] : params) t.clear_grad();
  return result;
}

}  // namespace detail

/// Trains `variant` on the split's training nodes. The returned model is
/// the checkpoint with the highest validation F1 (earliest on ties).
/// late_fusion trains its GCN and text members independently and averages
/// their probabilities.
inline TrainResult train(ModelVariant variant, const ModelContext& ctx, const LabelSet& labels, const Split& split,
                         const ModelDims& dims, const TrainConfig& cfg) {
  cfg.validate();
  if (uses_text(variant) && !ctx.has_text()) {
    throw ConfigError(std::string("variant '") + variant_name(variant) + "' needs a text corpus");
  }
  if (labels.size() != ctx.num_nodes()) throw DataError("label count does not match graph size");
  detail::require_both_classes(labels, split.train);

  TrainResult result;
  if (variant == ModelVariant::late_fusion) {
    auto graph_part = detail::train_single(ModelVariant::gcn_only, ctx, labels, split, dims, cfg);
    auto text_part = detail::train_single(ModelVariant::text_only, ctx, labels, split, dims, cfg);
    result.model.variant = variant;
    result.model.dims = dims;
    result.model.seed = cfg.seed;
    for (auto& [name, t] : graph_part.model.params) result.model.params.add("gcn/" + name, std::move(t));
    for (auto& [name, t] : text_part.model.params) result.model.params.add("text/" + name, std::move(t));
    result.member_histories.emplace_back("gcn_only", std::move(graph_part.history));
    result.member_histories.emplace_back("text_only", std::move(text_part.history));
    result.best_epoch = std::max(graph_part.best_epoch, text_part.best_epoch);
    result.epochs_run = graph_part.epochs_run + text_part.epochs_run;
  } else {
    result = detail::train_single(variant, ctx, labels, split, dims, cfg);
  }

  auto pred = forward(result.model.variant, ctx, result.model.params, dims, cfg.threshold);
  result.train = compute_metrics(pred.labels, labels, split.train);
  result.val = compute_metrics(pred.labels, labels, split.val);
  result.test = compute_metrics(pred.labels, labels, split.test);
  return result;
}

}  // namespace fusenet
