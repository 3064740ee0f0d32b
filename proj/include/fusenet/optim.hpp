#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fusenet/error.hpp"
#include "fusenet/models.hpp"

namespace fusenet {

struct AdamConfig {
  double lr = 0.01;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamSet& params) {
    AdamState s;
    for (const auto& [name, t] : params) {
      s.m.emplace_back(t.size(), 0.0);
      s.v.emplace_back(t.size(), 0.0);
    }
    return s;
  }
};

/// Bias-corrected Adam with decoupled weight decay: each parameter first
/// shrinks by lr·wd·p, then takes the Adam step. Gradients are read from
/// each tensor's grad buffer.
inline void adam_step(ParamSet& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  std::size_t k = 0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    if (state.m[k].size() != t.size()) throw ContractError("adam_step: moment shape mismatch for '" + name + "'");
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter '" + name + "'");
    }
    ++k;
  }
  ++state.step;
  const double t_step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t_step);
  const double c2 = 1.0 - std::pow(cfg.beta2, t_step);
  k = 0;
  for (auto& [name, t] : params) {
    auto& p = t.values();
    const auto& g = t.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    ++k;
  }
}

}  // namespace fusenet
