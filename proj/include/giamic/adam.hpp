#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "giamic/errors.hpp"
#include "giamic/params.hpp"

namespace giamic {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;  // first moments, one per parameter
  std::vector<std::vector<double>> v;  // second moments
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter in the store.
/// Moments are kept in double regardless of the parameter precision.
template <typename T>
void adam_step(ParamStore<T>& store, AdamState& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0)) throw ConfigError("adam: learning rate must be positive");
  const auto& entries = store.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.tensor.numel(), 0.0);
      state.v.emplace_back(e.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw ConfigError("adam: state does not match parameters");

  for (const auto& e : entries) {
    for (T g : e.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient in parameter " + e.name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto tensor = entries[i].tensor;
    auto grad = tensor.grad();
    auto value = tensor.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = static_cast<double>(grad[k]);
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      value[k] = static_cast<T>(static_cast<double>(value[k]) -
                                cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

}  // namespace giamic
