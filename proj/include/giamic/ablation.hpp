#pragma once

// Full model vs. the three single-component ablations, on identical seeds.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "giamic/config.hpp"
#include "giamic/data.hpp"
#include "giamic/train.hpp"

namespace giamic {

enum class Variant { kFull, kNoMsr, kNoMir, kNoMic };

inline constexpr std::array<Variant, 4> kVariants{Variant::kFull, Variant::kNoMsr, Variant::kNoMir,
                                                  Variant::kNoMic};

inline const char* name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoMsr: return "w/o MSR";
    case Variant::kNoMir: return "w/o MIR";
    case Variant::kNoMic: return "w/o MIC";
  }
  return "?";
}

inline ModelConfig with_variant(ModelConfig cfg, Variant v) {
  cfg.ablation.no_msr = v == Variant::kNoMsr;
  cfg.ablation.no_mir = v == Variant::kNoMir;
  cfg.ablation.no_mic = v == Variant::kNoMic;
  return cfg;
}

struct AblationRow {
  Variant variant = Variant::kFull;
  std::uint64_t seed = 0;
  double wa = 0;
  double ua = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::vector<double> ua_of(Variant v) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.variant == v) out.push_back(r.ua);
    return out;
  }
  std::vector<double> wa_of(Variant v) const {
    std::vector<double> out;
    for (const auto& r : rows)
      if (r.variant == v) out.push_back(r.wa);
    return out;
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Trains every variant for each seed on `train_set` and scores it on
/// `eval_set`. The seed drives both initialisation and batch order.
template <typename T = double>
AblationTable run_ablation(const Dataset& train_set, const Dataset& eval_set,
                           const ModelConfig& base, const TrainConfig& train_cfg,
                           const std::vector<std::uint64_t>& seeds,
                           const std::function<void(const AblationRow&)>& on_row = {}) {
  AblationTable table;
  for (auto seed : seeds) {
    for (Variant v : kVariants) {
      auto mcfg = with_variant(base, v);
      mcfg.init_seed = seed;
      auto tcfg = train_cfg;
      tcfg.seed = seed;
      Model<T> model(mcfg);
      train(model, train_set, tcfg);
      const auto m = evaluate(model, eval_set, tcfg.gamma);
      table.rows.push_back({v, seed, m.wa, m.ua});
      if (on_row) on_row(table.rows.back());
    }
  }
  return table;
}

}  // namespace giamic
