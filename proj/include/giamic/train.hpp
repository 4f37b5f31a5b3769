#pragma once

// Training loop, evaluation metrics and the alignment report.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "giamic/adam.hpp"
#include "giamic/config.hpp"
#include "giamic/data.hpp"
#include "giamic/errors.hpp"
#include "giamic/model.hpp"

namespace giamic {

enum class LossReduction { kMean, kSum };

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double gamma = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossReduction reduction = LossReduction::kMean;

  /// Optimiser settings used with large pretrained encoders.
  static TrainConfig large_preset() {
    TrainConfig c;
    c.lr = 1e-5;
    return c;
  }

  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps}; }

  void validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    check_gamma(gamma);
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  }
};

struct MetricsRecord {
  std::int64_t epoch = 0;
  double l_er = 0;
  double l_mir = 0;
  double l_total = 0;
  double wa = 0;
  double ua = 0;
  std::array<double, 3> skl{0, 0, 0};  // VS, ST, TV

  double skl_sum() const { return skl[0] + skl[1] + skl[2]; }
};

struct Accuracy {
  double wa = 0;
  double ua = 0;
};

/// WA = overall hit rate; UA = mean recall over classes present in `labels`.
inline Accuracy accuracy(std::span<const std::uint32_t> labels,
                         std::span<const std::uint32_t> predicted, std::size_t classes) {
  if (labels.empty()) throw ConfigError("accuracy: empty evaluation set");
  if (labels.size() != predicted.size()) throw DimensionError("accuracy: size mismatch");
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DimensionError("accuracy: label out of range");
    ++totals[labels[i]];
    if (labels[i] == predicted[i]) {
      ++hits[labels[i]];
      ++correct;
    }
  }
  double recall_sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] == 0) continue;
    recall_sum += double(hits[c]) / double(totals[c]);
    ++present;
  }
  return {double(correct) / double(labels.size()), recall_sum / double(present)};
}

namespace detail {

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    0xc2b2ae35u};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Running sums for one pass over a dataset.
struct PassStats {
  double l_er = 0;
  double l_mir = 0;
  std::array<double, 3> skl{0, 0, 0};
  std::vector<std::uint32_t> labels;
  std::vector<std::uint32_t> predicted;

  template <typename T>
  void add(const SampleLoss<T>& s, std::uint32_t label) {
    l_er += s.l_er;
    l_mir += s.l_mir;
    for (std::size_t i = 0; i < 3; ++i) skl[i] += s.skl[i];
    labels.push_back(label);
    predicted.push_back(static_cast<std::uint32_t>(s.predicted));
  }

  MetricsRecord finish(std::int64_t epoch, double gamma, std::size_t classes) const {
    MetricsRecord r;
    r.epoch = epoch;
    const double n = static_cast<double>(labels.size());
    r.l_er = l_er / n;
    r.l_mir = l_mir / n;
    r.l_total = r.l_er + gamma * r.l_mir;
    for (std::size_t i = 0; i < 3; ++i) r.skl[i] = skl[i] / n;
    const auto acc = accuracy(labels, predicted, classes);
    r.wa = acc.wa;
    r.ua = acc.ua;
    return r;
  }
};

template <typename T>
void check_compatible(const Model<T>& model, const Dataset& ds) {
  const auto& cfg = model.config();
  if (ds.classes != cfg.classes) {
    throw DimensionError("dataset has " + std::to_string(ds.classes) + " classes, model " +
                         std::to_string(cfg.classes));
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.label >= ds.classes) throw DimensionError("sample label out of range");
    for (std::size_t m = 0; m < 3; ++m) {
      if (s.seqs[m].d != cfg.raw_dims[m]) {
        throw DimensionError("sample " + std::to_string(i) + " modality " + tag(kModalities[m]) +
                             " has width " + std::to_string(s.seqs[m].d) + ", expected " +
                             std::to_string(cfg.raw_dims[m]));
      }
    }
  }
}

}  // namespace detail

/// Trains `model` in place and returns one MetricsRecord per epoch. Epoch
/// metrics average the per-sample losses seen during the epoch; WA/UA use the
/// predictions made before each batch's update.
template <typename T>
std::vector<MetricsRecord> train(Model<T>& model, const Dataset& ds, const TrainConfig& cfg,
                                 const std::function<void(const MetricsRecord&)>& on_epoch = {}) {
  cfg.validate();
  std::vector<MetricsRecord> history;
  if (cfg.epochs == 0) return history;
  if (ds.empty()) throw ConfigError("train: empty dataset");
  detail::check_compatible(model, ds);

  const double gamma = model.effective_gamma(cfg.gamma);
  const auto adam_cfg = cfg.adam();
  AdamState adam;
  auto& store = model.params();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = detail::epoch_order(ds.size(), cfg.seed, epoch);
    detail::PassStats stats;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const T weight = cfg.reduction == LossReduction::kMean ? T(1) / T(end - begin) : T(1);
      try {
        store.zero_grad();
        for (std::size_t i = begin; i < end; ++i) {
          const auto& sample = ds.samples[order[i]];
          auto loss = model.sample_loss(to_tensors<T>(sample), sample.label, gamma);
          backward(scale(loss.total, weight));
          stats.add(loss, sample.label);
        }
        adam_step(store, adam, adam_cfg);
      } catch (const NumericalError& err) {
        throw NumericalError("epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batch_index) + ": " + err.what());
      }
    }
    history.push_back(stats.finish(static_cast<std::int64_t>(epoch), gamma, ds.classes));
    if (on_epoch) on_epoch(history.back());
  }
  return history;
}

template <typename T>
struct TrainResult {
  Model<T> model;
  std::vector<MetricsRecord> history;
};

template <typename T>
TrainResult<T> train(const Dataset& ds, const ModelConfig& model_cfg, const TrainConfig& cfg,
                     const std::function<void(const MetricsRecord&)>& on_epoch = {}) {
  Model<T> model(model_cfg);
  auto history = train(model, ds, cfg, on_epoch);
  return {std::move(model), std::move(history)};
}

/// Losses, WA/UA and mean pairwise SKL on a dataset, without recording a graph.
template <typename T>
MetricsRecord evaluate(const Model<T>& model, const Dataset& ds, double gamma = 0.1) {
  if (ds.empty()) throw ConfigError("evaluate: empty dataset");
  detail::check_compatible(model, ds);
  NoGradGuard no_grad;
  const double g = model.effective_gamma(gamma);
  detail::PassStats stats;
  for (const auto& sample : ds.samples) {
    stats.add(model.sample_loss(to_tensors<T>(sample), sample.label, g), sample.label);
  }
  return stats.finish(-1, g, ds.classes);
}

struct AlignmentReport {
  std::array<double, 3> skl{0, 0, 0};  // mean skl(V,S), skl(S,T), skl(T,V)
  Dataset embeddings;                  // per sample: V, S, T rows of time-pooled H^(MIG)

  double sum() const { return skl[0] + skl[1] + skl[2]; }
};

template <typename T>
AlignmentReport alignment_report(const Model<T>& model, const Dataset& ds) {
  if (model.config().ablation.no_mir) {
    throw ConfigError("alignment_report: the MIR branch is ablated");
  }
  if (ds.empty()) throw ConfigError("alignment_report: empty dataset");
  detail::check_compatible(model, ds);
  NoGradGuard no_grad;
  AlignmentReport rep;
  rep.embeddings.classes = ds.classes;
  rep.embeddings.samples.reserve(ds.size());
  for (const auto& sample : ds.samples) {
    auto r = model.forward(to_tensors<T>(sample));
    Sample out;
    out.label = sample.label;
    for (std::size_t m = 0; m < 3; ++m) {
      rep.skl[m] += static_cast<double>(r.skl_terms[m].item());
      auto pooled = avg_pool_time(r.mir.blocks[m].mig);
      auto& q = out.seqs[m];
      q.modality = kModalities[m];
      q.t = 1;
      q.d = static_cast<std::uint32_t>(pooled.cols());
      q.values.assign(pooled.data().begin(), pooled.data().end());
    }
    rep.embeddings.samples.push_back(std::move(out));
  }
  for (auto& v : rep.skl) v /= static_cast<double>(ds.size());
  return rep;
}

}  // namespace giamic
