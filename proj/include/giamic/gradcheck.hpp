#pragma once

// Central finite-difference check of every parameter entry against the
// reverse-mode gradient, aggregated per parameter group.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "giamic/data.hpp"
#include "giamic/model.hpp"
#include "giamic/params.hpp"
#include "giamic/tensor.hpp"

namespace giamic {

struct GroupCheck {
  std::string group;
  std::size_t entries = 0;
  double max_rel_error = 0;
  std::string worst_param;
};

struct GradcheckReport {
  double threshold = 1e-4;
  std::vector<GroupCheck> groups;

  bool passed() const {
    return std::all_of(groups.begin(), groups.end(),
                       [&](const GroupCheck& g) { return g.max_rel_error < threshold; });
  }
};

struct GradcheckOptions {
  double step = 1e-5;
  double threshold = 1e-4;
  /// Test hook: perturbs the analytic gradient of this group before comparing.
  std::string corrupt_group;
};

/// `loss_fn` must rebuild the graph from the current parameter values on
/// every call. Error per entry is |analytic - numeric| / max(1, |numeric|).
inline GradcheckReport gradcheck(ParamStore<double>& store,
                                 const std::function<Tensor<double>()>& loss_fn,
                                 const GradcheckOptions& opt = {}) {
  store.zero_grad();
  backward(loss_fn());

  GradcheckReport report;
  report.threshold = opt.threshold;
  for (const auto& g : store.groups()) report.groups.push_back({g, 0, 0.0, ""});
  auto group_slot = [&](const std::string& name) -> GroupCheck& {
    const auto g = ParamStore<double>::group_of(name);
    return *std::find_if(report.groups.begin(), report.groups.end(),
                         [&](const GroupCheck& c) { return c.group == g; });
  };

  NoGradGuard no_grad;
  for (const auto& entry : store.entries()) {
    auto tensor = entry.tensor;
    auto& slot = group_slot(entry.name);
    const std::vector<double> analytic(tensor.grad().begin(), tensor.grad().end());
    auto values = tensor.mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + opt.step;
      const double up = loss_fn().item();
      values[k] = saved - opt.step;
      const double down = loss_fn().item();
      values[k] = saved;
      const double numeric = (up - down) / (2 * opt.step);
      double a = analytic[k];
      if (slot.group == opt.corrupt_group) a = 1.5 * a + 1e-2;
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++slot.entries;
      if (err >= slot.max_rel_error) {
        slot.max_rel_error = err;
        slot.worst_param = entry.name;
      }
    }
  }
  return report;
}

/// The tiny end-to-end configuration: k = m = n = 2, d = 4, e = 3.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.raw_dims = {3, 5, 4};
  c.d = 4;
  c.n_heads = 2;
  c.classes = 3;
  c.init_seed = 11;
  return c;
}

inline Dataset tiny_gradcheck_data() {
  SynthSpec s;
  s.n_samples = 2;
  s.classes = 3;
  s.lengths = {2, 2, 2};
  s.raw_dims = {3, 5, 4};
  s.alpha = 1.0;
  s.beta = {0.5, 0.5, 0.5};
  s.delta = 0.5;
  s.noise_std = 0.3;
  s.seed = 5;
  return generate(s);
}

/// Checks every parameter group of the tiny model on the joint objective
/// (mean over two samples, gamma = 0.1).
inline GradcheckReport model_gradcheck(const GradcheckOptions& opt = {}, double gamma = 0.1) {
  Model<double> model(tiny_model_config());
  const auto data = tiny_gradcheck_data();
  auto loss_fn = [&]() {
    Tensor<double> total;
    for (const auto& s : data.samples) {
      auto l = model.sample_loss(to_tensors<double>(s), s.label, gamma).total;
      total = total.defined() ? add(total, l) : l;
    }
    return scale(total, 1.0 / double(data.size()));
  };
  return gradcheck(model.params(), loss_fn, opt);
}

}  // namespace giamic
