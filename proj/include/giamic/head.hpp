#pragma once

#include <cmath>
#include <string>

#include "giamic/errors.hpp"
#include "giamic/ops.hpp"
#include "giamic/params.hpp"

namespace giamic {

inline constexpr double kLogFloor = 1e-12;

template <typename T>
struct HeadParams {
  Tensor<T> w_c;  // [d x e]
  Tensor<T> b_c;  // [1 x e]

  static HeadParams create(ParamStore<T>& store, std::size_t d, std::size_t classes) {
    if (classes < 2) throw ConfigError("classification head needs at least two classes");
    return {store.uniform("head/w_c", {d, classes}, d), store.filled("head/b_c", {1, classes}, T(0))};
  }
};

/// softmax(avgpool_t(H_fus) W_c + b_c) as a [1 x e] row.
template <typename T>
Tensor<T> classify(const Tensor<T>& fused, const HeadParams<T>& p) {
  if (fused.rank() != 2 || fused.cols() != p.w_c.rows()) {
    throw DimensionError("classify: fused width does not match head");
  }
  return softmax_rows(affine(avg_pool_time(fused), p.w_c, p.b_c));
}

/// -log(max(p[label], 1e-12)).
template <typename T>
Tensor<T> er_loss(const Tensor<T>& probs, std::size_t label) {
  if (label >= probs.numel()) {
    throw DimensionError("er_loss: label " + std::to_string(label) + " out of range for " +
                         std::to_string(probs.numel()) + " classes");
  }
  return scale(log_floor(pick(probs, 0, label), static_cast<T>(kLogFloor)), T(-1));
}

struct LossBreakdown {
  double l_er = 0;
  double l_mir = 0;
  double l_total = 0;
  double gamma = 0;
};

inline void check_gamma(double gamma) {
  if (!(gamma >= 0)) throw ConfigError("gamma must be >= 0");
}

inline LossBreakdown joint_loss(double l_er, double l_mir, double gamma) {
  check_gamma(gamma);
  return {l_er, l_mir, l_er + gamma * l_mir, gamma};
}

/// L_ER + gamma L_MIR on the graph.
template <typename T>
Tensor<T> joint_loss(const Tensor<T>& l_er, const Tensor<T>& l_mir, double gamma) {
  check_gamma(gamma);
  return add(l_er, scale(l_mir, static_cast<T>(gamma)));
}

}  // namespace giamic
