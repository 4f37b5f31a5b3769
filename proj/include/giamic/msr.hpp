#pragma once

// Modality-specific representations via gated interactive attention (GIA).
//
// For a directed pair A <- B:
//   H_{A->B} = softmax((H_A W_Q)(H_B W_K)^T / sqrt(d)) (H_B W_V)          [t_A x d]
//   g        = sigmoid(LN(avgpool_t(H_{A->B})) W_g + b_g)                   [1 x d]
//   G        = g broadcast over the t_A rows
//   out      = G * H_{A->B} + (1 - G) * H_A
//
// The MSR stage runs the three blocks (V,S), (S,T), (T,V), each in both
// directions with independent parameters, and sums the two gated outputs that
// belong to each modality. H^(MSR) stacks them in V, S, T order.

#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "giamic/config.hpp"
#include "giamic/encoder.hpp"
#include "giamic/ops.hpp"
#include "giamic/params.hpp"

namespace giamic {

/// Parameters of one direction A <- B.
template <typename T>
struct GiaParams {
  Tensor<T> w_q, w_k, w_v;  // [d x d]
  Tensor<T> w_g;            // [d x d]
  Tensor<T> b_g;            // [1 x d]

  static GiaParams create(ParamStore<T>& store, const std::string& group, std::size_t d) {
    GiaParams p;
    p.w_q = store.uniform(group + "/w_q", {d, d}, d);
    p.w_k = store.uniform(group + "/w_k", {d, d}, d);
    p.w_v = store.uniform(group + "/w_v", {d, d}, d);
    p.w_g = store.uniform(group + "/w_g", {d, d}, d);
    p.b_g = store.filled(group + "/b_g", {1, d}, T(0));
    return p;
  }
};

/// The (A, B) modality pairs of the three GIA blocks, in wiring order.
inline constexpr std::array<std::pair<Modality, Modality>, 3> kGiaPairs{{
    {Modality::kVideo, Modality::kSpeech},
    {Modality::kSpeech, Modality::kText},
    {Modality::kText, Modality::kVideo},
}};

inline std::string gia_group(Modality a, Modality b) {
  return std::string("gia.") + tag(a) + "->" + tag(b);
}

template <typename T>
struct GiaBlockParams {
  GiaParams<T> a_from_b;  // updates A using B
  GiaParams<T> b_from_a;  // updates B using A
};

template <typename T>
struct MsrParams {
  std::array<GiaBlockParams<T>, 3> blocks;

  static MsrParams create(ParamStore<T>& store, const ModelConfig& cfg) {
    MsrParams p;
    for (std::size_t i = 0; i < kGiaPairs.size(); ++i) {
      const auto [a, b] = kGiaPairs[i];
      p.blocks[i].a_from_b = GiaParams<T>::create(store, gia_group(a, b), cfg.d);
      p.blocks[i].b_from_a = GiaParams<T>::create(store, gia_group(b, a), cfg.d);
    }
    return p;
  }
};

/// H_{A->B}: representation of A attended over B.
template <typename T>
Tensor<T> cross_attend(const Tensor<T>& h_a, const Tensor<T>& h_b, const GiaParams<T>& p) {
  if (h_a.cols() != h_b.cols() || h_a.cols() != p.w_q.rows()) {
    throw DimensionError("cross_attend: feature widths differ");
  }
  const T inv_sqrt = T(1) / std::sqrt(T(h_a.cols()));
  return attention(matmul(h_a, p.w_q), matmul(h_b, p.w_k), matmul(h_b, p.w_v), inv_sqrt);
}

/// Gate G in (0,1)^{t_A x d}; one pooled gate vector shared by all rows.
template <typename T>
Tensor<T> gate(const Tensor<T>& h_ab, const GiaParams<T>& p, T eps = T(1e-5)) {
  auto pooled = layer_norm_rows(avg_pool_time(h_ab), eps);
  return broadcast_rows(sigmoid(affine(pooled, p.w_g, p.b_g)), h_ab.rows());
}

/// G * attended + (1 - G) * original.
template <typename T>
Tensor<T> gated_mix(const Tensor<T>& g, const Tensor<T>& attended, const Tensor<T>& original) {
  return add(mul(g, attended), mul(rsub_scalar(T(1), g), original));
}

template <typename T>
struct GiaDirection {
  Tensor<T> attended;  // H_{A->B}
  Tensor<T> gate;      // G
  Tensor<T> out;       // H_A^(GIA)_B
};

template <typename T>
GiaDirection<T> gia_direction(const Tensor<T>& h_a, const Tensor<T>& h_b, const GiaParams<T>& p,
                              T eps = T(1e-5)) {
  GiaDirection<T> r;
  r.attended = cross_attend(h_a, h_b, p);
  r.gate = gate(r.attended, p, eps);
  r.out = gated_mix(r.gate, r.attended, h_a);
  return r;
}

/// Both directions of one GIA block: (H_A^(GIA)_B, H_B^(GIA)_A).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> gia_fuse(const Tensor<T>& h_a, const Tensor<T>& h_b,
                                         const GiaBlockParams<T>& p, T eps = T(1e-5)) {
  return {gia_direction(h_a, h_b, p.a_from_b, eps).out,
          gia_direction(h_b, h_a, p.b_from_a, eps).out};
}

template <typename T>
struct MsrOutput {
  std::array<Tensor<T>, 3> per_modality;  // H_V^(MSR), H_S^(MSR), H_T^(MSR)
  Tensor<T> concat;                       // [(k+m+n) x d]
};

template <typename T>
MsrOutput<T> msr_forward(const std::array<Tensor<T>, 3>& h, const MsrParams<T>& p,
                         T eps = T(1e-5)) {
  std::array<Tensor<T>, 3> partial;  // first contribution per modality
  std::array<Tensor<T>, 3> sums;
  auto accumulate = [&](Modality m, const Tensor<T>& x) {
    auto& slot = partial[index_of(m)];
    if (!slot.defined()) slot = x;
    else sums[index_of(m)] = add(slot, x);
  };
  for (std::size_t i = 0; i < kGiaPairs.size(); ++i) {
    const auto [a, b] = kGiaPairs[i];
    auto [a_out, b_out] = gia_fuse(h[index_of(a)], h[index_of(b)], p.blocks[i], eps);
    accumulate(a, a_out);
    accumulate(b, b_out);
  }
  MsrOutput<T> out;
  out.per_modality = sums;
  out.concat = concat_time<T>({sums[0], sums[1], sums[2]});
  return out;
}

}  // namespace giamic
