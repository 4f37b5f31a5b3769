#pragma once

// Embedding front end: per-modality linear projection to the shared width d,
// then one pre-norm transformer encoder block.
//
//   x1  = x  + MHSA(LN1(x))
//   x2  = x1 + FFN(LN2(x1))          FFN = W2 GELU(W1 . + b1) + b2
//   out = LNf(x2)
//
// With every attention and FFN weight at zero the block reduces to LNf(x).

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "giamic/config.hpp"
#include "giamic/ops.hpp"
#include "giamic/params.hpp"

namespace giamic {

template <typename T>
struct ProjectionParams {
  Tensor<T> w;  // [d_in x d]
  Tensor<T> b;  // [1 x d]

  static ProjectionParams create(ParamStore<T>& store, const std::string& prefix, std::size_t d_in,
                                 std::size_t d) {
    return {store.uniform(prefix + ".w", {d_in, d}, d_in), store.filled(prefix + ".b", {1, d}, T(0))};
  }
};

template <typename T>
struct EncoderBlockParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> w_q, w_k, w_v, w_o, b_o;
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w_1, b_1, w_2, b_2;
  Tensor<T> lnf_gain, lnf_bias;

  static EncoderBlockParams create(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                                   std::size_t ffn) {
    EncoderBlockParams p;
    p.ln1_gain = store.filled(prefix + ".ln1.gain", {1, d}, T(1));
    p.ln1_bias = store.filled(prefix + ".ln1.bias", {1, d}, T(0));
    p.w_q = store.uniform(prefix + ".attn.w_q", {d, d}, d);
    p.w_k = store.uniform(prefix + ".attn.w_k", {d, d}, d);
    p.w_v = store.uniform(prefix + ".attn.w_v", {d, d}, d);
    p.w_o = store.uniform(prefix + ".attn.w_o", {d, d}, d);
    p.b_o = store.filled(prefix + ".attn.b_o", {1, d}, T(0));
    p.ln2_gain = store.filled(prefix + ".ln2.gain", {1, d}, T(1));
    p.ln2_bias = store.filled(prefix + ".ln2.bias", {1, d}, T(0));
    p.w_1 = store.uniform(prefix + ".ffn.w_1", {d, ffn}, d);
    p.b_1 = store.filled(prefix + ".ffn.b_1", {1, ffn}, T(0));
    p.w_2 = store.uniform(prefix + ".ffn.w_2", {ffn, d}, ffn);
    p.b_2 = store.filled(prefix + ".ffn.b_2", {1, d}, T(0));
    p.lnf_gain = store.filled(prefix + ".lnf.gain", {1, d}, T(1));
    p.lnf_bias = store.filled(prefix + ".lnf.bias", {1, d}, T(0));
    return p;
  }
};

template <typename T>
struct EncoderParams {
  std::array<ProjectionParams<T>, 3> projection;
  std::array<EncoderBlockParams<T>, 3> block;  // all three alias one set when shared

  static EncoderParams create(ParamStore<T>& store, const ModelConfig& cfg) {
    EncoderParams p;
    const std::size_t ffn = cfg.ffn_mult * cfg.d;
    for (Modality m : kModalities) {
      p.projection[index_of(m)] = ProjectionParams<T>::create(
          store, std::string("encoder/") + tag(m) + ".proj", cfg.raw_dims[index_of(m)], cfg.d);
    }
    if (cfg.share_extractor) {
      auto shared = EncoderBlockParams<T>::create(store, "encoder/shared.block", cfg.d, ffn);
      p.block = {shared, shared, shared};
    } else {
      for (Modality m : kModalities) {
        p.block[index_of(m)] = EncoderBlockParams<T>::create(
            store, std::string("encoder/") + tag(m) + ".block", cfg.d, ffn);
      }
    }
    return p;
  }
};

/// Per-timestep affine map [t x d_in] -> [t x d].
template <typename T>
Tensor<T> project(const Tensor<T>& x, const ProjectionParams<T>& p) {
  if (x.rank() != 2 || x.cols() != p.w.rows()) {
    throw DimensionError("project: input width " + std::to_string(x.cols()) +
                         " does not match projection " + shape_str(p.w.shape()));
  }
  return affine(x, p.w, p.b);
}

/// Scaled dot-product attention of queries against keys/values, one head.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, T scale_by,
                    Tensor<T>* weights_out = nullptr) {
  auto weights = softmax_rows(scale(matmul(q, transpose(k)), scale_by));
  if (weights_out) *weights_out = weights;
  return matmul(weights, v);
}

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const EncoderBlockParams<T>& p,
                                    std::size_t n_heads,
                                    std::vector<Tensor<T>>* weights_out = nullptr) {
  const std::size_t d = x.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("feature_extract: d must be divisible by n_heads");
  }
  const std::size_t dh = d / n_heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  auto q = matmul(x, p.w_q);
  auto k = matmul(x, p.w_k);
  auto v = matmul(x, p.w_v);
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor<T> w;
    heads.push_back(attention(slice_feat(q, h * dh, dh), slice_feat(k, h * dh, dh),
                              slice_feat(v, h * dh, dh), inv_sqrt, &w));
    if (weights_out) weights_out->push_back(w);
  }
  auto merged = n_heads == 1 ? heads.front() : concat_feat(heads);
  return affine(merged, p.w_o, p.b_o);
}

/// Sinusoidal position table [t x d].
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t t, std::size_t d) {
  std::vector<T> v(t * d);
  for (std::size_t pos = 0; pos < t; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / double(d));
      const double a = double(pos) * freq;
      v[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return Tensor<T>::constant({t, d}, std::move(v));
}

/// One pre-norm transformer encoder block; output shape equals input shape.
template <typename T>
Tensor<T> feature_extract(const Tensor<T>& x, const EncoderBlockParams<T>& p, std::size_t n_heads,
                          T eps = T(1e-5), bool positional = false,
                          std::vector<Tensor<T>>* weights_out = nullptr) {
  if (n_heads == 0 || x.cols() % n_heads != 0) {
    throw ConfigError("feature_extract: d must be divisible by n_heads");
  }
  auto h = positional ? add(x, sinusoidal_positions<T>(x.rows(), x.cols())) : x;
  auto x1 = add(h, multi_head_self_attention(layer_norm_rows(h, p.ln1_gain, p.ln1_bias, eps), p,
                                             n_heads, weights_out));
  auto hidden = gelu(affine(layer_norm_rows(x1, p.ln2_gain, p.ln2_bias, eps), p.w_1, p.b_1));
  auto x2 = add(x1, affine(hidden, p.w_2, p.b_2));
  return layer_norm_rows(x2, p.lnf_gain, p.lnf_bias, eps);
}

/// Raw [t x d_in] features of one modality -> preliminary representation H_M [t x d].
template <typename T>
Tensor<T> encode(const Tensor<T>& raw, Modality m, const EncoderParams<T>& p,
                 const ModelConfig& cfg) {
  return feature_extract(project(raw, p.projection[index_of(m)]), p.block[index_of(m)],
                         cfg.n_heads, static_cast<T>(cfg.ln_eps), cfg.positional_encoding);
}

}  // namespace giamic
