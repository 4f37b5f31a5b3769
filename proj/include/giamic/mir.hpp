#pragma once

// Modality-invariant representations (MIG blocks) and the symmetric-KL
// alignment constraint between them.
//
// For each modality M, with the shared query H_VST = [H_V; H_S; H_T]:
//   share = softmax((H_VST W_Q)(X_M W_K)^T / sqrt(d)) (X_M W_V)
//   mask  = sigmoid(PReLU(conv1x1([align(X_M) | H_VST])))
//   b     = share * mask
//   mig   = LN(H_VST + conv1d_k(b))
// where X_M is H_M^(MSR) (or H_M when the MSR branch is ablated) and align()
// zero-pads X_M into a (k+m+n)-row canvas at modality M's segment offset.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "giamic/config.hpp"
#include "giamic/encoder.hpp"
#include "giamic/ops.hpp"
#include "giamic/params.hpp"

namespace giamic {

template <typename T>
struct MigParams {
  Tensor<T> w_q, w_k, w_v;                       // [d x d]
  Tensor<T> mask_kernel, mask_bias, mask_slope;  // [1 x 2d x d], [1 x d], [1 x d]
  Tensor<T> refine_kernel, refine_bias;          // [ksize x d x d], [1 x d]
  Tensor<T> norm_gain, norm_bias;                // [1 x d]

  static MigParams create(ParamStore<T>& store, const std::string& group, const ModelConfig& cfg) {
    const std::size_t d = cfg.d, k = cfg.refine_ksize;
    MigParams p;
    p.w_q = store.uniform(group + "/w_q", {d, d}, d);
    p.w_k = store.uniform(group + "/w_k", {d, d}, d);
    p.w_v = store.uniform(group + "/w_v", {d, d}, d);
    p.mask_kernel = store.uniform(group + "/mask.kernel", {1, 2 * d, d}, 2 * d);
    p.mask_bias = store.filled(group + "/mask.bias", {1, d}, T(0));
    p.mask_slope = store.filled(group + "/mask.slope", {1, d}, static_cast<T>(cfg.prelu_init));
    p.refine_kernel = store.uniform(group + "/refine.kernel", {k, d, d}, k * d);
    p.refine_bias = store.filled(group + "/refine.bias", {1, d}, T(0));
    p.norm_gain = store.filled(group + "/norm.gain", {1, d}, T(1));
    p.norm_bias = store.filled(group + "/norm.bias", {1, d}, T(0));
    return p;
  }
};

inline std::string mig_group(Modality m) { return std::string("mig.") + tag(m); }

template <typename T>
struct MirParams {
  std::array<MigParams<T>, 3> blocks;

  static MirParams create(ParamStore<T>& store, const ModelConfig& cfg) {
    MirParams p;
    for (Modality m : kModalities) {
      p.blocks[index_of(m)] = MigParams<T>::create(store, mig_group(m), cfg);
    }
    return p;
  }
};

/// Row offsets of each modality's segment inside a V,S,T stack.
struct Segments {
  std::array<std::size_t, 3> length{};

  std::size_t total() const { return length[0] + length[1] + length[2]; }
  std::size_t offset(Modality m) const {
    std::size_t o = 0;
    for (std::size_t i = 0; i < index_of(m); ++i) o += length[i];
    return o;
  }
};

/// H_VST = [H_V; H_S; H_T].
template <typename T>
Tensor<T> shared_query(const std::array<Tensor<T>, 3>& h) {
  return concat_time<T>({h[0], h[1], h[2]});
}

template <typename T>
Tensor<T> mig_attend(const Tensor<T>& h_vst, const Tensor<T>& keys, const MigParams<T>& p) {
  if (h_vst.cols() != keys.cols() || h_vst.cols() != p.w_q.rows()) {
    throw DimensionError("mig_attend: feature widths differ");
  }
  const T inv_sqrt = T(1) / std::sqrt(T(h_vst.cols()));
  return attention(matmul(h_vst, p.w_q), matmul(keys, p.w_k), matmul(keys, p.w_v), inv_sqrt);
}

/// Zero-pads a modality segment into the full (k+m+n)-row canvas.
template <typename T>
Tensor<T> align_segment(const Tensor<T>& x, std::size_t offset, std::size_t total) {
  if (offset + x.rows() > total) throw GraphError("align_segment: segment exceeds canvas");
  return pad_time(x, offset, total - offset - x.rows());
}

template <typename T>
Tensor<T> mig_mask_values(const Tensor<T>& aligned, const Tensor<T>& h_vst, const MigParams<T>& p) {
  if (aligned.shape() != h_vst.shape()) {
    throw GraphError("mig_mask: aligned segment " + shape_str(aligned.shape()) +
                     " does not match query " + shape_str(h_vst.shape()));
  }
  auto pre = conv1d_time(concat_feat<T>({aligned, h_vst}), p.mask_kernel, p.mask_bias, 1,
                         Padding::kSame);
  return sigmoid(prelu(pre, p.mask_slope));
}

/// H^(b) = share * sigmoid(PReLU(conv1x1([align(X_M) | H_VST]))).
template <typename T>
Tensor<T> mig_mask(const Tensor<T>& share, const Tensor<T>& aligned, const Tensor<T>& h_vst,
                   const MigParams<T>& p) {
  return mul(share, mig_mask_values(aligned, h_vst, p));
}

/// LN(H_VST + conv1d(H^(b))). With stride > 1 the conv output is stretched
/// back to the query length by nearest-neighbour row repetition.
template <typename T>
Tensor<T> mig_refine(const Tensor<T>& masked, const Tensor<T>& h_vst, const MigParams<T>& p,
                     std::size_t stride = 1, T eps = T(1e-5)) {
  if (masked.shape() != h_vst.shape()) throw DimensionError("mig_refine: shape mismatch");
  auto conv = conv1d_time(masked, p.refine_kernel, p.refine_bias, stride, Padding::kSame);
  const std::size_t t = h_vst.rows();
  if (conv.rows() != t) {
    std::vector<std::size_t> index(t);
    for (std::size_t i = 0; i < t; ++i) index[i] = i * conv.rows() / t;
    conv = gather_rows(conv, std::move(index));
  }
  return layer_norm_rows(add(h_vst, conv), p.norm_gain, p.norm_bias, eps);
}

template <typename T>
struct MigOutput {
  Tensor<T> share;   // H_M^(share)
  Tensor<T> masked;  // H_M^(b)
  Tensor<T> mig;     // H_M^(MIG)
};

template <typename T>
MigOutput<T> mig_forward(const Tensor<T>& h_vst, const Tensor<T>& keys, std::size_t offset,
                         const MigParams<T>& p, const ModelConfig& cfg) {
  MigOutput<T> r;
  r.share = mig_attend(h_vst, keys, p);
  r.masked = mig_mask(r.share, align_segment(keys, offset, h_vst.rows()), h_vst, p);
  r.mig = mig_refine(r.masked, h_vst, p, cfg.refine_stride, static_cast<T>(cfg.ln_eps));
  return r;
}

template <typename T>
struct MirOutput {
  std::array<MigOutput<T>, 3> blocks;
  Tensor<T> concat;  // H^(MIR) [3(k+m+n) x d]
};

/// keys[M] is H_M^(MSR) in the full model, H_M when the MSR branch is ablated.
template <typename T>
MirOutput<T> mir_forward(const Tensor<T>& h_vst, const std::array<Tensor<T>, 3>& keys,
                         const Segments& seg, const MirParams<T>& p, const ModelConfig& cfg) {
  MirOutput<T> out;
  for (Modality m : kModalities) {
    out.blocks[index_of(m)] =
        mig_forward(h_vst, keys[index_of(m)], seg.offset(m), p.blocks[index_of(m)], cfg);
  }
  out.concat = concat_time<T>({out.blocks[0].mig, out.blocks[1].mig, out.blocks[2].mig});
  return out;
}

/// Symmetric KL between row-wise feature softmaxes, averaged over rows:
///   mean_r 1/2 sum_j (p_rj - q_rj)(log p_rj - log q_rj)
/// which equals 1/2 (KL(p||q) + KL(q||p)) per row and is symmetric bit-for-bit.
template <typename T>
Tensor<T> skl(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("skl: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  auto diff_p = sub(softmax_rows(a), softmax_rows(b));
  auto diff_log = sub(log_softmax_rows(a), log_softmax_rows(b));
  return scale(sum_all(mul(diff_p, diff_log)), T(0.5) / T(a.rows()));
}

/// skl(V,S) + skl(S,T) + skl(T,V).
template <typename T>
Tensor<T> mic_loss(const Tensor<T>& v, const Tensor<T>& s, const Tensor<T>& t) {
  return add(add(skl(v, s), skl(s, t)), skl(t, v));
}

}  // namespace giamic
