#pragma once

// Full network: encoder -> MSR (GIA) -> MIR (MIG) -> fusion -> classifier.

#include <algorithm>
#include <array>
#include <cstddef>

#include "giamic/config.hpp"
#include "giamic/encoder.hpp"
#include "giamic/head.hpp"
#include "giamic/mir.hpp"
#include "giamic/msr.hpp"
#include "giamic/params.hpp"

namespace giamic {

template <typename T>
struct ForwardResult {
  std::array<Tensor<T>, 3> pre;   // H_V, H_S, H_T
  std::array<Tensor<T>, 3> keys;  // per-modality keys/values fed to the MIG blocks
  MsrOutput<T> msr;               // undefined tensors when the MSR branch is ablated
  Tensor<T> h_vst;
  MirOutput<T> mir;  // undefined tensors when the MIR branch is ablated
  Tensor<T> fused;
  Tensor<T> probs;
  std::array<Tensor<T>, 3> skl_terms;  // skl(V,S), skl(S,T), skl(T,V); undefined without MIR
  Tensor<T> l_mir;                     // undefined without MIR
};

template <typename T>
struct SampleLoss {
  Tensor<T> total;
  double l_er = 0;
  double l_mir = 0;
  std::array<double, 3> skl{0, 0, 0};
  std::size_t predicted = 0;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)), store_(cfg_.init_seed) {
    cfg_.validate();
    encoder_ = EncoderParams<T>::create(store_, cfg_);
    msr_ = MsrParams<T>::create(store_, cfg_);
    mir_ = MirParams<T>::create(store_, cfg_);
    head_ = HeadParams<T>::create(store_, cfg_.d, cfg_.classes);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const EncoderParams<T>& encoder() const { return encoder_; }
  const MsrParams<T>& msr() const { return msr_; }
  const MirParams<T>& mir() const { return mir_; }
  const HeadParams<T>& head() const { return head_; }

  ForwardResult<T> forward(const std::array<Tensor<T>, 3>& raw) const {
    const auto& ab = cfg_.ablation;
    const T eps = static_cast<T>(cfg_.ln_eps);
    ForwardResult<T> r;
    Segments seg;
    for (Modality m : kModalities) {
      const auto i = index_of(m);
      if (raw[i].rank() != 2 || raw[i].rows() == 0) {
        throw DimensionError(std::string("forward: empty or malformed ") + tag(m) + " sequence");
      }
      r.pre[i] = encode(raw[i], m, encoder_, cfg_);
      seg.length[i] = raw[i].rows();
    }
    std::vector<Tensor<T>> fused_parts;
    if (!ab.no_msr) {
      r.msr = msr_forward(r.pre, msr_, eps);
      r.keys = r.msr.per_modality;
      fused_parts.push_back(r.msr.concat);
    } else {
      r.keys = r.pre;
      if (ab.msr_variant == MsrAblation::kRawConcat) fused_parts.push_back(shared_query(r.pre));
    }
    if (!ab.no_mir) {
      r.h_vst = shared_query(r.pre);
      r.mir = mir_forward(r.h_vst, r.keys, seg, mir_, cfg_);
      const auto& b = r.mir.blocks;
      r.skl_terms = {skl(b[0].mig, b[1].mig), skl(b[1].mig, b[2].mig), skl(b[2].mig, b[0].mig)};
      r.l_mir = add(add(r.skl_terms[0], r.skl_terms[1]), r.skl_terms[2]);
      fused_parts.push_back(r.mir.concat);
    }
    r.fused = fused_parts.size() == 1 ? fused_parts.front() : concat_time(fused_parts);
    r.probs = classify(r.fused, head_);
    return r;
  }

  /// Weight actually applied to L_MIR for a requested gamma.
  double effective_gamma(double gamma) const {
    check_gamma(gamma);
    return cfg_.ablation.no_mic || cfg_.ablation.no_mir ? 0.0 : gamma;
  }

  SampleLoss<T> sample_loss(const std::array<Tensor<T>, 3>& raw, std::size_t label,
                            double gamma) const {
    auto r = forward(raw);
    SampleLoss<T> out;
    auto l_er = er_loss(r.probs, label);
    out.l_er = static_cast<double>(l_er.item());
    if (r.l_mir.defined()) {
      out.total = joint_loss(l_er, r.l_mir, effective_gamma(gamma));
      out.l_mir = static_cast<double>(r.l_mir.item());
      for (std::size_t i = 0; i < 3; ++i) out.skl[i] = static_cast<double>(r.skl_terms[i].item());
    } else {
      out.total = l_er;
    }
    const auto probs = r.probs.data();
    out.predicted = static_cast<std::size_t>(
        std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  EncoderParams<T> encoder_;
  MsrParams<T> msr_;
  MirParams<T> mir_;
  HeadParams<T> head_;
};

}  // namespace giamic
