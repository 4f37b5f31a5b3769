#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "giamic/errors.hpp"

namespace giamic {

enum class Modality : std::uint8_t { kVideo = 0, kSpeech = 1, kText = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::kVideo, Modality::kSpeech,
                                                     Modality::kText};

inline constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

inline const char* tag(Modality m) {
  switch (m) {
    case Modality::kVideo: return "V";
    case Modality::kSpeech: return "S";
    case Modality::kText: return "T";
  }
  return "?";
}

/// How the model is wired when the modality-specific branch is ablated.
enum class MsrAblation {
  kDropSegment,  // MIG attends over H_M directly; fused output omits the MSR segment
  kRawConcat,    // GIA skipped, but concat(H_V, H_S, H_T) still fills the MSR segment
};

struct Ablation {
  bool no_msr = false;
  bool no_mir = false;
  bool no_mic = false;
  MsrAblation msr_variant = MsrAblation::kDropSegment;
};

struct ModelConfig {
  std::array<std::size_t, 3> raw_dims{32, 32, 24};
  std::size_t d = 64;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t classes = 4;
  bool share_extractor = false;
  bool positional_encoding = false;
  std::size_t refine_ksize = 3;
  std::size_t refine_stride = 1;
  double ln_eps = 1e-5;
  double prelu_init = 0.25;
  std::uint64_t init_seed = 0;
  Ablation ablation;

  /// Hidden size and raw encoder widths used in the original large-scale setup.
  static ModelConfig large_scale() {
    ModelConfig c;
    c.raw_dims = {768, 1024, 768};
    c.d = 768;
    c.n_heads = 8;
    return c;
  }

  void validate() const {
    if (d == 0) throw ConfigError("d must be positive");
    if (n_heads == 0 || d % n_heads != 0) {
      throw ConfigError("d (" + std::to_string(d) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    }
    if (classes < 2) throw ConfigError("at least two classes are required");
    if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
    for (auto r : raw_dims) {
      if (r == 0) throw ConfigError("raw feature dimensions must be positive");
    }
    if (refine_ksize == 0 || refine_stride == 0) {
      throw ConfigError("refine conv ksize and stride must be positive");
    }
    if (!(ln_eps > 0)) throw ConfigError("ln_eps must be positive");
    if (ablation.no_msr && ablation.no_mir && ablation.msr_variant == MsrAblation::kDropSegment) {
      throw ConfigError("no_msr and no_mir together leave nothing to classify");
    }
  }
};

}  // namespace giamic
