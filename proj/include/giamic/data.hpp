#pragma once

// Synthetic tri-modal datasets and the GMIC feature-file format.
//
// GMIC layout (little-endian, no padding):
//   "GMIC" | u32 version=1 | u32 n_samples | u32 classes
//   per sample: u32 label, then for V, S, T: u32 t | u32 d | t*d float32 row-major

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "giamic/config.hpp"
#include "giamic/errors.hpp"
#include "giamic/tensor.hpp"

namespace giamic {

struct Seq {
  Modality modality = Modality::kVideo;
  std::uint32_t t = 0;
  std::uint32_t d = 0;
  std::vector<float> values;  // t * d, row-major

  float at(std::size_t r, std::size_t c) const { return values[r * d + c]; }
  bool operator==(const Seq&) const = default;
};

struct Sample {
  std::uint32_t label = 0;
  std::array<Seq, 3> seqs;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::uint32_t classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  bool operator==(const Dataset&) const = default;
};

template <typename T>
std::array<Tensor<T>, 3> to_tensors(const Sample& s) {
  std::array<Tensor<T>, 3> out;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& q = s.seqs[i];
    out[i] = Tensor<T>::constant({q.t, q.d}, std::vector<T>(q.values.begin(), q.values.end()));
  }
  return out;
}

struct SynthSpec {
  std::uint32_t n_samples = 512;
  std::uint32_t classes = 4;
  std::array<std::uint32_t, 3> lengths{8, 8, 8};    // k, m, n
  std::array<std::uint32_t, 3> raw_dims{32, 32, 24};
  double alpha = 2.0;                               // shared class signal
  std::array<double, 3> beta{0.5, 0.5, 0.5};        // modality-specific class signal
  double delta = 0.5;                               // domain shift
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  std::vector<double> priors;                       // empty = uniform

  void validate() const {
    if (classes < 2) throw ConfigError("synthetic spec needs at least two classes");
    for (auto l : lengths) {
      if (l < 1) throw ConfigError("sequence lengths must be >= 1");
    }
    for (auto d : raw_dims) {
      if (d < 1) throw ConfigError("raw feature dims must be >= 1");
    }
    if (!(alpha >= 0) || !(delta >= 0) || !(noise_std >= 0)) {
      throw ConfigError("alpha, delta and noise_std must be >= 0");
    }
    bool any_beta = false;
    for (auto b : beta) {
      if (!(b >= 0)) throw ConfigError("beta must be >= 0");
      any_beta = any_beta || b > 0;
    }
    if (alpha == 0 && !any_beta && noise_std == 0) {
      throw ConfigError("degenerate spec: no signal and no noise");
    }
    if (!priors.empty()) {
      if (priors.size() != classes) throw ConfigError("prior vector length must equal classes");
      double sum = 0;
      for (auto p : priors) {
        if (!(p >= 0)) throw ConfigError("priors must be >= 0");
        sum += p;
      }
      if (!(sum > 0)) throw ConfigError("priors must not all be zero");
    }
  }
};

namespace detail {

inline std::vector<double> gaussian_unit(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  double norm = 0;
  do {
    norm = 0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

/// Per-class label counts; largest-remainder rounding of n * prior.
inline std::vector<std::uint32_t> class_counts(const SynthSpec& spec) {
  const std::size_t e = spec.classes;
  std::vector<double> prior = spec.priors;
  if (prior.empty()) prior.assign(e, 1.0);
  const double total = std::accumulate(prior.begin(), prior.end(), 0.0);
  std::vector<std::uint32_t> counts(e);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::uint32_t assigned = 0;
  for (std::size_t c = 0; c < e; ++c) {
    const double exact = spec.n_samples * prior[c] / total;
    counts[c] = static_cast<std::uint32_t>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - counts[c], c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < spec.n_samples; ++i, ++assigned) {
    ++counts[remainders[i % e].second];
  }
  return counts;
}

}  // namespace detail

/// Draws a labelled tri-modal dataset. Each modality of a class-c sample is
///   x_t = A_M (alpha u_c + beta_M v_{c,M}) + delta mu_M + noise_std N(0, I)
/// with u_c a unit class direction shared by all modalities (occupying the
/// first min(d_V, d_S, d_T) coordinates), v_{c,M} an independent unit
/// direction per class and modality, A_M = I + delta R_M / sqrt(d_M) a fixed
/// mixing map and mu_M a fixed unit offset. Pure function of the spec.
inline Dataset generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t e = spec.classes;
  std::seed_seq world_seq{static_cast<std::uint32_t>(spec.seed),
                          static_cast<std::uint32_t>(spec.seed >> 32), 0x9e3779b9u};
  std::mt19937_64 rng(world_seq);

  const std::size_t d_min = *std::min_element(spec.raw_dims.begin(), spec.raw_dims.end());
  std::vector<std::vector<double>> shared(e);
  for (auto& u : shared) u = detail::gaussian_unit(rng, d_min);

  // clean[M][c] = A_M (alpha u_c + beta_M v_{c,M}) + delta mu_M
  std::array<std::vector<std::vector<double>>, 3> clean;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t m = 0; m < 3; ++m) {
    const std::size_t d = spec.raw_dims[m];
    std::vector<double> mix(d * d);
    for (auto& x : mix) x = normal(rng);
    const auto offset = detail::gaussian_unit(rng, d);
    clean[m].resize(e);
    for (std::size_t c = 0; c < e; ++c) {
      const auto specific = detail::gaussian_unit(rng, d);
      std::vector<double> signal(d, 0.0);
      for (std::size_t j = 0; j < d; ++j) {
        signal[j] = spec.beta[m] * specific[j] + (j < d_min ? spec.alpha * shared[c][j] : 0.0);
      }
      std::vector<double> out(d, 0.0);
      const double mix_scale = spec.delta / std::sqrt(static_cast<double>(d));
      for (std::size_t i = 0; i < d; ++i) {
        double acc = signal[i];
        if (spec.delta != 0) {
          for (std::size_t j = 0; j < d; ++j) acc += mix_scale * mix[i * d + j] * signal[j];
        }
        out[i] = acc + spec.delta * offset[i];
      }
      clean[m][c] = std::move(out);
    }
  }

  const auto counts = detail::class_counts(spec);
  std::vector<std::uint32_t> labels;
  labels.reserve(spec.n_samples);
  for (std::size_t c = 0; c < e; ++c) labels.insert(labels.end(), counts[c], std::uint32_t(c));
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset ds;
  ds.classes = spec.classes;
  ds.samples.resize(spec.n_samples);
  for (std::uint32_t i = 0; i < spec.n_samples; ++i) {
    std::seed_seq sample_seq{static_cast<std::uint32_t>(spec.seed),
                             static_cast<std::uint32_t>(spec.seed >> 32), i, 0x85ebca6bu};
    std::mt19937_64 srng(sample_seq);
    std::normal_distribution<double> noise(0.0, 1.0);
    auto& s = ds.samples[i];
    s.label = labels[i];
    for (std::size_t m = 0; m < 3; ++m) {
      auto& q = s.seqs[m];
      q.modality = kModalities[m];
      q.t = spec.lengths[m];
      q.d = spec.raw_dims[m];
      q.values.resize(std::size_t(q.t) * q.d);
      const auto& base = clean[m][s.label];
      for (std::size_t r = 0; r < q.t; ++r) {
        for (std::size_t j = 0; j < q.d; ++j) {
          const double n = spec.noise_std > 0 ? spec.noise_std * noise(srng) : 0.0;
          q.values[r * q.d + j] = static_cast<float>(base[j] + n);
        }
      }
    }
  }
  return ds;
}

/// Contiguous fold blocks; the first n % folds folds get one extra sample.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t folds,
                                         std::size_t fold_index) {
  if (folds < 2) throw ConfigError("split: folds must be >= 2");
  if (fold_index >= folds) throw ConfigError("split: fold index out of range");
  const std::size_t n = ds.size(), base = n / folds, extra = n % folds;
  const std::size_t begin = fold_index * base + std::min(fold_index, extra);
  const std::size_t end = begin + base + (fold_index < extra ? 1 : 0);
  Dataset train{ds.classes, {}}, test{ds.classes, {}};
  for (std::size_t i = 0; i < n; ++i) {
    (i >= begin && i < end ? test : train).samples.push_back(ds.samples[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// GMIC encoding

inline constexpr std::array<char, 4> kGmicMagic{'G', 'M', 'I', 'C'};
inline constexpr std::uint32_t kGmicVersion = 1;
inline constexpr std::uint64_t kGmicMaxElements = std::uint64_t{1} << 28;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  void floats(std::vector<float>& out, std::size_t n) {
    need(n * 4, "feature values");
    out.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
      out[k] = std::bit_cast<float>(v);
      pos_ += 4;
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(FormatErrc::kTruncated, std::string("file ends inside ") + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Dataset& ds) {
  std::vector<std::uint8_t> out(kGmicMagic.begin(), kGmicMagic.end());
  detail::put_u32(out, kGmicVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  detail::put_u32(out, ds.classes);
  for (const auto& s : ds.samples) {
    detail::put_u32(out, s.label);
    for (const auto& q : s.seqs) {
      if (q.values.size() != std::size_t(q.t) * q.d) {
        throw FormatError(FormatErrc::kDimensionOverflow, "sequence size disagrees with t*d");
      }
      detail::put_u32(out, q.t);
      detail::put_u32(out, q.d);
      for (float f : q.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

/// Parses a complete GMIC image; never returns a partial dataset.
inline Dataset decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kGmicMagic.begin(), kGmicMagic.end(), bytes.begin())) {
    throw FormatError(FormatErrc::kBadMagic, "missing GMIC magic");
  }
  detail::Reader in(bytes.subspan(4));
  const auto version = in.u32("header");
  if (version != kGmicVersion) {
    throw FormatError(FormatErrc::kVersionMismatch,
                      "unsupported version " + std::to_string(version));
  }
  const auto n = in.u32("header");
  Dataset ds;
  ds.classes = in.u32("header");
  // Every record carries at least 28 bytes of header; reject impossible counts
  // before allocating.
  if (std::uint64_t(n) * 28 > in.remaining()) {
    throw FormatError(FormatErrc::kTruncated, "sample count exceeds file size");
  }
  ds.samples.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& s = ds.samples[i];
    s.label = in.u32("label");
    if (s.label >= ds.classes) {
      throw FormatError(FormatErrc::kInvalidLabel, "sample " + std::to_string(i) + " label " +
                                                       std::to_string(s.label));
    }
    for (std::size_t m = 0; m < 3; ++m) {
      auto& q = s.seqs[m];
      q.modality = kModalities[m];
      q.t = in.u32("sequence header");
      q.d = in.u32("sequence header");
      const std::uint64_t count = std::uint64_t(q.t) * q.d;
      if (q.t == 0 || q.d == 0 || count > kGmicMaxElements) {
        throw FormatError(FormatErrc::kDimensionOverflow,
                          "sample " + std::to_string(i) + " has dimensions " +
                              std::to_string(q.t) + "x" + std::to_string(q.d));
      }
      in.floats(q.values, static_cast<std::size_t>(count));
    }
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatErrc::kTrailingData,
                      std::to_string(in.remaining()) + " bytes after last record");
  }
  return ds;
}

inline void write_features(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode(ds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatErrc::kIo, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatErrc::kIo, "write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatErrc::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Dataset read_features(const std::filesystem::path& path) { return decode(read_bytes(path)); }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fingerprint(const Dataset& ds) { return fnv1a(encode(ds)); }

}  // namespace giamic
