#pragma once

// Flat "key = value" configuration files and JSON views of the configs.
//
// Every key a command accepts is listed in one of the key tables below; an
// unknown key is a hard error. Command-line flags use the same key names
// (with '-' for '_'), so resolution is simply defaults < file < flags.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "giamic/config.hpp"
#include "giamic/data.hpp"
#include "giamic/errors.hpp"
#include "giamic/train.hpp"

namespace giamic {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename U, std::size_t N, typename F>
std::array<U, N> to_triple(const std::string& key, const std::string& v, F convert) {
  const auto parts = split_list(v);
  std::array<U, N> out{};
  if (parts.size() == 1) {
    out.fill(static_cast<U>(convert(key, parts[0])));
  } else if (parts.size() == N) {
    for (std::size_t i = 0; i < N; ++i) out[i] = static_cast<U>(convert(key, parts[i]));
  } else {
    throw ConfigError("key '" + key + "': expected 1 or " + std::to_string(N) + " values");
  }
  return out;
}

}  // namespace detail

/// Parses "key = value" lines; '#' starts a comment. Duplicate keys are errors.
inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "<config>") {
  KeyValues kv;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

inline KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  return parse_key_values(f, path.string());
}

/// Applies a model key; returns false if the key is not a model key.
inline bool apply_model_key(ModelConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "d") c.d = to_uint(key, v);
  else if (key == "n_heads") c.n_heads = to_uint(key, v);
  else if (key == "ffn_mult") c.ffn_mult = to_uint(key, v);
  else if (key == "share_extractor") c.share_extractor = to_bool(key, v);
  else if (key == "positional_encoding") c.positional_encoding = to_bool(key, v);
  else if (key == "refine_ksize") c.refine_ksize = to_uint(key, v);
  else if (key == "refine_stride") c.refine_stride = to_uint(key, v);
  else if (key == "ln_eps") c.ln_eps = to_double(key, v);
  else if (key == "prelu_init") c.prelu_init = to_double(key, v);
  else if (key == "no_msr") c.ablation.no_msr = to_bool(key, v);
  else if (key == "no_mir") c.ablation.no_mir = to_bool(key, v);
  else if (key == "no_mic") c.ablation.no_mic = to_bool(key, v);
  else if (key == "msr_variant") {
    if (v == "drop-segment") c.ablation.msr_variant = MsrAblation::kDropSegment;
    else if (v == "raw-concat") c.ablation.msr_variant = MsrAblation::kRawConcat;
    else throw ConfigError("msr_variant must be drop-segment or raw-concat");
  } else return false;
  return true;
}

/// Training keys, plus the held-out split used for evaluation.
struct RunOptions {
  std::size_t folds = 5;      // 0 = train and evaluate on the full dataset
  std::size_t fold_index = 0;
};

inline bool apply_train_key(TrainConfig& c, RunOptions& run, const std::string& key,
                            const std::string& v) {
  using namespace detail;
  if (key == "lr") c.lr = to_double(key, v);
  else if (key == "batch_size") c.batch_size = to_uint(key, v);
  else if (key == "epochs") c.epochs = to_uint(key, v);
  else if (key == "gamma") c.gamma = to_double(key, v);
  else if (key == "beta1") c.beta1 = to_double(key, v);
  else if (key == "beta2") c.beta2 = to_double(key, v);
  else if (key == "adam_eps") c.adam_eps = to_double(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "loss_reduction") {
    if (v == "mean") c.reduction = LossReduction::kMean;
    else if (v == "sum") c.reduction = LossReduction::kSum;
    else throw ConfigError("loss_reduction must be mean or sum");
  } else if (key == "folds") run.folds = to_uint(key, v);
  else if (key == "fold_index") run.fold_index = to_uint(key, v);
  else return false;
  return true;
}

inline bool apply_synth_key(SynthSpec& s, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "n") s.n_samples = static_cast<std::uint32_t>(to_uint(key, v));
  else if (key == "classes") s.classes = static_cast<std::uint32_t>(to_uint(key, v));
  else if (key == "lengths") s.lengths = to_triple<std::uint32_t, 3>(key, v, to_uint);
  else if (key == "raw_dims") s.raw_dims = to_triple<std::uint32_t, 3>(key, v, to_uint);
  else if (key == "alpha") s.alpha = to_double(key, v);
  else if (key == "beta") s.beta = to_triple<double, 3>(key, v, to_double);
  else if (key == "delta") s.delta = to_double(key, v);
  else if (key == "noise") s.noise_std = to_double(key, v);
  else if (key == "seed") s.seed = to_uint(key, v);
  else if (key == "priors") {
    s.priors.clear();
    for (const auto& p : split_list(v)) s.priors.push_back(to_double(key, p));
  } else return false;
  return true;
}

// ---------------------------------------------------------------------------
// JSON views

using ojson = nlohmann::ordered_json;

inline ojson to_json(const ModelConfig& c) {
  return ojson{{"raw_dims", c.raw_dims},
               {"d", c.d},
               {"n_heads", c.n_heads},
               {"ffn_mult", c.ffn_mult},
               {"classes", c.classes},
               {"share_extractor", c.share_extractor},
               {"positional_encoding", c.positional_encoding},
               {"refine_ksize", c.refine_ksize},
               {"refine_stride", c.refine_stride},
               {"ln_eps", c.ln_eps},
               {"prelu_init", c.prelu_init},
               {"init_seed", c.init_seed},
               {"no_msr", c.ablation.no_msr},
               {"no_mir", c.ablation.no_mir},
               {"no_mic", c.ablation.no_mic},
               {"msr_variant", c.ablation.msr_variant == MsrAblation::kDropSegment
                                   ? "drop-segment"
                                   : "raw-concat"}};
}

inline ModelConfig model_config_from_json(const ojson& j) {
  ModelConfig c;
  c.raw_dims = j.at("raw_dims").get<std::array<std::size_t, 3>>();
  c.classes = j.at("classes").get<std::size_t>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  for (const auto& key : {"d", "n_heads", "ffn_mult", "share_extractor", "positional_encoding",
                          "refine_ksize", "refine_stride", "ln_eps", "prelu_init", "no_msr",
                          "no_mir", "no_mic", "msr_variant"}) {
    const auto& v = j.at(key);
    apply_model_key(c, key, v.is_string() ? v.get<std::string>() : v.dump());
  }
  return c;
}

inline ojson to_json(const TrainConfig& c) {
  return ojson{{"lr", c.lr},           {"batch_size", c.batch_size}, {"epochs", c.epochs},
               {"gamma", c.gamma},     {"beta1", c.beta1},           {"beta2", c.beta2},
               {"adam_eps", c.adam_eps}, {"seed", c.seed},
               {"loss_reduction", c.reduction == LossReduction::kMean ? "mean" : "sum"}};
}

inline ojson to_json(const SynthSpec& s) {
  return ojson{{"n", s.n_samples}, {"classes", s.classes}, {"lengths", s.lengths},
               {"raw_dims", s.raw_dims}, {"alpha", s.alpha}, {"beta", s.beta},
               {"delta", s.delta}, {"noise", s.noise_std}, {"seed", s.seed},
               {"priors", s.priors}};
}

/// One metrics line; key order is fixed.
inline ojson to_json(const MetricsRecord& r) {
  return ojson{{"epoch", r.epoch},     {"l_er", r.l_er},        {"l_mir", r.l_mir},
               {"l_total", r.l_total}, {"wa", r.wa},            {"ua", r.ua},
               {"skl_vs", r.skl[0]},   {"skl_st", r.skl[1]},    {"skl_tv", r.skl[2]}};
}

inline MetricsRecord metrics_from_json(const ojson& j) {
  MetricsRecord r;
  r.epoch = j.at("epoch").get<std::int64_t>();
  r.l_er = j.at("l_er").get<double>();
  r.l_mir = j.at("l_mir").get<double>();
  r.l_total = j.at("l_total").get<double>();
  r.wa = j.at("wa").get<double>();
  r.ua = j.at("ua").get<double>();
  r.skl = {j.at("skl_vs").get<double>(), j.at("skl_st").get<double>(),
           j.at("skl_tv").get<double>()};
  return r;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints

template <typename T>
ojson params_to_json(const Model<T>& model) {
  ojson params = ojson::object();
  for (const auto& e : model.params().entries()) {
    params[e.name] = ojson{{"shape", e.tensor.shape()},
                           {"values", std::vector<double>(e.tensor.data().begin(),
                                                          e.tensor.data().end())}};
  }
  return ojson{{"format", "giamic-params"},
               {"version", 1},
               {"config", to_json(model.config())},
               {"params", params}};
}

template <typename T>
void save_params(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(FormatErrc::kIo, "cannot open " + path.string() + " for writing");
  f << params_to_json(model).dump() << '\n';
}

template <typename T>
Model<T> load_params(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError(FormatErrc::kIo, "cannot open " + path.string());
  ojson j;
  try {
    j = ojson::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrc::kBadMagic, std::string("not a JSON checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "giamic-params") {
    throw FormatError(FormatErrc::kBadMagic, "not a giamic parameter file");
  }
  if (j.value("version", 0) != 1) throw FormatError(FormatErrc::kVersionMismatch, "checkpoint");
  Model<T> model(model_config_from_json(j.at("config")));
  const auto& params = j.at("params");
  for (const auto& e : model.params().entries()) {
    if (!params.contains(e.name)) throw FormatError(FormatErrc::kTruncated, "missing " + e.name);
    const auto& p = params.at(e.name);
    const auto shape = p.at("shape").template get<Shape>();
    const auto values = p.at("values").template get<std::vector<double>>();
    if (shape != e.tensor.shape() || values.size() != e.tensor.numel()) {
      throw FormatError(FormatErrc::kDimensionOverflow, "shape mismatch for " + e.name);
    }
    auto dst = Tensor<T>(e.tensor).mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) dst[k] = static_cast<T>(values[k]);
  }
  return model;
}

}  // namespace giamic
