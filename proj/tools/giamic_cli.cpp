// giamic: data generation, training, evaluation, gradient checks and the
// ablation sweep.
//
// Exit codes: 0 success, 2 config error, 3 data/format error, 4 numerical
// failure (NaN, failed gradient check).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "giamic/giamic.hpp"

namespace {

using namespace giamic;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

#ifndef GIAMIC_VERSION
#define GIAMIC_VERSION "dev"
#endif

/// String-valued CLI options keyed by config key; only flags the user
/// actually passed end up in the override map.
class Overrides {
 public:
  void option(CLI::App* app, const std::string& key, const std::string& help) {
    auto& slot = storage_[key];
    opts_.emplace_back(key, app->add_option("--" + dashed(key), slot, help));
  }
  void flag(CLI::App* app, const std::string& key, const std::string& help) {
    opts_.emplace_back(key, app->add_flag("--" + dashed(key), help));
  }

  KeyValues resolve(const std::string& config_path) const {
    KeyValues kv = config_path.empty() ? KeyValues{} : read_config_file(config_path);
    for (const auto& [key, opt] : opts_) {
      if (opt->count() == 0) continue;
      auto it = storage_.find(key);
      kv[key] = it != storage_.end() ? it->second : "true";
    }
    return kv;
  }

 private:
  static std::string dashed(std::string s) {
    for (auto& c : s)
      if (c == '_') c = '-';
    return s;
  }

  std::map<std::string, std::string> storage_;
  std::vector<std::pair<std::string, CLI::Option*>> opts_;
};

void add_model_options(CLI::App* app, Overrides& o) {
  o.option(app, "d", "shared feature width");
  o.option(app, "n_heads", "encoder attention heads");
  o.option(app, "ffn_mult", "encoder FFN width multiplier");
  o.option(app, "share_extractor", "share the encoder block across modalities (true/false)");
  o.option(app, "positional_encoding", "add sinusoidal positions in the encoder (true/false)");
  o.option(app, "refine_ksize", "MIG refine conv kernel size");
  o.option(app, "refine_stride", "MIG refine conv stride");
  o.option(app, "ln_eps", "layer-norm epsilon");
  o.option(app, "prelu_init", "initial PReLU slope");
  o.option(app, "msr_variant", "w/o MSR wiring: drop-segment or raw-concat");
}

void add_train_options(CLI::App* app, Overrides& o) {
  o.option(app, "lr", "Adam learning rate");
  o.option(app, "batch_size", "mini-batch size");
  o.option(app, "epochs", "training epochs");
  o.option(app, "gamma", "weight of the alignment loss");
  o.option(app, "beta1", "Adam beta1");
  o.option(app, "beta2", "Adam beta2");
  o.option(app, "adam_eps", "Adam epsilon");
  o.option(app, "seed", "seed for initialisation and batch order");
  o.option(app, "loss_reduction", "mean or sum over the batch");
  o.option(app, "folds", "cross-validation folds (0 = no held-out split)");
  o.option(app, "fold_index", "held-out fold");
}

struct Resolved {
  ModelConfig model;
  TrainConfig train;
  RunOptions run;
};

Resolved resolve_run(const KeyValues& kv, const Dataset& ds) {
  Resolved r;
  for (const auto& [key, value] : kv) {
    if (!apply_model_key(r.model, key, value) && !apply_train_key(r.train, r.run, key, value)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  r.model.classes = ds.classes;
  if (!ds.empty()) {
    for (std::size_t m = 0; m < 3; ++m) r.model.raw_dims[m] = ds.samples.front().seqs[m].d;
  }
  r.model.init_seed = r.train.seed;
  r.model.validate();
  r.train.validate();
  if (r.run.folds == 1) throw ConfigError("folds must be 0 or >= 2");
  if (r.run.folds >= 2 && r.run.fold_index >= r.run.folds) {
    throw ConfigError("fold_index out of range");
  }
  return r;
}

std::pair<Dataset, Dataset> train_eval_split(const Dataset& ds, const RunOptions& run) {
  if (run.folds >= 2) return split(ds, run.folds, run.fold_index);
  return {ds, ds};
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_json(const fs::path& path, const ojson& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError(FormatErrc::kIo, "cannot write " + path.string());
  f << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  Overrides overrides;
  std::string config;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  SynthSpec spec;
  for (const auto& [key, value] : a.overrides.resolve(a.config)) {
    if (!apply_synth_key(spec, key, value)) throw ConfigError("unknown config key '" + key + "'");
  }
  const auto ds = generate(spec);
  write_features(ds, a.out);
  ojson summary{{"n", ds.size()},         {"classes", ds.classes},
                {"lengths", spec.lengths}, {"raw_dims", spec.raw_dims},
                {"seed", spec.seed},       {"fingerprint", hex64(fingerprint(ds))},
                {"out", a.out}};
  std::cout << summary.dump() << std::endl;
  return 0;
}

struct TrainArgs {
  Overrides overrides;
  std::string config;
  std::string data;
  std::string metrics_out = "metrics.jsonl";
  std::string params_out = "params.json";
  std::string manifest_out = "manifest.json";
  std::string summary_out;
  std::string export_embeddings;
};

int cmd_train(const TrainArgs& a) {
  const auto kv = a.overrides.resolve(a.config);
  const auto ds = read_features(a.data);
  const auto cfg = resolve_run(kv, ds);
  const auto [train_set, eval_set] = train_eval_split(ds, cfg.run);

  ojson manifest{
      {"tool", "giamic"},
      {"version", GIAMIC_VERSION},
      {"command", "train"},
      {"seed", cfg.train.seed},
      {"config", {{"model", to_json(cfg.model)},
                  {"train", to_json(cfg.train)},
                  {"run", {{"folds", cfg.run.folds}, {"fold_index", cfg.run.fold_index}}}}},
      {"dataset", {{"path", a.data}, {"fingerprint", hex64(fingerprint(ds))},
                   {"n", ds.size()}, {"classes", ds.classes}}},
      {"artifacts", {{"metrics", a.metrics_out}, {"params", a.params_out},
                     {"manifest", a.manifest_out}, {"summary", a.summary_out},
                     {"embeddings", a.export_embeddings}}}};
  write_json(a.manifest_out, manifest);

  std::ofstream metrics(a.metrics_out, std::ios::app);
  if (!metrics) throw FormatError(FormatErrc::kIo, "cannot open " + a.metrics_out);

  Model<double> model(cfg.model);
  train(model, train_set, cfg.train, [&](const MetricsRecord& r) {
    const auto line = to_json(r).dump();
    std::cout << line << std::endl;
    metrics << line << '\n' << std::flush;
  });
  save_params(model, a.params_out);

  if (!train_set.empty()) {
    const auto train_m = evaluate(model, train_set, cfg.train.gamma);
    const auto eval_m = evaluate(model, eval_set, cfg.train.gamma);
    std::cerr << "final train WA " << train_m.wa << " UA " << train_m.ua << " | held-out WA "
              << eval_m.wa << " UA " << eval_m.ua << '\n';
    if (!a.summary_out.empty()) {
      write_json(a.summary_out, ojson{{"train", to_json(train_m)}, {"eval", to_json(eval_m)}});
    }
    if (!a.export_embeddings.empty()) {
      const auto rep = alignment_report(model, eval_set);
      write_features(rep.embeddings, a.export_embeddings);
      std::cerr << "alignment skl_vs " << rep.skl[0] << " skl_st " << rep.skl[1] << " skl_tv "
                << rep.skl[2] << '\n';
    }
  }
  return 0;
}

struct EvaluateArgs {
  std::string params;
  std::string data;
  double gamma = 0.1;
  std::size_t folds = 0;
  std::size_t fold_index = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto model = load_params<double>(a.params);
  const auto ds = read_features(a.data);
  const auto eval_set = a.folds >= 2 ? split(ds, a.folds, a.fold_index).second : ds;
  std::cout << to_json(evaluate(model, eval_set, a.gamma)).dump() << std::endl;
  return 0;
}

struct GradcheckArgs {
  std::string scale = "tiny";
  std::string corrupt_group;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.scale != "tiny") throw ConfigError("gradcheck: only --scale tiny is supported");
  GradcheckOptions opt;
  opt.corrupt_group = a.corrupt_group;
  const auto report = model_gradcheck(opt);
  if (!a.corrupt_group.empty()) {
    bool known = false;
    for (const auto& g : report.groups) known = known || g.group == a.corrupt_group;
    if (!known) throw ConfigError("unknown parameter group '" + a.corrupt_group + "'");
  }
  std::cout << std::left << std::setw(12) << "group" << std::right << std::setw(9) << "entries"
            << std::setw(16) << "max_rel_err" << "  status\n";
  for (const auto& g : report.groups) {
    std::cout << std::left << std::setw(12) << g.group << std::right << std::setw(9) << g.entries
              << std::setw(16) << std::scientific << std::setprecision(3) << g.max_rel_error
              << std::defaultfloat << "  " << (g.max_rel_error < report.threshold ? "ok" : "FAIL")
              << '\n';
  }
  std::cout << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " (threshold "
            << report.threshold << ")\n";
  return report.passed() ? 0 : kExitNumerical;
}

struct AblateArgs {
  Overrides overrides;
  std::string config;
  std::string data;
  std::size_t seeds = 5;
  std::uint64_t seed_base = 0;
  std::string table_out;
};

int cmd_ablate(const AblateArgs& a) {
  const auto ds = read_features(a.data);
  const auto cfg = resolve_run(a.overrides.resolve(a.config), ds);
  if (a.seeds < 1) throw ConfigError("--seeds must be >= 1");
  const auto [train_set, eval_set] = train_eval_split(ds, cfg.run);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(a.seed_base + i);

  std::cout << std::left << std::setw(10) << "variant" << std::setw(8) << "seed" << std::setw(10)
            << "WA" << "UA\n";
  std::cout << std::fixed << std::setprecision(4);
  const auto table = run_ablation(train_set, eval_set, cfg.model, cfg.train, seeds,
                                  [](const AblationRow& r) {
                                    std::cout << std::left << std::setw(10) << name(r.variant)
                                              << std::setw(8) << r.seed << std::setw(10) << r.wa
                                              << r.ua << std::endl;
                                  });
  ojson medians = ojson::object();
  std::cout << "medians over " << seeds.size() << " seeds\n";
  for (Variant v : kVariants) {
    const double wa = median(table.wa_of(v)), ua = median(table.ua_of(v));
    std::cout << std::left << std::setw(18) << name(v) << std::setw(10) << wa << ua << '\n';
    medians[name(v)] = {{"wa", wa}, {"ua", ua}};
  }
  if (!a.table_out.empty()) {
    ojson rows = ojson::array();
    for (const auto& r : table.rows) {
      rows.push_back({{"variant", name(r.variant)}, {"seed", r.seed}, {"wa", r.wa}, {"ua", r.ua}});
    }
    write_json(a.table_out, ojson{{"rows", rows}, {"medians", medians}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GIA-MIC multimodal fusion: synthetic data, training and verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", GIAMIC_VERSION);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic tri-modal feature file");
  gen_cmd->add_option("--config", gen.config, "key = value config file");
  gen_cmd->add_option("--out", gen.out, "output GMIC file")->required();
  gen.overrides.option(gen_cmd, "n", "number of samples");
  gen.overrides.option(gen_cmd, "classes", "number of emotion classes (>= 2)");
  gen.overrides.option(gen_cmd, "lengths", "sequence lengths k,m,n");
  gen.overrides.option(gen_cmd, "raw_dims", "raw feature widths d_V,d_S,d_T");
  gen.overrides.option(gen_cmd, "alpha", "shared signal strength");
  gen.overrides.option(gen_cmd, "beta", "modality-specific signal strength (1 or 3 values)");
  gen.overrides.option(gen_cmd, "delta", "domain shift strength");
  gen.overrides.option(gen_cmd, "noise", "noise standard deviation");
  gen.overrides.option(gen_cmd, "seed", "generator seed");
  gen.overrides.option(gen_cmd, "priors", "comma-separated class priors");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train on a GMIC file, streaming JSON metrics");
  train_cmd->add_option("--data", tr.data, "input GMIC file")->required();
  train_cmd->add_option("--config", tr.config, "key = value config file");
  train_cmd->add_option("--metrics-out", tr.metrics_out, "JSON-lines metrics file (appended)");
  train_cmd->add_option("--params-out", tr.params_out, "parameter checkpoint");
  train_cmd->add_option("--manifest-out", tr.manifest_out, "run manifest");
  train_cmd->add_option("--summary-out", tr.summary_out, "final train/held-out metrics");
  train_cmd->add_option("--export-embeddings", tr.export_embeddings,
                        "GMIC file of pooled MIG embeddings on the held-out set");
  add_model_options(train_cmd, tr.overrides);
  add_train_options(train_cmd, tr.overrides);
  tr.overrides.flag(train_cmd, "no_msr", "ablate the modality-specific branch");
  tr.overrides.flag(train_cmd, "no_mir", "ablate the modality-invariant branch");
  tr.overrides.flag(train_cmd, "no_mic", "drop the alignment loss (gamma = 0)");

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a saved checkpoint on a GMIC file");
  eval_cmd->add_option("--params", ev.params, "parameter checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "input GMIC file")->required();
  eval_cmd->add_option("--gamma", ev.gamma, "alignment loss weight for the reported L_total");
  eval_cmd->add_option("--folds", ev.folds, "evaluate only the held-out fold of this split");
  eval_cmd->add_option("--fold-index", ev.fold_index, "held-out fold");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  gc_cmd->add_option("--scale", gc.scale, "model scale (tiny)");
  gc_cmd->add_option("--corrupt-group", gc.corrupt_group,
                     "test hook: corrupt the analytic gradient of one group")
      ->group("");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "full model vs. w/o MSR, w/o MIR, w/o MIC");
  ab_cmd->add_option("--data", ab.data, "input GMIC file")->required();
  ab_cmd->add_option("--config", ab.config, "key = value config file");
  ab_cmd->add_option("--seeds", ab.seeds, "number of seeds");
  ab_cmd->add_option("--seed-base", ab.seed_base, "first seed");
  ab_cmd->add_option("--table-out", ab.table_out, "JSON table of rows and medians");
  add_model_options(ab_cmd, ab.overrides);
  add_train_options(ab_cmd, ab.overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_evaluate(ev);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    if (ab_cmd->parsed()) return cmd_ablate(ab);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
