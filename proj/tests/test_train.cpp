#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "giamic/giamic.hpp"
#include "oracles.hpp"

using namespace giamic;
using T = Tensor<double>;

namespace {

Dataset tiny_data(std::uint32_t n = 12, std::uint64_t seed = 4) {
  SynthSpec s;
  s.n_samples = n;
  s.classes = 3;
  s.lengths = {2, 3, 2};
  s.raw_dims = {3, 5, 4};
  s.seed = seed;
  return generate(s);
}

ModelConfig tiny_model() {
  auto c = tiny_model_config();
  c.d = 8;
  return c;
}

TrainConfig quick(std::size_t epochs = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.lr = 1e-2;
  return t;
}

std::vector<double> flat_params(const Model<double>& m) {
  std::vector<double> out;
  for (const auto& e : m.params().entries()) out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore<double> store;
  auto w = store.filled("g/w", {1, 1}, 1.0);
  w.mutable_grad()[0] = 0.37;
  AdamState st;
  adam_step(store, st, {0.01, 0.9, 0.999, 1e-8});
  EXPECT_NEAR(w.data()[0], 1.0 - 0.01, 1e-9);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore<double> store;
  auto w = store.filled("g/w", {1, 2}, 0.5);
  AdamState st;
  w.mutable_grad()[0] = 1.0;
  adam_step(store, st, {});
  const double after_first = w.data()[0];
  const double m_before = st.m[0][0];
  w.zero_grad();
  adam_step(store, st, {});
  EXPECT_LT(std::abs(st.m[0][0]), std::abs(m_before));
  // the first moment still carries momentum, so only the untouched entry is fixed
  EXPECT_EQ(w.data()[1], 0.5);
  EXPECT_NE(w.data()[0], after_first);

  ParamStore<double> fresh;
  auto z = fresh.filled("g/z", {1, 3}, 0.25);
  AdamState st2;
  adam_step(fresh, st2, {});
  for (double v : z.data()) EXPECT_EQ(v, 0.25);
}

TEST(Adam, ThreeStepTraceMatchesScalarOracle) {
  ParamStore<double> store;
  auto w = store.filled("g/w", {1, 1}, 0.8);
  AdamState st;
  const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  oracle::ScalarAdam ref{0.05, 0.9, 0.999, 1e-8};
  double x = 0.8;
  for (double g : {0.3, -1.2, 0.05}) {
    w.mutable_grad()[0] = g;
    adam_step(store, st, cfg);
    x = ref.step(x, g);
    EXPECT_NEAR(w.data()[0], x, 1e-12);
  }
}

TEST(Adam, NaNGradientNamesParameter) {
  ParamStore<double> store;
  store.filled("g/ok", {1, 1}, 0.0);
  auto bad = store.filled("g/bad", {1, 1}, 0.0);
  bad.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState st;
  try {
    adam_step(store, st, {});
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("g/bad"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Accuracy, AllCorrect) {
  const std::vector<std::uint32_t> y{0, 1, 2, 1};
  const auto a = accuracy(y, y, 3);
  EXPECT_EQ(a.wa, 1.0);
  EXPECT_EQ(a.ua, 1.0);
}

TEST(Accuracy, ImbalancedCountingCase) {
  std::vector<std::uint32_t> labels(9, 0), pred(9, 0);
  labels.push_back(1);
  pred.push_back(0);
  const auto a = accuracy(labels, pred, 2);
  const auto [wa, ua] = oracle::accuracy(std::vector<int>(labels.begin(), labels.end()),
                                         std::vector<int>(pred.begin(), pred.end()), 2);
  EXPECT_DOUBLE_EQ(a.wa, 0.9);
  EXPECT_DOUBLE_EQ(a.ua, 0.5);
  EXPECT_DOUBLE_EQ(a.wa, wa);
  EXPECT_DOUBLE_EQ(a.ua, ua);
}

TEST(Accuracy, AbsentClassesAreExcluded) {
  const std::vector<std::uint32_t> labels{0, 0, 2}, pred{0, 1, 2};
  EXPECT_DOUBLE_EQ(accuracy(labels, pred, 4).ua, 0.75);
}

TEST(Accuracy, EmptyThrows) { EXPECT_THROW(accuracy({}, {}, 2), ConfigError); }

// ---------------------------------------------------------------------------
// Training

TEST(Train, ZeroEpochsLeavesParametersUnchanged) {
  Model<double> model(tiny_model());
  const auto before = flat_params(model);
  EXPECT_TRUE(train(model, tiny_data(), quick(0)).empty());
  EXPECT_EQ(flat_params(model), before);
}

TEST(Train, SameSeedSameTrajectory) {
  const auto data = tiny_data();
  auto a = train<double>(data, tiny_model(), quick());
  auto b = train<double>(data, tiny_model(), quick());
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.history[i].l_total, b.history[i].l_total);
    EXPECT_EQ(a.history[i].skl, b.history[i].skl);
  }
  EXPECT_EQ(flat_params(a.model), flat_params(b.model));
}

TEST(Train, DifferentSeedDifferentOrder) {
  const auto a = detail::epoch_order(50, 1, 0), b = detail::epoch_order(50, 2, 0),
             a1 = detail::epoch_order(50, 1, 1);
  EXPECT_NE(a, b);
  EXPECT_NE(a, a1);
  EXPECT_EQ(a, detail::epoch_order(50, 1, 0));
}

TEST(Train, MetricsAreConsistent) {
  const auto r = train<double>(tiny_data(), tiny_model(), quick(4));
  for (const auto& m : r.history) {
    EXPECT_GE(m.wa, 0.0);
    EXPECT_LE(m.wa, 1.0);
    EXPECT_GE(m.ua, 0.0);
    EXPECT_LE(m.ua, 1.0);
    EXPECT_GE(m.l_mir, 0.0);
    EXPECT_NEAR(m.l_total, m.l_er + 0.1 * m.l_mir, 1e-12);
    EXPECT_NEAR(m.l_mir, m.skl_sum(), 1e-12);
  }
  EXPECT_LT(r.history.back().l_er, r.history.front().l_er);
}

TEST(Train, NoMicMatchesZeroGamma) {
  const auto data = tiny_data();
  auto cfg_mic = tiny_model();
  cfg_mic.ablation.no_mic = true;
  auto t0 = quick();
  t0.gamma = 0;
  const auto a = train<double>(data, cfg_mic, quick());
  const auto b = train<double>(data, tiny_model(), t0);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].l_total, b.history[i].l_total);
    EXPECT_EQ(a.history[i].l_mir, b.history[i].l_mir);
    EXPECT_EQ(a.history[i].wa, b.history[i].wa);
  }
  EXPECT_EQ(flat_params(a.model), flat_params(b.model));
}

TEST(Train, SumReductionScalesTheGradient) {
  auto t = quick(1);
  t.reduction = LossReduction::kSum;
  const auto r = train<double>(tiny_data(), tiny_model(), t);
  EXPECT_EQ(r.history.size(), 1u);
}

TEST(Train, NaNInputAbortsWithLocation) {
  auto data = tiny_data();
  data.samples[5].seqs[0].values[0] = std::numeric_limits<float>::quiet_NaN();
  Model<double> model(tiny_model());
  auto t = quick(1);
  t.batch_size = 12;
  try {
    train(model, data, t);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0 batch 0"), std::string::npos) << e.what();
  }
}

TEST(Train, InvalidConfigRejected) {
  Model<double> model(tiny_model());
  auto t = quick();
  t.lr = 0;
  EXPECT_THROW(train(model, tiny_data(), t), ConfigError);
  t = quick();
  t.batch_size = 0;
  EXPECT_THROW(train(model, tiny_data(), t), ConfigError);
  t = quick();
  t.gamma = -1;
  EXPECT_THROW(train(model, tiny_data(), t), ConfigError);
}

TEST(Train, IncompatibleDatasetRejected) {
  Model<double> model(tiny_model());
  SynthSpec s;
  s.n_samples = 4;
  s.classes = 3;
  EXPECT_THROW(train(model, generate(s), quick()), DimensionError);
}

TEST(Evaluate, EmptyDatasetThrows) {
  Model<double> model(tiny_model());
  EXPECT_THROW(evaluate(model, Dataset{3, {}}), ConfigError);
}

TEST(Evaluate, DoesNotChangeParameters) {
  Model<double> model(tiny_model());
  const auto before = flat_params(model);
  const auto m = evaluate(model, tiny_data());
  EXPECT_EQ(m.epoch, -1);
  EXPECT_EQ(flat_params(model), before);
}

TEST(Alignment, ReportHasPooledEmbeddings) {
  Model<double> model(tiny_model());
  const auto data = tiny_data();
  const auto rep = alignment_report(model, data);
  ASSERT_EQ(rep.embeddings.size(), data.size());
  for (const auto& s : rep.embeddings.samples)
    for (const auto& q : s.seqs) {
      EXPECT_EQ(q.t, 1u);
      EXPECT_EQ(q.d, 8u);
    }
  EXPECT_NEAR(rep.sum(), evaluate(model, data).l_mir, 1e-12);
  // export reuses the feature-file format
  EXPECT_EQ(decode(encode(rep.embeddings)), rep.embeddings);
}

TEST(Alignment, RefusedWithoutMirBranch) {
  auto cfg = tiny_model();
  cfg.ablation.no_mir = true;
  Model<double> model(cfg);
  EXPECT_THROW(alignment_report(model, tiny_data()), ConfigError);
}

TEST(Ablation, FourRowsPerSeedAndMedians) {
  auto t = quick(1);
  const auto data = tiny_data();
  const auto table = run_ablation(data, data, tiny_model(), t, {1, 2});
  EXPECT_EQ(table.rows.size(), 8u);
  for (Variant v : kVariants) EXPECT_EQ(table.ua_of(v).size(), 2u);
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
}

// ---------------------------------------------------------------------------
// Configuration and checkpoints

TEST(ConfigIo, ParsesKeyValues) {
  std::istringstream in("# comment\nlr = 0.01\n\n  epochs=7  # trailing\nno_mic = true\n");
  const auto kv = parse_key_values(in);
  EXPECT_EQ(kv.size(), 3u);
  ModelConfig m;
  TrainConfig t;
  RunOptions run;
  for (const auto& [k, v] : kv) EXPECT_TRUE(apply_model_key(m, k, v) || apply_train_key(t, run, k, v));
  EXPECT_EQ(t.lr, 0.01);
  EXPECT_EQ(t.epochs, 7u);
  EXPECT_TRUE(m.ablation.no_mic);
}

TEST(ConfigIo, RejectsDuplicatesMalformedAndBadValues) {
  std::istringstream dup("a = 1\na = 2\n");
  EXPECT_THROW(parse_key_values(dup), ConfigError);
  std::istringstream bad("just words\n");
  EXPECT_THROW(parse_key_values(bad), ConfigError);
  TrainConfig t;
  RunOptions run;
  EXPECT_THROW(apply_train_key(t, run, "lr", "fast"), ConfigError);
  EXPECT_THROW(apply_train_key(t, run, "epochs", "-3"), ConfigError);
  EXPECT_FALSE(apply_train_key(t, run, "learning_rate", "0.1"));
  SynthSpec s;
  EXPECT_THROW(apply_synth_key(s, "lengths", "1,2"), ConfigError);
  EXPECT_TRUE(apply_synth_key(s, "lengths", "4"));
  EXPECT_EQ(s.lengths, (std::array<std::uint32_t, 3>{4, 4, 4}));
}

TEST(ConfigIo, MetricsJsonRoundTripAndKeyOrder) {
  MetricsRecord r{3, 0.5, 0.25, 0.525, 0.75, 0.7, {0.1, 0.05, 0.1}};
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"epoch", "l_er", "l_mir", "l_total", "wa", "ua",
                                            "skl_vs", "skl_st", "skl_tv"}));
  const auto back = metrics_from_json(ojson::parse(j.dump()));
  EXPECT_EQ(back.l_total, r.l_total);
  EXPECT_EQ(back.skl, r.skl);
}

TEST(ConfigIo, ModelConfigJsonRoundTrip) {
  auto c = tiny_model();
  c.ablation.no_msr = true;
  c.ablation.msr_variant = MsrAblation::kRawConcat;
  c.refine_stride = 2;
  const auto back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(ConfigIo, ParamsSaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "giamic_test_params.json";
  auto trained = train<double>(tiny_data(), tiny_model(), quick(1));
  save_params(trained.model, path);
  const auto loaded = load_params<double>(path);
  EXPECT_EQ(flat_params(loaded), flat_params(trained.model));
  const auto data = tiny_data();
  EXPECT_EQ(evaluate(loaded, data).l_total, evaluate(trained.model, data).l_total);
  std::filesystem::remove(path);
}
