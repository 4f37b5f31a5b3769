#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("giamic_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the CLI inside the scratch directory; returns the exit code.
  int run(const std::string& args, const std::string& stdout_name = "stdout.txt") {
    const std::string cmd = "cd '" + dir_.string() + "' && '" GIAMIC_CLI "' " + args + " > " +
                            stdout_name + " 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream f(dir_ / name, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  bool exists(const std::string& name) const { return fs::exists(dir_ / name); }

  void tiny_data() {
    ASSERT_EQ(run("gen-data --n 24 --classes 3 --lengths 2,3,2 --raw-dims 3,5,4 --seed 7 --out d.gmic"), 0);
  }

  static constexpr const char* kTinyModel = "--d 8 --n-heads 2 --batch-size 8 --lr 0.01 --folds 0";

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataIsReadableAndDeterministic) {
  ASSERT_EQ(run("gen-data --n 64 --classes 4 --seed 7 --out a.gmic", "a.txt"), 0);
  ASSERT_EQ(run("gen-data --n 64 --classes 4 --seed 7 --out b.gmic", "b.txt"), 0);
  EXPECT_EQ(read("a.gmic"), read("b.gmic"));
  const auto summary = nlohmann::json::parse(read("a.txt"));
  EXPECT_EQ(summary["n"], 64);
  EXPECT_EQ(summary["classes"], 4);
  EXPECT_EQ(summary["seed"], 7);
  EXPECT_EQ(summary["raw_dims"], nlohmann::json({32, 32, 24}));
}

TEST_F(Cli, GenDataRejectsSingleClass) {
  EXPECT_EQ(run("gen-data --classes 1 --out x.gmic"), 2);
  EXPECT_FALSE(exists("x.gmic"));
}

TEST_F(Cli, UnknownFlagIsConfigError) { EXPECT_EQ(run("train --data d.gmic --learning-rate 1"), 2); }

TEST_F(Cli, TrainZeroEpochsSavesInitialParams) {
  tiny_data();
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 0 ") + kTinyModel), 0);
  EXPECT_EQ(read("metrics.jsonl"), "");
  EXPECT_EQ(read("stdout.txt"), "");
  const auto params = nlohmann::json::parse(read("params.json"));
  EXPECT_EQ(params["format"], "giamic-params");
  const auto manifest = nlohmann::json::parse(read("manifest.json"));
  EXPECT_EQ(manifest["config"]["train"]["epochs"], 0);
  EXPECT_EQ(manifest["dataset"]["fingerprint"].get<std::string>().size(), 16u);
}

TEST_F(Cli, TrainStreamsOneJsonLinePerEpoch) {
  tiny_data();
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 3 --metrics-out m.jsonl ") + kTinyModel), 0);
  EXPECT_EQ(read("stdout.txt"), read("m.jsonl"));
  std::istringstream lines(read("m.jsonl"));
  std::string line;
  int epoch = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::ordered_json::parse(line);
    EXPECT_EQ(j["epoch"], epoch++);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"epoch", "l_er", "l_mir", "l_total", "wa", "ua",
                                              "skl_vs", "skl_st", "skl_tv"}));
  }
  EXPECT_EQ(epoch, 3);
}

TEST_F(Cli, MetricsFileIsAppended) {
  tiny_data();
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 1 --metrics-out m.jsonl ") + kTinyModel), 0);
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 1 --metrics-out m.jsonl ") + kTinyModel), 0);
  const auto text = read("m.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  tiny_data();
  write("run.cfg", "epochs = 2\nlr = 0.05\ngamma = 0.3\n");
  ASSERT_EQ(run(std::string("train --data d.gmic --config run.cfg --gamma 0.2 ") + kTinyModel), 0);
  const auto manifest = nlohmann::json::parse(read("manifest.json"));
  EXPECT_EQ(manifest["config"]["train"]["epochs"], 2);
  EXPECT_EQ(manifest["config"]["train"]["gamma"], 0.2);
  EXPECT_EQ(manifest["config"]["train"]["lr"], 0.01);
}

TEST_F(Cli, UnknownConfigKeyIsConfigError) {
  tiny_data();
  write("bad.cfg", "epochs = 2\nlearning_rate = 0.1\n");
  EXPECT_EQ(run("train --data d.gmic --config bad.cfg"), 2);
  EXPECT_EQ(run("train --data d.gmic --config missing.cfg"), 2);
}

TEST_F(Cli, CorruptMagicIsDataError) {
  tiny_data();
  auto bytes = read("d.gmic");
  bytes[0] = 'X';
  write("bad.gmic", bytes);
  EXPECT_EQ(run("train --data bad.gmic"), 3);
  EXPECT_EQ(run("train --data missing.gmic"), 3);
}

TEST_F(Cli, NoMicEqualsZeroGamma) {
  tiny_data();
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 2 --no-mic --metrics-out a.jsonl ") + kTinyModel), 0);
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 2 --gamma 0 --metrics-out b.jsonl ") + kTinyModel), 0);
  EXPECT_FALSE(read("a.jsonl").empty());
  EXPECT_EQ(read("a.jsonl"), read("b.jsonl"));
}

TEST_F(Cli, SameSeedSameMetricsBytes) {
  tiny_data();
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 2 --seed 3 --metrics-out a.jsonl ") + kTinyModel), 0);
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 2 --seed 3 --metrics-out b.jsonl ") + kTinyModel), 0);
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 2 --seed 4 --metrics-out c.jsonl ") + kTinyModel), 0);
  EXPECT_EQ(read("a.jsonl"), read("b.jsonl"));
  EXPECT_NE(read("a.jsonl"), read("c.jsonl"));
}

TEST_F(Cli, EvaluateAndExportEmbeddings) {
  tiny_data();
  ASSERT_EQ(run(std::string("train --data d.gmic --epochs 1 --export-embeddings e.gmic --summary-out s.json ") +
                kTinyModel),
            0);
  EXPECT_EQ(read("e.gmic").substr(0, 4), "GMIC");
  ASSERT_EQ(run("evaluate --params params.json --data d.gmic", "eval.txt"), 0);
  const auto eval = nlohmann::json::parse(read("eval.txt"));
  const auto summary = nlohmann::json::parse(read("s.json"));
  EXPECT_EQ(eval["l_total"], summary["eval"]["l_total"]);
  EXPECT_EQ(eval["epoch"], -1);
}

TEST_F(Cli, GradcheckListsEveryGroupOnce) {
  ASSERT_EQ(run("gradcheck --scale tiny"), 0);
  std::istringstream lines(read("stdout.txt"));
  std::string line;
  std::multiset<std::string> groups;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string name;
    fields >> name;
    if (name.rfind("encoder", 0) == 0 || name.rfind("gia.", 0) == 0 || name.rfind("mig.", 0) == 0 ||
        name == "head") {
      groups.insert(name);
      EXPECT_NE(line.find(" ok"), std::string::npos) << line;
    }
  }
  EXPECT_EQ(groups.size(), 11u);
  EXPECT_EQ(std::set<std::string>(groups.begin(), groups.end()).size(), 11u);
}

TEST_F(Cli, GradcheckDetectsCorruptedGroup) {
  EXPECT_EQ(run("gradcheck --scale tiny --corrupt-group 'gia.T->V'"), 4);
  EXPECT_NE(read("stdout.txt").find("FAIL"), std::string::npos);
  EXPECT_EQ(run("gradcheck --scale huge"), 2);
  EXPECT_EQ(run("gradcheck --corrupt-group nope"), 2);
}

TEST_F(Cli, AblateEmitsFourRowsPerSeed) {
  tiny_data();
  ASSERT_EQ(run(std::string("ablate --data d.gmic --seeds 2 --epochs 1 --table-out t.json ") + kTinyModel), 0);
  const auto table = nlohmann::json::parse(read("t.json"));
  EXPECT_EQ(table["rows"].size(), 8u);
  EXPECT_EQ(table["medians"].size(), 4u);
  EXPECT_NE(read("stdout.txt").find("medians over 2 seeds"), std::string::npos);
}
