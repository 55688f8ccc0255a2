#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("iotguard_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "small.json")
        << R"({"version": 1, "ga": {"population_size": 10, "generations": 5},
              "hyperparameters": {"rf_n_trees": 8, "gbt_n_rounds": 8}})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  int cli(const std::string& args) const {
    const std::string cmd = std::string(IOTGUARD_CLI_PATH) + " " + args + " >" + (dir_ / "stdout.txt").string() +
                            " 2>" + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() const { return read(dir_ / "stderr.txt"); }

  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string synth() const {
    const auto out = dir_ / "data";
    EXPECT_EQ(cli("synth --rows-normal 300 --rows-attack 80 --informative 3 --noise 3 --seed 4 --out " + out.string()), 0);
    return (out / "dataset.csv").string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, RunWritesReportAndManifest) {
  const auto data = synth();
  const auto out = dir_ / "run";
  ASSERT_EQ(cli("run --input " + data + " --config " + (dir_ / "small.json").string() + " --seed 3 --out " + out.string()), 0)
      << stderr_text();
  const auto report = nlohmann::json::parse(read(out / "run_report.json"));
  EXPECT_EQ(report["seed"], 3);
  EXPECT_TRUE(report["metrics"]["selected"]["accuracy"].is_number());
  const auto manifest = nlohmann::json::parse(read(out / "manifest.json"));
  EXPECT_EQ(manifest["command"], "run");
  EXPECT_EQ(manifest["seed_source"], "flag");
  bool listed = false;
  for (const auto& f : manifest["files"]) {
    EXPECT_EQ(f["sha256"].get<std::string>().size(), 64u);
    listed = listed || f["path"] == "run_report.json";
  }
  EXPECT_TRUE(listed);
}

TEST_F(CliTest, SeedFromConfigIsRecorded) {
  const auto data = synth();
  std::ofstream(dir_ / "seeded.json") << R"({"version": 1, "seed": 11})";
  const auto out = dir_ / "score";
  ASSERT_EQ(cli("score --input " + data + " --config " + (dir_ / "seeded.json").string() + " --out " + out.string()), 0)
      << stderr_text();
  const auto manifest = nlohmann::json::parse(read(out / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 11);
  EXPECT_EQ(manifest["seed_source"], "config");
  EXPECT_TRUE(fs::exists(out / "feature_scores.csv"));
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(cli("run --seed 1 --out " + (dir_ / "x").string()), 1);
  EXPECT_NE(stderr_text().find("--input"), std::string::npos);
  EXPECT_EQ(cli("frobnicate"), 1);
  EXPECT_EQ(cli(""), 1);
  EXPECT_EQ(cli("run --input " + (dir_ / "missing.csv").string()), 1);
  EXPECT_EQ(cli("run --input " + synth() + " --voting loud"), 1);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  std::ofstream(dir_ / "nolabel.csv") << "a,b\n1,2\n3,4\n";
  EXPECT_EQ(cli("run --input " + (dir_ / "nolabel.csv").string() + " --seed 1 --out " + (dir_ / "y").string()), 2);
  EXPECT_NE(stderr_text().find("schema"), std::string::npos);
  std::ofstream(dir_ / "badcfg.json") << R"({"version": 1, "colour": "red"})";
  EXPECT_EQ(cli("run --input " + synth() + " --config " + (dir_ / "badcfg.json").string()), 2);
  EXPECT_NE(stderr_text().find("config"), std::string::npos);
}

TEST_F(CliTest, TrainThenEvaluate) {
  const auto data = synth();
  const auto cfg = (dir_ / "small.json").string();
  ASSERT_EQ(cli("train --input " + data + " --config " + cfg + " --seed 2 --out " + (dir_ / "t").string()), 0) << stderr_text();
  ASSERT_EQ(cli("evaluate --input " + data + " --model " + (dir_ / "t" / "model.json").string() + " --seed 2 --out " +
                (dir_ / "e").string()),
            0)
      << stderr_text();
  const auto m = nlohmann::json::parse(read(dir_ / "e" / "metrics.json"));
  EXPECT_GT(m["metrics"]["accuracy"].get<double>(), 0.8);
}
