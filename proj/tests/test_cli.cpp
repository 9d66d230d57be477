// Runs the ignite binary as a subprocess.

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ignite/persistence.hpp"

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ignite_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(IGNITE_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    CliRun r;
    const int raw = std::system(cmd.c_str());
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string store() const { return "--store " + (dir_ / "store").string(); }

  fs::path dir_;
};

const std::string kTinyData = "--data synthetic:n=40,F=3,K=1,T=6,seed=4";

TEST_F(CliTest, HelpListsSubcommandsAndFlags) {
  const CliRun top = run("--help");
  EXPECT_EQ(top.status, 0);
  for (const char* s : {"ingest", "profile", "train", "impute", "evaluate", "reconstruct", "report", "--store", "--config"}) {
    EXPECT_NE(top.out.find(s), std::string::npos) << s;
  }
  const CliRun ev = run("evaluate --help");
  EXPECT_EQ(ev.status, 0);
  for (const char* s : {"--data", "--method", "--strata", "--seed", "--mask-rate", "--format", "--plot-dir", "--ablate"}) {
    EXPECT_NE(ev.out.find(s), std::string::npos) << s;
  }
}

TEST_F(CliTest, ErrorsUseOneStructuredLine) {
  const std::regex line(R"(error: kind=[a-z_]+ message=".*"\n)");
  const CliRun no_seed = run("train " + kTinyData + " " + store());
  EXPECT_EQ(no_seed.status, 1);
  EXPECT_TRUE(std::regex_search(no_seed.err, line)) << no_seed.err;
  EXPECT_NE(no_seed.err.find("kind=invalid_argument"), std::string::npos);
  EXPECT_NE(no_seed.err.find("--seed"), std::string::npos);

  const CliRun missing = run("ingest --data " + (dir_ / "nowhere").string() + " " + store());
  EXPECT_EQ(missing.status, 1);
  EXPECT_NE(missing.err.find("error: kind=not_found"), std::string::npos) << missing.err;

  const CliRun usage = run("frobnicate");
  EXPECT_NE(usage.status, 0);
  EXPECT_NE(usage.err.find("error: kind=usage"), std::string::npos) << usage.err;

  const CliRun bad_method = run("evaluate --seed 1 --method magic " + kTinyData + " " + store());
  EXPECT_NE(bad_method.err.find("error: kind=usage"), std::string::npos) << bad_method.err;

  const CliRun no_report = run("report --name absent " + store() + " --out " + (dir_ / "r").string());
  EXPECT_NE(no_report.err.find("error: kind=not_found"), std::string::npos) << no_report.err;
}

TEST_F(CliTest, TrainingTwiceWithOneSeedGivesIdenticalCheckpoints) {
  const std::string common = "train --seed 7 --epochs 2 " + kTinyData + " " + store() + " --out " + (dir_ / "o").string();
  ASSERT_EQ(run(common + " --name a").status, 0);
  const CliRun second = run(common + " --name b");
  ASSERT_EQ(second.status, 0) << second.err;
  EXPECT_NE(second.out.find("checkpoint=b"), std::string::npos);
  const ignite::ArtifactStore s(dir_ / "store");
  const auto& a = s.entry("a");
  const auto& b = s.entry("b");
  ASSERT_EQ(a.arrays.size(), b.arrays.size());
  for (const auto& [key, info] : a.arrays) EXPECT_EQ(info.sha256, b.arrays.at(key).sha256) << key;
  EXPECT_TRUE(fs::exists(dir_ / "o" / "resolved_config.json"));

  const CliRun again = run(common + " --name a");
  EXPECT_NE(again.err.find("kind=invalid_argument"), std::string::npos);
  EXPECT_EQ(run(common + " --name a --force").status, 0);
}

TEST_F(CliTest, IngestImputeAndProfile) {
  ASSERT_EQ(run("ingest " + kTinyData + " " + store()).status, 0);
  const CliRun locf = run("impute --data store:cohort --method locf " + store());
  ASSERT_EQ(locf.status, 0) << locf.err;
  EXPECT_NE(locf.out.find("imputation=locf_imputed"), std::string::npos);
  ASSERT_EQ(run("train --seed 1 --epochs 1 --data store:cohort " + store() + " --out " + (dir_ / "o").string()).status, 0);
  const CliRun ig = run("impute --data store:cohort --checkpoint ignite " + store());
  ASSERT_EQ(ig.status, 0) << ig.err;

  const ignite::ArtifactStore s(dir_ / "store");
  const auto imputed = ignite::load_imputations(s, "ignite_imputed");
  const auto data = ignite::load_dataset(s, "cohort");
  ASSERT_EQ(imputed.results.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    for (ignite::Index k = 0; k < r.X.size(); ++k) {
      if (r.M(k) == 1.0) {
        EXPECT_EQ(imputed.results[i].X_hat(k), r.X(k));
      } else {
        EXPECT_TRUE(std::isfinite(imputed.results[i].X_hat(k)));
      }
    }
  }

  const fs::path table = dir_ / "profile.csv";
  ASSERT_EQ(run("profile " + kTinyData + " --out " + table.string()).status, 0);
  EXPECT_EQ(slurp(table).rfind("feature,sample_level_pct,feature_level_pct\n", 0), 0u);
}

TEST_F(CliTest, EvaluateWritesReportsAndPlots) {
  const fs::path out = dir_ / "report";
  const CliRun r = run("evaluate --seed 3 --method locf --method mean " + kTinyData +
                    " --mask-rate 0.2 --format csv --plot-dir " + (dir_ / "plots").string() + " --out " +
                    out.string() + " " + store());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out.rfind("# Evaluation report", 0), 0u);
  for (const char* f : {"downstream.csv", "reconstruction.csv", "significance.csv", "populations.csv",
                        "resolved_config.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  EXPECT_FALSE(fs::is_empty(dir_ / "plots"));
  EXPECT_NE(r.err.find("phase=evaluate"), std::string::npos);

  // Re-emitting the stored report reproduces the tables.
  const fs::path again = dir_ / "again";
  ASSERT_EQ(run("report --format csv --out " + again.string() + " " + store()).status, 0);
  EXPECT_EQ(slurp(again / "downstream.csv"), slurp(out / "downstream.csv"));
}

}  // namespace
