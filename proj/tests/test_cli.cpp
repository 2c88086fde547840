#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#ifndef CROWDNAV_CLI
#error "CROWDNAV_CLI must point at the built command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CROWDNAV_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("crowdnav_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.json") << R"({
      "seed": 5,
      "env": {"humans": [1, 2], "obstacles": [1, 1], "n_max": 4, "max_episode_steps": 12,
              "sensor": {"num_beams": 24}},
      "policy": {"d_hh": 8, "d_oh": 8, "d_rh": 8, "heads_hh": 2, "gru_hidden": 6,
                 "conv": [{"channels": 2, "kernel": 5, "stride": 2}]},
      "ppo": {"num_envs": 4, "rollout_len": 8, "epochs": 1, "minibatches": 2, "total_steps": 64},
      "suite": {"seeds": "0-3"}
    })";
    std::ofstream(dir_ / "room.grid") << "6 6 0.5 -1.5 -1.5\n"
                                          "0 0 0 0 0 0\n"
                                          "0 0 0 0 0 0\n"
                                          "0 0 100 100 0 0\n"
                                          "0 0 100 100 0 0\n"
                                          "0 0 0 0 0 0\n"
                                          "0 0 0 0 0 0\n";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("fly"), 1);
  EXPECT_EQ(run("eval --suite 0-3"), 1);  // --out missing
  EXPECT_EQ(run("eval --out " + path("x.json") + " --baseline teleport --config " + path("tiny.json") +
                " --suite 0-3"),
            1);
  EXPECT_EQ(run("eval --out " + path("x.json") + " --baseline random --config " + path("tiny.json") +
                " --suite 5-2"),
            1);
  EXPECT_EQ(run("train --threads 0 --out " + path("r")), 1);
}

TEST_F(Cli, HelpExitsWithZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, RuntimeErrorsExitWithTwo) {
  EXPECT_EQ(run("process-map " + path("missing.grid") + " --out " + path("m.json")), 2);
  std::ofstream(path("junk.ckpt")) << "not a checkpoint";
  EXPECT_EQ(run("eval --ckpt " + path("junk.ckpt") + " --suite 0-3 --out " + path("x.json")), 2);
}

TEST_F(Cli, ProcessMapIsDeterministic) {
  ASSERT_EQ(run("process-map " + path("room.grid") + " --out " + path("a.json")), 0);
  ASSERT_EQ(run("process-map " + path("room.grid") + " --out " + path("b.json")), 0);
  EXPECT_FALSE(slurp(path("a.json")).empty());
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
}

TEST_F(Cli, TrainEvalSimulateAreByteIdentical) {
  for (const char* run_name : {"r1", "r2"}) {
    ASSERT_EQ(run("train --config " + path("tiny.json") + " --out " + path(run_name)), 0);
  }
  EXPECT_EQ(slurp(path("r1/stats.jsonl")), slurp(path("r2/stats.jsonl")));
  EXPECT_EQ(slurp(path("r1/final.ckpt")), slurp(path("r2/final.ckpt")));

  for (const char* out : {"e1.json", "e2.json"}) {
    ASSERT_EQ(run("eval --ckpt " + path("r1/final.ckpt") + " --suite 0-3 --out " + path(out)), 0);
  }
  EXPECT_EQ(slurp(path("e1.json")), slurp(path("e2.json")));

  for (const char* out : {"s1.jsonl", "s2.jsonl"}) {
    ASSERT_EQ(run("simulate --ckpt " + path("r1/final.ckpt") + " --seed 9 --export " + path(out)), 0);
  }
  EXPECT_FALSE(slurp(path("s1.jsonl")).empty());
  EXPECT_EQ(slurp(path("s1.jsonl")), slurp(path("s2.jsonl")));
}

TEST_F(Cli, BaselineEvalWithConfig) {
  ASSERT_EQ(run("eval --baseline straight_to_goal --config " + path("tiny.json") + " --out " + path("b.json")), 0);
  EXPECT_NE(slurp(path("b.json")).find("straight_to_goal"), std::string::npos);
}

TEST_F(Cli, ResumeContinuesTraining) {
  ASSERT_EQ(run("train --config " + path("tiny.json") + " --out " + path("r")), 0);
  EXPECT_EQ(run("train --resume " + path("r/final.ckpt") + " --out " + path("r2")), 0);
}
