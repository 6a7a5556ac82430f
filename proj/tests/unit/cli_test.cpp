#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace rc {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "rewardchain");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("rewardchain-cli-" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(config()) << R"({
      "pretrain_clip": {"iterations": 20},
      "pretrain_diffusion": {"iterations": 20},
      "train": {"iterations": 2, "batch": 4, "n_steps": 4, "k_steps": 2},
      "eval": {"n_steps": 4, "finetuned_steps": 2, "seeds": 2},
      "ablation": {"train_k": [1, 2], "test_n": [1, 4], "sampler_steps": [4, 8]}
    })";
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string config() const { return (root_ / "tiny.json").string(); }
  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  Result cmd(const std::string& out, std::vector<std::string> args) {
    std::vector<std::string> full = {"--config", config(), "--seed", "3", "--out-dir", dir(out)};
    full.insert(full.end(), args.begin(), args.end());
    return run(full);
  }

  fs::path root_;
};

TEST(Cli, NoArgumentsIsAUsageError) {
  const Result r = run({});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("pretrain-clip"), std::string::npos);
}

TEST(Cli, UnknownSubcommandAndOptionFail) {
  EXPECT_EQ(run({"train-everything"}).code, 1);
  EXPECT_EQ(run({"sample", "--bogus"}).code, 1);
  EXPECT_EQ(run({"sample"}).code, 1);
  EXPECT_EQ(run({"--config", "/nonexistent.json", "pretrain-clip"}).code, 1);
}

TEST(Cli, HelpSucceeds) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("ablate-schedulers"), std::string::npos);
}

TEST_F(CliTest, InvalidConfigIsAUsageError) {
  std::ofstream(root_ / "bad.json") << R"({"train": {"k_steps": 99}})";
  EXPECT_EQ(run({"--config", (root_ / "bad.json").string(), "--out-dir", dir("x"), "pretrain-clip"}).code, 1);
}

TEST_F(CliTest, MissingCheckpointIsARuntimeError) {
  const Result r = cmd("x", {"pretrain-diffusion", "--model", dir("nowhere")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(CliTest, PipelineIsByteDeterministic) {
  auto both = [&](const std::string& name, std::vector<std::string> args) {
    for (const char* rep : {"-a", "-b"}) {
      const Result r = cmd(name + rep, args);
      ASSERT_EQ(r.code, 0) << name << ": " << r.err;
    }
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir(name + "-a"))) {
      if (!e.is_regular_file()) continue;
      const fs::path rel = fs::relative(e.path(), dir(name + "-a"));
      EXPECT_EQ(slurp(e.path()), slurp(fs::path(dir(name + "-b")) / rel)) << name << ": " << rel;
      ++files;
    }
    EXPECT_GT(files, 1u) << name;
  };
  both("clip", {"pretrain-clip"});
  both("base", {"pretrain-diffusion", "--model", dir("clip-a")});
  both("ft", {"finetune-text", "--model", dir("base-a")});
  both("unet", {"finetune-unet", "--model", dir("ft-a")});
  both("sample", {"sample", "--model", dir("ft-a"), "--prompt", "0 3"});
  both("interp", {"interpolate", "--model", dir("ft-a"), "--prompt", "1", "--lambdas", "0,0.5,1"});
  both("mix", {"mix", "--model", dir("ft-a"), "--prompt", "2", "--encoders", "base", dir("ft-a"), "--weights",
               "0.3,0.7"});
  both("eval", {"evaluate", "--model", dir("ft-a"), "--baseline", dir("base-a")});
  both("steps", {"ablate-steps", "--model", dir("base-a")});
  both("sched", {"ablate-schedulers", "--model", dir("ft-a")});
  both("collapse", {"collapse", "--model", dir("base-a")});

  EXPECT_TRUE(fs::exists(fs::path(dir("sample-a")) / "sample.f32"));
  EXPECT_TRUE(fs::exists(fs::path(dir("interp-a")) / "interp_2.json"));
  EXPECT_TRUE(fs::exists(fs::path(dir("ft-a")) / "metrics.csv"));
  const std::string steps = slurp(fs::path(dir("steps-a")) / "ablate_steps.csv");
  EXPECT_EQ(std::count(steps.begin(), steps.end(), '\n'), 1 + 4);
}

TEST_F(CliTest, SeedChangesOutputs) {
  ASSERT_EQ(cmd("a", {"pretrain-clip"}).code, 0);
  ASSERT_EQ(run({"--config", config(), "--seed", "4", "--out-dir", dir("b"), "pretrain-clip"}).code, 0);
  EXPECT_NE(slurp(fs::path(dir("a")) / "text.rcpt"), slurp(fs::path(dir("b")) / "text.rcpt"));
}

TEST_F(CliTest, BadPromptAndWeightsAreRuntimeErrors) {
  ASSERT_EQ(cmd("clip", {"pretrain-clip"}).code, 0);
  ASSERT_EQ(cmd("base", {"pretrain-diffusion", "--model", dir("clip")}).code, 0);
  EXPECT_EQ(cmd("s", {"sample", "--model", dir("base"), "--prompt", "40"}).code, 2);
  EXPECT_EQ(cmd("m", {"mix", "--model", dir("base"), "--prompt", "1", "--encoders", "base", dir("base"),
                      "--weights", "0.5,0.6"})
                .code,
            2);
  EXPECT_EQ(cmd("i", {"interpolate", "--model", dir("base"), "--prompt", "1", "--lambdas", "1.5"}).code, 2);
}

}  // namespace
}  // namespace rc
