#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "reweight/io.hpp"

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(REWEIGHT_CLI_PATH) + " " + args + " 2>&1";
  Outcome out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out.output += buf.data();
  const int status = pclose(pipe);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("reweight_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST(Cli, GenerateTrainEvaluate) {
  const auto dir = scratch("pipeline");
  ASSERT_EQ(run("generate --n-train 192 --n-test 96 --out " + dir + "/ds").code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir + "/ds/provenance.txt"));

  std::ofstream(dir + "/run.cfg") << "epochs=1\nbalancing_epochs = 3\n# comment\n";
  const auto t = run("train --config " + dir + "/run.cfg --epochs 2 --data " + dir + "/ds --out " + dir + "/run");
  ASSERT_EQ(t.code, 0) << t.output;
  const auto summary = reweight::io::read_key_values(dir + "/run/summary.txt");
  EXPECT_EQ(summary.at("config.epochs"), "2");
  EXPECT_EQ(summary.at("config.balancing_epochs"), "3");
  EXPECT_TRUE(std::filesystem::exists(dir + "/run/metrics.csv"));

  const auto e = run("evaluate --checkpoint " + dir + "/run/checkpoint.bin --data " + dir + "/ds");
  EXPECT_EQ(e.code, 0) << e.output;
  EXPECT_NE(e.output.find("accuracy="), std::string::npos);
}

TEST(Cli, OutputRootEnvironment) {
  const auto dir = scratch("root");
  const std::string cmd = "REWEIGHT_OUTPUT_ROOT=" + dir + " " + REWEIGHT_CLI_PATH + " generate --n-train 30 --n-test 3 --out rooted";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir + "/rooted/train.csv"));
}

TEST(Cli, ErrorsAreMachineParsable) {
  const auto bad_flag = run("train --no-such-flag");
  EXPECT_EQ(bad_flag.code, 2);
  EXPECT_NE(bad_flag.output.find("error kind=usage"), std::string::npos);

  const auto bad_value = run("generate --dominant-ratio 1.5 --out " + scratch("errors") + "/never");
  EXPECT_EQ(bad_value.code, 2);
  EXPECT_NE(bad_value.output.find("error kind=invalid_argument"), std::string::npos);

  EXPECT_NE(run("").code, 0);
}
