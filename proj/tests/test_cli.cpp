#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(QPOST_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qpost_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kConfig = std::string(QPOST_CONFIG_DIR) + "/table1_linreg_gamma0.toml";
const std::string kSmall = " --replications 3 --set chain.iterations=600 --set chain.burn_in=200 -q";

}  // namespace

TEST(Cli, SelftestPasses) {
  const auto r = run("selftest");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("selftest passed"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("simulate").code, 2);
  EXPECT_EQ(run("simulate -c /nonexistent.toml").code, 2);
  EXPECT_EQ(run("simulate -c " + kConfig + " --set dgp.bogus=1").code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST(Cli, RuntimeFailureExitsOne) {
  // an unwritable output path is a runtime failure, not a usage error
  const auto r = run("simulate -c " + kConfig + kSmall + " -o /proc/qpost_not_writable");
  EXPECT_EQ(r.code, 1) << r.output;
}

TEST(Cli, SimulateWritesArtifactsDeterministically) {
  const fs::path a = scratch("a"), b = scratch("b");
  ASSERT_EQ(run("simulate -c " + kConfig + kSmall + " -o " + a.string()).code, 0);
  ASSERT_EQ(run("simulate -c " + kConfig + kSmall + " --workers 2 -o " + b.string()).code, 0);
  for (const char* f : {"report.csv", "report.txt", "diagnostics.json"}) EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(slurp(a / "report.csv"), slurp(b / "report.csv"));
  EXPECT_NE(slurp(a / "report.txt").find("beta1"), std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SampleWritesTracesAndDataset) {
  const fs::path a = scratch("sample");
  const auto r = run("sample -c " + kConfig + " --set chain.iterations=600 --set chain.burn_in=200 -q --grid-points 20 -o " +
                     a.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(a / "dataset.csv"));
  EXPECT_TRUE(fs::exists(a / "density_grid.csv"));
  EXPECT_TRUE(fs::exists(a / "traces" / "q_posterior.csv"));
  fs::remove_all(a);
}
