#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace magpos {
namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

/// Runs the magpos binary with `args` inside `dir`.
CliResult run_cli(const std::string& args, const std::filesystem::path& dir) {
  const auto err_path = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(MAGPOS_CLI_PATH) + "' " + args + " 2>'" +
                          err_path.string() + "'";
  CliResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream e(err_path);
  r.err.assign(std::istreambuf_iterator<char>(e), {});
  return r;
}

TEST(Cli, EvalWithDefaultsWritesReport) {
  const auto dir = test::scratch_dir("cli_eval");
  const CliResult r = run_cli("eval --repeats 2", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("interior"), std::string::npos) << r.out;
  for (const char* f : {"errors.csv", "cdf.csv", "gdop.csv", "summary.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / "report" / f)) << f;
}

TEST(Cli, SameSeedSameOutput) {
  const auto dir = test::scratch_dir("cli_seed");
  const CliResult a = run_cli("simulate --point P08 --seed 7", dir);
  const CliResult b = run_cli("simulate --point P08 --seed 7", dir);
  const CliResult c = run_cli("simulate --point P08 --seed 8", dir);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
  const CliResult ra = run_cli("replay --seed 7 --period 2", dir);
  const CliResult rb = run_cli("replay --seed 7 --period 2", dir);
  ASSERT_EQ(ra.code, 0) << ra.err;
  EXPECT_EQ(ra.out.rfind("t,x_true,y_true,x_est,y_est,error_m\n", 0), 0u);
  EXPECT_EQ(ra.out, rb.out);
}

TEST(Cli, RunAgainstUnreachableEndpointDropsFixes) {
  const auto dir = test::scratch_dir("cli_run");
  const CliResult r = run_cli("run --endpoint nowhere.invalid:1 --duration 2 --period 0.5", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  long lines = std::count(r.out.begin(), r.out.end(), '\n');
  EXPECT_EQ(lines, 4);
  EXPECT_NE(r.err.find("fixes 4 "), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("sent 0 dropped 4"), std::string::npos) << r.err;
}

TEST(Cli, CalibratePrintsFitPerAnchor) {
  const auto dir = test::scratch_dir("cli_cal");
  const CliResult r = run_cli("calibrate --save-observations obs.txt", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "obs.txt"));
  const CliResult again = run_cli("calibrate --observations obs.txt", dir);
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(r.out, again.out);
}

TEST(Cli, ExitCodes) {
  const auto dir = test::scratch_dir("cli_codes");
  EXPECT_EQ(run_cli("", dir).code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 1);
  EXPECT_EQ(run_cli("eval --no-such-flag", dir).code, 1);
  EXPECT_EQ(run_cli("--help", dir).code, 0);
  EXPECT_EQ(run_cli("eval --scenario missing.cfg", dir).code, 2);
  {
    std::ofstream bad(dir / "bad.cfg");
    bad << "noise.white_sigma = banana\n";
  }
  EXPECT_EQ(run_cli("simulate --scenario bad.cfg", dir).code, 2);
  EXPECT_EQ(run_cli("calibrate --method magic", dir).code, 2);
  EXPECT_EQ(run_cli("run --period 2 --offline", dir).code, 2);
  EXPECT_EQ(run_cli("pca --canvas 12by7 --duration 0.1", dir).code, 2);
  EXPECT_EQ(run_cli("simulate --x 1.0", dir).code, 2);
}

}  // namespace
}  // namespace magpos
