#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  std::string cmd = std::string(OSEEN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  EXPECT_NE(pipe, nullptr);
  RunResult r;
  char buf[4096];
  while (pipe && fgets(buf, sizeof buf, pipe)) r.output += buf;
  if (pipe) {
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

std::string tmp_path(const std::string& name) { return ::testing::TempDir() + name; }

} // namespace

TEST(CliTool, SolveRecoversThePolynomialSolution) {
  RunResult r = run_cli("solve --problem polynomial --nu 1 --n0 3 --levels 1");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(contains(r.output, "# problem=polynomial"));
  EXPECT_TRUE(contains(r.output, "# convection=upwind"));

  double energy = -1.0, l2u = -1.0;
  std::stringstream ss(r.output);
  std::string line;
  while (std::getline(ss, line)) {
    if (std::sscanf(line.c_str(), "errors: energy=%lf l2u=%lf", &energy, &l2u) == 2) break;
  }
  ASSERT_GE(l2u, 0.0) << r.output;
  EXPECT_LE(l2u, 1e-9);
  EXPECT_LE(energy, 1e-8);
}

TEST(CliTool, SolveWritesTheSameSolutionFileOnRepeatedRuns) {
  std::string out_a = tmp_path("cli_solve_a.txt");
  std::string out_b = tmp_path("cli_solve_b.txt");
  std::string args = "solve --problem polynomial --nu 1 --n0 3 --levels 1 --out ";
  ASSERT_EQ(run_cli(args + out_a).exit_code, 0);
  ASSERT_EQ(run_cli(args + out_b).exit_code, 0);

  std::string a = slurp(out_a);
  ASSERT_FALSE(a.empty());
  EXPECT_TRUE(contains(a, "# problem=polynomial"));
  EXPECT_TRUE(contains(a, "velocity "));
  EXPECT_TRUE(contains(a, "pressure "));
  EXPECT_EQ(a, slurp(out_b));
  std::remove(out_a.c_str());
  std::remove(out_b.c_str());
}

TEST(CliTool, StudyWritesTheErrorTableToTheRequestedFile) {
  std::string out_a = tmp_path("cli_study_a.csv");
  std::string out_b = tmp_path("cli_study_b.csv");
  std::string args = "study --nu 1 --n0 2 --levels 2 --out ";
  RunResult r = run_cli(args + out_a);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(contains(r.output, "wrote " + out_a));

  std::string csv = slurp(out_a);
  EXPECT_TRUE(contains(csv, "# problem=benchmark"));
  EXPECT_TRUE(contains(csv, "# nu=1"));
  EXPECT_TRUE(contains(csv,
                       "level,h,energy,energy_rate,l2u,l2u_rate,divu,divu_rate,"
                       "linfu,linfu_rate,l2p,l2p_rate,l2p_proj,l2p_proj_rate"));
  EXPECT_TRUE(contains(csv, "\n1,"));
  EXPECT_TRUE(contains(csv, "\n2,"));

  ASSERT_EQ(run_cli(args + out_b).exit_code, 0);
  EXPECT_EQ(csv, slurp(out_b));
  std::remove(out_a.c_str());
  std::remove(out_b.c_str());
}

TEST(CliTool, ExplicitFlagsOverrideTheConfigFile) {
  std::string cfg = tmp_path("cli_cfg.json");
  write_file(cfg, "{\"nu\": 0.5, \"n0\": 2, \"levels\": 1, \"problem\": \"polynomial\"}\n");
  RunResult r = run_cli("solve --config " + cfg + " --nu 0.25");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(contains(r.output, "# nu=0.25"));
  EXPECT_TRUE(contains(r.output, "# n0=2"));
  EXPECT_TRUE(contains(r.output, "# problem=polynomial"));
  std::remove(cfg.c_str());
}

TEST(CliTool, BadConfigurationExitsWithTwo) {
  std::string cfg = tmp_path("cli_cfg_bad.json");
  write_file(cfg, "{\"nu\": 1, \"mystery\": 3}\n");
  RunResult unknown_key = run_cli("solve --config " + cfg);
  EXPECT_EQ(unknown_key.exit_code, 2);
  EXPECT_TRUE(contains(unknown_key.output, "unknown config key"));

  write_file(cfg, "{ nope\n");
  EXPECT_EQ(run_cli("solve --config " + cfg).exit_code, 2);
  std::remove(cfg.c_str());

  EXPECT_EQ(run_cli("solve --config " + tmp_path("cli_cfg_missing.json")).exit_code, 2);
  EXPECT_EQ(run_cli("solve --k 1 --n0 2").exit_code, 2);
  EXPECT_EQ(run_cli("solve --nu 0 --n0 2").exit_code, 2);
  EXPECT_EQ(run_cli("solve --perturb 0.4 --n0 2").exit_code, 2);
  EXPECT_EQ(run_cli("solve --sigma abc --n0 2").exit_code, 2);
  EXPECT_EQ(run_cli("solve --convection sideways --n0 2").exit_code, 2);
  EXPECT_EQ(run_cli("solve --bogus-flag --n0 2").exit_code, 2);
  EXPECT_EQ(run_cli("").exit_code, 2);
}

TEST(CliTool, RuntimeFailureExitsWithThree) {
  RunResult r = run_cli("study --nu 1 --n0 2 --levels 1 --out /dev/null/nope.csv");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_TRUE(contains(r.output, "error:"));
}

TEST(CliTool, DofsPrintsAConsistentComparisonTable) {
  RunResult r = run_cli("dofs --n0 2 --levels 2");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(contains(
      r.output, "level,nv,ne,nt,velocity,velocity_bdm,pressure,potential,system,system_bdm"));

  int rows = 0;
  std::stringstream ss(r.output);
  std::string line;
  while (std::getline(ss, line)) {
    int level, nv, ne, nt, vel, vel_bdm, pres, pot, sys, sys_bdm;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%d,%d,%d,%d,%d,%d", &level, &nv, &ne, &nt, &vel,
                    &vel_bdm, &pres, &pot, &sys, &sys_bdm) != 10)
      continue;
    ++rows;
    EXPECT_EQ(level, rows);
    EXPECT_EQ(nv - ne + nt, 1);
    EXPECT_EQ(sys, vel + pres);
    EXPECT_EQ(sys_bdm, vel_bdm + pres);
    EXPECT_LT(vel, vel_bdm);
  }
  EXPECT_EQ(rows, 2);
}

TEST(CliTool, AuditReportsExactnessAndInfSup) {
  RunResult r = run_cli("audit --n0 2 --levels 2");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(contains(r.output, "rank(B)"));
  EXPECT_TRUE(contains(r.output, "dims ok"));
  EXPECT_FALSE(contains(r.output, "MISMATCH"));
  EXPECT_TRUE(contains(r.output, "inf-sup beta="));
  EXPECT_TRUE(contains(r.output, "beta range ["));
}

TEST(CliTool, HelpListsTheSubcommands) {
  RunResult r = run_cli("--help");
  ASSERT_EQ(r.exit_code, 0);
  for (const char* name : {"solve", "study", "audit", "dofs"})
    EXPECT_TRUE(contains(r.output, name));
}
