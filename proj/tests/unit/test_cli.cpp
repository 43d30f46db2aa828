#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "lrsaddle/app.hpp"

using namespace lrsaddle;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lrsaddle_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.conf";
  std::ofstream(p) << text;
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LRSADDLE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, KeysListsAndRanges) {
  const auto cfg = parse_config(
      "# comment\n"
      "task = phase\n"
      "L = 40   # trailing\n"
      "alpha = 0.5\n"
      "beta = inf\n"
      "alpha_list = 0.1:0.5:0.2\n"
      "gamma_grid = 0.5, 1, 2\n"
      "T_grid = 0.5\n"
      "delta = 1e-4\n"
      "jobs = 3\n");
  EXPECT_EQ(cfg.task, Task::phase);
  EXPECT_TRUE(cfg.task_set);
  EXPECT_EQ(cfg.model.L, 40);
  EXPECT_TRUE(std::isinf(cfg.model.beta));
  ASSERT_EQ(cfg.alpha_list.size(), 3u);
  EXPECT_NEAR(cfg.alpha_list[2], 0.5, 1e-15);
  EXPECT_EQ(cfg.gamma_grid, (std::vector<double>{0.5, 1.0, 2.0}));
  EXPECT_DOUBLE_EQ(cfg.truncation.delta, 1e-4);
  EXPECT_EQ(cfg.jobs, 3u);
  EXPECT_NO_THROW(require_for_task(cfg, Task::phase));
}

TEST(ParseConfig, ScalarFieldExpandsToUniform) {
  const auto cfg = parse_config("L = 6\nh = 0.2\n");
  EXPECT_EQ(cfg.model.h, std::vector<double>(6, 0.2));
}

TEST(ParseConfig, Errors) {
  EXPECT_THROW(parse_config("colour = blue\n"), ConfigError);
  EXPECT_THROW(parse_config("L = 10\nL = 12\n"), ConfigError);
  EXPECT_THROW(parse_config("L = ten\n"), ConfigError);
  EXPECT_THROW(parse_config("alpha = 0.5x\n"), ConfigError);
  EXPECT_THROW(parse_config("gamma_grid = 1, 0.5\n"), ConfigError);
  EXPECT_THROW(parse_config("gamma_grid = 1:0:0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("just words\n"), ConfigError);
  EXPECT_THROW(parse_config("task = sweep\n"), ConfigError);
  EXPECT_THROW(parse_config("delta = 1.5\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.conf"), ConfigError);
  EXPECT_THROW(require_for_task(parse_config("alpha_list = 0.2\n"), Task::spectrum), ConfigError);
  EXPECT_THROW(require_for_task(parse_config("gamma_grid = 1\nT_grid = 1\nalpha_list = 0.5\n"), Task::phase),
               ConfigError);
}

TEST(Manifest, GitBlobHash) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Manifest, RecordsConfigAndFiles) {
  const auto dir = scratch("manifest");
  const std::string text = "task = spectrum\nalpha_list = 0.2\nL_list = 20, 40\n";
  ASSERT_EQ(run_cli("--config " + write_config(dir, text).string() + " --out " + (dir / "out").string()), 0);
  const auto m = json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["task"], "spectrum");
  EXPECT_EQ(m["config_hash"], git_blob_hash(text));
  EXPECT_EQ(m["config"]["L_list"], "20, 40");
  bool has_trace = false;
  for (const auto& f : m["files"]) {
    EXPECT_TRUE(fs::exists(dir / "out" / f["file"].get<std::string>()));
    has_trace = has_trace || f["file"] == "spectrum_trace.csv";
  }
  EXPECT_TRUE(has_trace);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  const std::string out = " --out " + (dir / "out").string();
  EXPECT_EQ(run_cli("--config " + write_config(dir, "alpha_list = 0.2\nL_list = 20, 40\n").string() +
                    " --task sweep" + out),
            2);
  EXPECT_EQ(run_cli("--config " + write_config(dir, "task = spectrum\nalpha_list = 0.2\nL_list =\n").string() + out),
            2);
  EXPECT_EQ(run_cli("--config " + write_config(dir, "alpha_list = 0.2\nL_list = 20, 40\n").string() + out), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "missing.conf").string() + out), 2);
  EXPECT_EQ(run_cli("--task spectrum"), 2);
  EXPECT_EQ(run_cli("--config " +
                    write_config(dir, "task = chi\nL = 5000\nalpha_list = 0.5\ngamma_grid = 0.1\n").string() +
                    out),
            3);
}

TEST(Cli, SpectrumRerunIsByteIdentical) {
  const auto dir = scratch("determinism");
  const auto cfg = write_config(dir, "task = spectrum\nalpha_list = 0.2, 1.8\nL_list = 50, 100, 200\n");
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + (dir / "b").string() + " --jobs 3"), 0);
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename())) << entry.path().filename();
    ++compared;
  }
  EXPECT_GE(compared, 4);
}

TEST(Cli, SpectrumHistogramSplit) {
  const auto dir = scratch("split");
  const auto cfg = write_config(dir, "task = spectrum\nalpha_list = 0.2, 1.8\nL_list = 50, 100, 200\nbins = 10\n");
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --out " + dir.string()), 0);
  auto first_bin_share = [&](const std::string& file, int N) {
    std::ifstream in(dir / file);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      double low, high, count, n;
      char c;
      std::istringstream(line) >> low >> c >> high >> c >> count >> c >> n;
      if (static_cast<int>(n) == N && low == 0.0) return count / n;
    }
    return -1.0;
  };
  EXPECT_GT(first_bin_share("spectrum_hist_alpha0.2.csv", 200), 0.8);
  EXPECT_LT(first_bin_share("spectrum_hist_alpha1.8.csv", 200), 0.5);
}

TEST(Cli, ValidateSampleConfigPasses) {
  const auto dir = scratch("validate");
  ASSERT_EQ(run_cli("--config " LRSADDLE_CONFIGS "/validate.conf --out " + dir.string()), 0);
  const auto report = json::parse(slurp(dir / "validate.json"));
  EXPECT_TRUE(report["all_pass"].get<bool>());
  EXPECT_GE(report["checks"].size(), 15u);
}

TEST(Cli, PhaseAndChiOutputsHaveDeclaredColumns) {
  const auto dir = scratch("columns");
  const auto cfg = write_config(dir,
                                "L = 40\nalpha_list = 0.2, 0.6\ngamma_grid = 0.5, 1.5\n"
                                "T_grid = 0.5, 4\nbeta = 2\n");
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --task phase --out " + (dir / "p").string()), 0);
  ASSERT_EQ(run_cli("--config " + cfg.string() + " --task chi --out " + (dir / "c").string()), 0);
  auto header = [&](const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
  };
  EXPECT_EQ(header(dir / "p" / "phase_critical_line.csv"), "Gamma,T_c");
  EXPECT_EQ(header(dir / "p" / "phase_slope_map.csv"), "Gamma,T,a,b_fit");
  EXPECT_EQ(header(dir / "c" / "chi_half_chain.csv"), "Gamma,alpha,chi_half");
  EXPECT_EQ(header(dir / "c" / "chi_profiles.csv"), "r,chi_r,alpha,Gamma,T");
}
