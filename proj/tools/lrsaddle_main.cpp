#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lrsaddle.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saddle-point solver for strong long-range transverse-field Ising models"};
  std::string config_path;
  std::string task_name;
  unsigned jobs = 0;
  std::string out_dir;
  app.add_option("--config", config_path, "key = value configuration file")->required();
  app.add_option("--task", task_name, "spectrum | phase | chi | validate (overrides the config)");
  app.add_option("--jobs", jobs, "worker threads (overrides the config)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    lrsaddle::RunConfig cfg = lrsaddle::load_config(config_path);
    if (!task_name.empty()) {
      cfg.task = lrsaddle::parse_task(task_name);
    } else if (!cfg.task_set) {
      throw lrsaddle::ConfigError("no task given (use --task or 'task =' in the config)");
    }
    if (jobs > 0) cfg.jobs = jobs;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    switch (cfg.task) {
      case lrsaddle::Task::spectrum: lrsaddle::cmd_spectrum(cfg); break;
      case lrsaddle::Task::phase: lrsaddle::cmd_phase_diagram(cfg); break;
      case lrsaddle::Task::chi: lrsaddle::cmd_susceptibility(cfg); break;
      case lrsaddle::Task::validate:
        if (!lrsaddle::cmd_validate(cfg).all_pass()) return kExitValidation;
        break;
    }
  } catch (const lrsaddle::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n' << app.help();
    return kExitConfig;
  } catch (const lrsaddle::Error& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}
