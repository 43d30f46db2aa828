#pragma once

// Flat key = value run configuration. '#' starts a comment, arrays are comma
// lists, and any list entry may be a range start:stop:step (stop included).

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lrsaddle/common.hpp"
#include "lrsaddle/lattice.hpp"
#include "lrsaddle/saddle.hpp"
#include "lrsaddle/spectral.hpp"

namespace lrsaddle {

enum class Task { spectrum, phase, chi, validate };

inline Task parse_task(const std::string& s) {
  if (s == "spectrum") return Task::spectrum;
  if (s == "phase") return Task::phase;
  if (s == "chi") return Task::chi;
  if (s == "validate") return Task::validate;
  throw ConfigError("unknown task '" + s + "' (expected spectrum|phase|chi|validate)");
}

inline const char* to_string(Task t) {
  switch (t) {
    case Task::spectrum: return "spectrum";
    case Task::phase: return "phase";
    case Task::chi: return "chi";
    case Task::validate: return "validate";
  }
  return "unknown";
}

struct RunConfig {
  LatticeSpec model;
  std::vector<double> alpha_list;
  std::vector<double> gamma_grid;
  std::vector<double> T_grid;
  std::vector<int> L_list;
  SolverSettings solver;
  TruncationPolicy truncation;
  std::size_t bins = 20;
  unsigned jobs = 1;
  std::string out_dir = "out";
  Task task = Task::validate;
  bool task_set = false;
  std::string source;  ///< raw text, hashed into the manifest

  /// Parsed entries in key order, for the manifest.
  std::map<std::string, std::string> entries;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "inf" || s == "infinity") return kInfinity;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + s + "'");
  }
}

inline long parse_integer(const std::string& key, const std::string& raw) {
  const double v = parse_number(key, raw);
  if (!std::isfinite(v) || v != std::floor(v)) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + trim(raw) + "'");
  }
  return static_cast<long>(v);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto c1 = item.find(':');
    if (c1 == std::string::npos) {
      out.push_back(parse_number(key, item));
      continue;
    }
    const auto c2 = item.find(':', c1 + 1);
    if (c2 == std::string::npos) {
      throw ConfigError("config: range in '" + key + "' must be start:stop:step");
    }
    const double start = parse_number(key, item.substr(0, c1));
    const double stop = parse_number(key, item.substr(c1 + 1, c2 - c1 - 1));
    const double step = parse_number(key, item.substr(c2 + 1));
    if (!(step > 0.0) || stop < start) {
      throw ConfigError("config: range in '" + key + "' needs step > 0 and stop >= start");
    }
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(start + static_cast<double>(k) * step);
  }
  return out;
}

template <class T>
void require_increasing(const std::string& key, const std::vector<T>& v) {
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (!(v[k] > v[k - 1])) throw ConfigError("config: '" + key + "' must be strictly increasing");
  }
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  cfg.source = text;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.entries[key] = value;

    using detail::parse_integer;
    using detail::parse_list;
    using detail::parse_number;
    if (key == "d") cfg.model.d = static_cast<int>(parse_integer(key, value));
    else if (key == "L") cfg.model.L = static_cast<int>(parse_integer(key, value));
    else if (key == "alpha") cfg.model.alpha = parse_number(key, value);
    else if (key == "gamma") cfg.model.gamma = parse_number(key, value);
    else if (key == "omega_z") cfg.model.omega_z = parse_number(key, value);
    else if (key == "beta") cfg.model.beta = parse_number(key, value);
    else if (key == "h") cfg.model.h = parse_list(key, value);
    else if (key == "alpha_list") cfg.alpha_list = parse_list(key, value);
    else if (key == "gamma_grid") cfg.gamma_grid = parse_list(key, value);
    else if (key == "T_grid") cfg.T_grid = parse_list(key, value);
    else if (key == "L_list") {
      for (double v : parse_list(key, value)) {
        if (v != std::floor(v) || v < 1) throw ConfigError("config: 'L_list' entries must be positive integers");
        cfg.L_list.push_back(static_cast<int>(v));
      }
    }
    else if (key == "grad_tol") cfg.solver.grad_tol = parse_number(key, value);
    else if (key == "max_iter") cfg.solver.max_iter = static_cast<int>(parse_integer(key, value));
    else if (key == "init_scale") cfg.solver.init_scale = parse_number(key, value);
    else if (key == "hessian_step") cfg.solver.hessian_step = parse_number(key, value);
    else if (key == "delta") cfg.truncation.delta = parse_number(key, value);
    else if (key == "target_M") cfg.truncation.target_M = static_cast<std::size_t>(parse_integer(key, value));
    else if (key == "bins") cfg.bins = static_cast<std::size_t>(parse_integer(key, value));
    else if (key == "jobs") cfg.jobs = static_cast<unsigned>(parse_integer(key, value));
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "task") {
      cfg.task = parse_task(value);
      cfg.task_set = true;
    }
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }

  if (cfg.model.h.size() == 1 && cfg.model.sites() > 1) {
    cfg.model.h.assign(cfg.model.sites(), cfg.model.h.front());
  }
  cfg.model.validate();
  detail::require_increasing("alpha_list", cfg.alpha_list);
  detail::require_increasing("gamma_grid", cfg.gamma_grid);
  detail::require_increasing("T_grid", cfg.T_grid);
  detail::require_increasing("L_list", cfg.L_list);
  if (!(cfg.solver.grad_tol > 0.0)) throw ConfigError("config: grad_tol must be > 0");
  if (cfg.solver.max_iter < 1) throw ConfigError("config: max_iter must be >= 1");
  if (!(cfg.truncation.delta > 0.0 && cfg.truncation.delta < 1.0)) {
    throw ConfigError("config: delta must lie in (0, 1)");
  }
  if (cfg.jobs < 1) throw ConfigError("config: jobs must be >= 1");
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Grids a task cannot run without.
inline void require_for_task(const RunConfig& cfg, Task task) {
  auto need = [](bool ok, const char* key, Task t) {
    if (!ok) throw ConfigError(std::string("config: task '") + to_string(t) + "' needs a non-empty '" + key + "'");
  };
  switch (task) {
    case Task::spectrum:
      need(!cfg.alpha_list.empty(), "alpha_list", task);
      need(cfg.L_list.size() >= 2, "L_list", task);
      break;
    case Task::phase:
      need(!cfg.gamma_grid.empty(), "gamma_grid", task);
      need(!cfg.T_grid.empty(), "T_grid", task);
      need(cfg.alpha_list.size() >= 2, "alpha_list", task);
      break;
    case Task::chi:
      need(!cfg.gamma_grid.empty(), "gamma_grid", task);
      need(!cfg.alpha_list.empty(), "alpha_list", task);
      break;
    case Task::validate:
      break;
  }
}

}  // namespace lrsaddle
