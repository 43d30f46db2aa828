#pragma once

// Task drivers behind the command-line tool. Every driver writes its data
// files plus manifest.json into cfg.out_dir; progress goes to stderr.

#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "lrsaddle/common.hpp"
#include "lrsaddle/config.hpp"
#include "lrsaddle/io.hpp"
#include "lrsaddle/lattice.hpp"
#include "lrsaddle/observables.hpp"
#include "lrsaddle/oracle.hpp"
#include "lrsaddle/saddle.hpp"
#include "lrsaddle/spectral.hpp"

namespace lrsaddle {

namespace detail {

inline std::filesystem::path prepare_out_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("cannot create output directory '" + cfg.out_dir + "'");
  }
  return dir;
}

inline std::string tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline void progress(const std::string& msg) { std::cerr << "[lrsaddle] " << msg << '\n'; }

inline double temperature(double beta) { return std::isinf(beta) ? 0.0 : 1.0 / beta; }

}  // namespace detail

inline std::vector<OutputFile> cmd_spectrum(const RunConfig& cfg) {
  require_for_task(cfg, Task::spectrum);
  const auto dir = detail::prepare_out_dir(cfg);
  std::vector<OutputFile> files;

  std::vector<TractabilityReport> reports(cfg.alpha_list.size());
  parallel_for(cfg.alpha_list.size(), cfg.jobs, [&](std::size_t a) {
    LatticeSpec spec = cfg.model;
    spec.alpha = cfg.alpha_list[a];
    spec.h.clear();
    reports[a] = tractability(spec, cfg.L_list, cfg.bins);
  });

  CsvWriter trace(dir / "spectrum_trace.csv",
                  {"alpha", "L", "N", "b", "N_tilde", "trace_ratio"});
  json summary = json::array();
  for (std::size_t a = 0; a < cfg.alpha_list.size(); ++a) {
    const double alpha = cfg.alpha_list[a];
    detail::progress("spectrum alpha=" + detail::tag(alpha));
    const std::string name = "spectrum_hist_alpha" + detail::tag(alpha) + ".csv";
    CsvWriter hist(dir / name, {"bin_low", "bin_high", "count", "N"});
    for (const auto& row : reports[a].rows) {
      trace.row({alpha, double(row.L), double(row.N), row.b, row.N_tilde, row.trace_ratio});
      for (const auto& bin : row.histogram) {
        hist.row({bin.low, bin.high, double(bin.count), double(row.N)});
      }
    }
    files.push_back({name, hist.columns()});

    // spectrum at the configured L, from the Fourier route
    LatticeSpec spec = cfg.model;
    spec.alpha = alpha;
    spec.h.clear();
    const double b = finite_size_shift(spec);
    auto D = fourier_eigenvalues(spec, b);
    std::sort(D.begin(), D.end(), std::greater<>());
    std::size_t M = 0;
    while (M < D.size() && D[M] > cfg.truncation.delta * spec.gamma) ++M;
    while (M > 0 && M < D.size() &&
           std::abs(D[M] - D[M - 1]) <= cfg.truncation.degeneracy_tol * spec.gamma) {
      ++M;
    }
    json Dj = json::array();
    for (double v : D) Dj.push_back(number(v));
    summary.push_back({{"alpha", alpha},
                       {"slope", number(reports[a].slope)},
                       {"verdict", reports[a].tractable ? "tractable" : "not tractable"},
                       {"thresholds", {{"slope", kTractableSlope}, {"ratio", kTractableRatio}}},
                       {"L", spec.L},
                       {"M", M},
                       {"trace_ratio", number(spec.gamma * b / kac_normalizer(spec, b))},
                       {"D", Dj}});
  }
  files.push_back({"spectrum_trace.csv", trace.columns()});
  write_json(dir / "spectrum_summary.json", summary);
  files.push_back({"spectrum_summary.json", {}});
  write_json(dir / "manifest.json", manifest(cfg, Task::spectrum, files));
  return files;
}

inline std::vector<OutputFile> cmd_phase_diagram(const RunConfig& cfg) {
  require_for_task(cfg, Task::phase);
  const auto dir = detail::prepare_out_dir(cfg);
  std::vector<OutputFile> files;

  CsvWriter line(dir / "phase_critical_line.csv", {"Gamma", "T_c"});
  for (const auto& c : critical_line(cfg.gamma_grid, cfg.model.omega_z)) line.row({c.gamma, c.T_c});
  files.push_back({"phase_critical_line.csv", line.columns()});

  detail::progress("slope map: " + std::to_string(cfg.gamma_grid.size() * cfg.T_grid.size()) +
                   " cells");
  const auto cells = slope_map(cfg.alpha_list, cfg.gamma_grid, cfg.T_grid, cfg.model,
                               cfg.truncation, cfg.jobs, cfg.solver);
  CsvWriter slopes(dir / "phase_slope_map.csv", {"Gamma", "T", "a", "b_fit"});
  CsvWriter exps(dir / "phase_alpha_chi.csv", {"Gamma", "T", "alpha", "alpha_chi"});
  for (const auto& c : cells) {
    slopes.row({c.gamma, c.T, c.a, c.b_fit});
    for (std::size_t a = 0; a < cfg.alpha_list.size(); ++a) {
      exps.row({c.gamma, c.T, cfg.alpha_list[a], c.alpha_chi[a]});
    }
  }
  files.push_back({"phase_slope_map.csv", slopes.columns()});
  files.push_back({"phase_alpha_chi.csv", exps.columns()});
  write_json(dir / "manifest.json", manifest(cfg, Task::phase, files));
  return files;
}

inline std::vector<OutputFile> cmd_susceptibility(const RunConfig& cfg) {
  require_for_task(cfg, Task::chi);
  const auto dir = detail::prepare_out_dir(cfg);
  std::vector<OutputFile> files;
  const LatticeSpec& spec = cfg.model;
  const double T = detail::temperature(spec.beta);

  detail::progress("half-chain sweep");
  const auto rows =
      half_chain_sweep(cfg.alpha_list, cfg.gamma_grid, spec, cfg.truncation, cfg.jobs, cfg.solver);
  CsvWriter half(dir / "chi_half_chain.csv", {"Gamma", "alpha", "chi_half"});
  for (const auto& r : rows) half.row({r.gamma, r.alpha, r.chi_half});
  files.push_back({"chi_half_chain.csv", half.columns()});

  detail::progress("chi_r profiles");
  std::vector<std::vector<double>> profiles(rows.size());
  std::vector<std::shared_ptr<const SpectralData>> units(cfg.alpha_list.size());
  parallel_for(cfg.alpha_list.size(), cfg.jobs, [&](std::size_t a) {
    LatticeSpec s = spec;
    s.alpha = cfg.alpha_list[a];
    units[a] = unit_spectral(s, cfg.truncation);
  });
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t cell) {
    const std::size_t a = cell / cfg.gamma_grid.size();
    try {
      profiles[cell] = chi_profile(homogeneous_susceptibility(
          *units[a], cfg.gamma_grid[cell % cfg.gamma_grid.size()], spec.beta, spec.omega_z,
          cfg.solver));
    } catch (const NumericError&) {
      profiles[cell].clear();  // at a pole
    }
  });
  CsvWriter prof(dir / "chi_profiles.csv", {"r", "chi_r", "alpha", "Gamma", "T"});
  for (std::size_t cell = 0; cell < rows.size(); ++cell) {
    for (std::size_t r = 0; r < profiles[cell].size(); ++r) {
      prof.row({double(r), profiles[cell][r], rows[cell].alpha, rows[cell].gamma, T});
    }
  }
  files.push_back({"chi_profiles.csv", prof.columns()});
  write_json(dir / "manifest.json", manifest(cfg, Task::chi, files));
  return files;
}

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string note;
};

struct ValidationReport {
  std::vector<Check> checks;
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

/// Invariant suite and ED cross-checks at the configured model.
inline ValidationReport run_validation(const RunConfig& cfg) {
  ValidationReport rep;
  auto add = [&](std::string name, double value, double tol, std::string note = {}) {
    rep.checks.push_back({std::move(name), value <= tol, value, tol, std::move(note)});
  };
  const LatticeSpec& spec = cfg.model;
  const double gamma = spec.gamma;
  const auto coupling = build_coupling(spec);
  const Matrix& J = coupling.J;
  const SpectralData full = eigendecompose(coupling);
  auto spectral = std::make_shared<const SpectralData>(truncate_modes(full, cfg.truncation));
  const SaddleProblem p = SaddleProblem::from_spec(spec, spectral);
  const auto n = static_cast<Eigen::Index>(spec.sites());

  add("coupling_symmetric", (J - J.transpose()).cwiseAbs().maxCoeff(), 0.0);
  add("shift_min_eigenvalue", std::abs(full.D(n - 1)) / gamma, 1e-10);
  add("kac_column_sums", (J.colwise().sum().array() - gamma).abs().maxCoeff() / gamma, 1e-12);
  add("top_eigenvalue_gamma", std::abs(full.D(0) - gamma) / gamma, 1e-8);

  auto fourier = fourier_eigenvalues(spec, coupling.b);
  std::sort(fourier.begin(), fourier.end(), std::greater<>());
  double fdiff = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    fdiff = std::max(fdiff, std::abs(fourier[static_cast<std::size_t>(k)] - full.D(k)));
  }
  add("fourier_vs_dense", fdiff / gamma, 1e-8);

  const auto M = static_cast<Eigen::Index>(spectral->M);
  const Matrix gram = spectral->lambda.transpose() * spectral->lambda / static_cast<double>(n);
  add("orthonormality", (gram - Matrix::Identity(M, M)).cwiseAbs().maxCoeff(), 1e-10);
  add("zero_mode_uniform", (spectral->lambda.col(0).array() - 1.0).abs().maxCoeff(), 1e-8);

  // analytic gradient against central differences of the exponent
  {
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;
    double worst = 0.0;
    const double step = 1e-6 * gamma;
    for (int t = 0; t < 20; ++t) {
      Vector u(M);
      for (Eigen::Index k = 0; k < M; ++k) u(k) = normal(rng);
      u *= 2.0 * gamma * unit(rng) / u.norm();
      const Vector g = scaled_gradient(u, p);
      Vector fd(M), probe = u;
      for (Eigen::Index k = 0; k < M; ++k) {
        probe(k) = u(k) + step;
        const double up = scaled_phi(probe, p);
        probe(k) = u(k) - step;
        const double down = scaled_phi(probe, p);
        probe(k) = u(k);
        fd(k) = (up - down) / (2.0 * step);
      }
      worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-3));
    }
    add("gradient_fd", worst, 1e-6);
  }

  const bool zero_field = (p.h().array() == 0.0).all();
  if (zero_field) {
    Vector u = Vector::Zero(M);
    u(0) = 0.7 * gamma;
    const double plus = scaled_phi(u, p);
    const double minus = scaled_phi(-u, p);
    add("phi_symmetry", std::abs(plus - minus) / std::max(std::abs(plus), 1e-300), 1e-14);
  }

  const SaddleSolution multi = solve_multivariate(p, std::nullopt, cfg.solver);
  add("hessian_negative", multi.is_maximum() ? 0.0 : 1.0, 0.0, to_string(multi.status));
  add("mean_field_identity", mean_field_residual(p, multi, J), 1e-8);

  if (p.uniform_field()) {
    const SaddleSolution hom = solve_homogeneous(p, cfg.solver);
    add("homogeneous_equals_multivariate", (hom.u_bar - multi.u_bar).cwiseAbs().maxCoeff(), 1e-8);
    double chi_diff = kInfinity;
    std::string note;
    try {
      const auto chi = susceptibility_analytical(p, hom);
      const Vector col = susceptibility_numerical(p, hom, 0, default_fd_delta(spec.omega_z), cfg.solver);
      chi_diff = (col - chi.chi.col(0)).cwiseAbs().maxCoeff();
    } catch (const NumericError& e) {
      note = e.what();
    }
    add("chi_analytic_vs_numeric", chi_diff, 1e-5, note);
  }

  const EDOptions ed_opt;
  if (!spec.zero_temperature() && n <= ed_opt.max_sites) {
    const EDResult ed = run_ed(coupling, {.kubo = n <= 12 || spec.d == 1}, ed_opt);
    if (ed.chi_kubo.size()) {
      add("ed_kubo_symmetric", (ed.chi_kubo - ed.chi_kubo.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      add("ed_kubo_diagonal_positive", ed.chi_kubo.diagonal().minCoeff() > 0.0 ? 0.0 : 1.0, 0.0);
    }
    if (n <= 10) {
      Matrix H = build_hamiltonian(coupling, ed_opt);
      const Vector dense = detail::syevd(H, false);
      double worst = 0.0;
      for (Eigen::Index k = 0; k < dense.size(); ++k) {
        worst = std::max(worst, std::abs(dense(k) - ed.energies[static_cast<std::size_t>(k)]));
      }
      add("ed_block_spectrum", worst, 1e-9);
    }
    if (spec.d == 1 && spec.L >= 6 && zero_field) {
      const double f_saddle = free_energy_per_site(p, multi).leading;
      double prev = kInfinity;
      double violation = 0.0;
      for (int L = spec.L - 4; L <= spec.L; L += 2) {
        LatticeSpec s = spec;
        s.L = L;
        s.h.clear();
        const double gap = std::abs(ed_free_energy(build_coupling(s), ed_opt).f_per_site - f_saddle);
        if (!(gap < prev)) violation = std::max(violation, gap - prev);
        prev = gap;
      }
      add("ed_free_energy_trend", violation, 0.0, "|f_ED(N) - f_saddle| decreasing over N-4, N-2, N");
    }
  }
  return rep;
}

inline json to_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json j = {{"name", c.name}, {"pass", c.pass}, {"value", number(c.value)}, {"tolerance", number(c.tolerance)}};
    if (!c.note.empty()) j["note"] = c.note;
    checks.push_back(j);
  }
  return {{"all_pass", r.all_pass()}, {"checks", checks}};
}

inline ValidationReport cmd_validate(const RunConfig& cfg, std::vector<OutputFile>* files = nullptr) {
  const auto dir = detail::prepare_out_dir(cfg);
  const ValidationReport rep = run_validation(cfg);
  write_json(dir / "validate.json", to_json(rep));
  const std::vector<OutputFile> out{{"validate.json", {}}};
  write_json(dir / "manifest.json", manifest(cfg, Task::validate, out));
  if (files) *files = out;
  for (const auto& c : rep.checks) {
    detail::progress(std::string(c.pass ? "PASS " : "FAIL ") + c.name + " = " + format_double(c.value));
  }
  return rep;
}

}  // namespace lrsaddle
