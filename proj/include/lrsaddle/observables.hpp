#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "lrsaddle/common.hpp"
#include "lrsaddle/lattice.hpp"
#include "lrsaddle/saddle.hpp"
#include "lrsaddle/spectral.hpp"

namespace lrsaddle {

/// <sigma^x_i> at the saddle point.
inline Vector magnetization(const SaddleProblem& p, const SaddleSolution& sol) {
  return site_fields(sol.u_bar, p).m;
}

/// max_i |sum_k lambda_ik u_k - sum_j J_ij m_j|, the mean-field self-consistency residual.
inline double mean_field_residual(const SaddleProblem& p, const SaddleSolution& sol,
                                  const Matrix& J) {
  const Vector lhs = p.spectral().lambda * sol.u_bar;
  const Vector rhs = J * magnetization(p, sol);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

struct Susceptibility {
  Matrix chi;    ///< N x N
  Vector chi_k;  ///< retained modes
  double Y = 0.0;
};

/// Linear response around a homogeneous saddle, solved in mode space:
/// chi_k = Y / (1 - 2 Y D_k), chi_ij = Y delta_ij + (1/N) sum_k lambda_ik (chi_k - Y) lambda_jk.
inline Susceptibility susceptibility_analytical(const SaddleProblem& p, const SaddleSolution& sol) {
  if (!p.uniform_field()) throw ConfigError("susceptibility_analytical: field must be uniform");
  const SiteFields f = site_fields(sol.u_bar, p);
  const double spread = f.Y.maxCoeff() - f.Y.minCoeff();
  if (spread > 1e-8 * std::abs(f.Y(0))) {
    throw NumericError("susceptibility_analytical: saddle is not homogeneous (Y spread " +
                       std::to_string(spread) + ")");
  }
  const auto& s = p.spectral();
  Susceptibility out;
  out.Y = f.Y(0);
  out.chi_k.resize(s.omega.size());
  for (Eigen::Index k = 0; k < s.omega.size(); ++k) {
    const double denom = 1.0 - 2.0 * out.Y * s.D(k);
    if (!(denom > 0.0)) {
      throw NumericError("susceptibility_analytical: pole at mode " + std::to_string(k) +
                         " (1 - 2 Y D_k = " + std::to_string(denom) + ")");
    }
    out.chi_k(k) = out.Y / denom;
  }
  const double n = static_cast<double>(p.N());
  const Vector weight = out.chi_k.array() - out.Y;
  out.chi = (s.lambda * weight.asDiagonal() * s.lambda.transpose()) / n;
  out.chi.diagonal().array() += out.Y;
  return out;
}

/// Column j of chi by central differences of the saddle magnetization in h_j.
inline Vector susceptibility_numerical(const SaddleProblem& p, const SaddleSolution& sol,
                                       std::size_t j, double delta,
                                       const SolverSettings& settings = {}) {
  if (j >= p.N()) throw DomainError("susceptibility_numerical: site out of range");
  if (!(delta > 0.0)) throw DomainError("susceptibility_numerical: delta must be > 0");
  auto shifted = [&](double sign) {
    Vector h = p.h();
    h(static_cast<Eigen::Index>(j)) += sign * delta;
    const SaddleProblem q = p.with_field(std::move(h));
    return magnetization(q, solve_multivariate(q, sol.u_bar, settings));
  };
  return (shifted(1.0) - shifted(-1.0)) / (2.0 * delta);
}

inline double default_fd_delta(double omega_z) { return 1e-5 * omega_z; }

struct DecayFit {
  double alpha_chi = 0.0;
  double amplitude = 0.0;
  double r_squared = 0.0;
};

/// Fit chi_r = A r^-alpha_chi on log-log axes over r in [r_min, r_max].
inline DecayFit decay_fit(const std::vector<double>& chi_r, std::size_t r_min, std::size_t r_max) {
  if (r_min == 0 || r_max < r_min + 1 || r_max >= chi_r.size()) {
    throw DomainError("decay_fit: bad window [" + std::to_string(r_min) + ", " +
                      std::to_string(r_max) + "] for profile of length " +
                      std::to_string(chi_r.size()));
  }
  std::vector<double> lx, ly;
  for (std::size_t r = r_min; r <= r_max; ++r) {
    if (!(chi_r[r] > 0.0)) {
      throw DomainError("decay_fit: chi_r <= 0 at r = " + std::to_string(r));
    }
    lx.push_back(std::log(static_cast<double>(r)));
    ly.push_back(std::log(chi_r[r]));
  }
  const LineFit fit = fit_line(lx, ly);
  return {-fit.slope, std::exp(fit.intercept), fit.r_squared};
}

/// chi_{0r} for r = 0 .. N/2 on a chain.
inline std::vector<double> chi_profile(const Susceptibility& s) {
  const auto n = s.chi.rows();
  std::vector<double> out(static_cast<std::size_t>(n / 2 + 1));
  for (Eigen::Index r = 0; r <= n / 2; ++r) out[static_cast<std::size_t>(r)] = s.chi(0, r);
  return out;
}

/// Spectral data at gamma = 1, shared by sweeps that only rescale Gamma.
inline std::shared_ptr<const SpectralData> unit_spectral(LatticeSpec spec,
                                                         const TruncationPolicy& policy,
                                                         const CouplingOptions& options = {}) {
  spec.gamma = 1.0;
  spec.h.clear();
  return std::make_shared<const SpectralData>(spectral_for(spec, policy, options));
}

/// Homogeneous saddle and its analytic susceptibility at coupling gamma.
inline Susceptibility homogeneous_susceptibility(const SpectralData& unit, double gamma,
                                                 double beta, double omega_z,
                                                 const SolverSettings& settings = {}) {
  auto spectral = std::make_shared<const SpectralData>(unit.rescaled(gamma));
  SaddleProblem p(spectral, beta, omega_z);
  return susceptibility_analytical(p, solve_homogeneous(p, settings));
}

struct HalfChainRow {
  double alpha = 0.0;
  double gamma = 0.0;
  double chi_half = 0.0;  ///< +inf at a pole
};

/// chi_{0,N/2}(Gamma) for each alpha, at uniform zero field.
inline std::vector<HalfChainRow> half_chain_sweep(const std::vector<double>& alphas,
                                                  const std::vector<double>& gammas,
                                                  const LatticeSpec& spec,
                                                  const TruncationPolicy& policy = {},
                                                  unsigned jobs = 1,
                                                  const SolverSettings& settings = {}) {
  if (spec.d != 1 || spec.L % 2 != 0) {
    throw ConfigError("half_chain_sweep: needs a chain (d = 1) with even L");
  }
  std::vector<std::shared_ptr<const SpectralData>> units(alphas.size());
  parallel_for(alphas.size(), jobs, [&](std::size_t a) {
    LatticeSpec s = spec;
    s.alpha = alphas[a];
    units[a] = unit_spectral(s, policy);
  });
  std::vector<HalfChainRow> rows(alphas.size() * gammas.size());
  const auto half = static_cast<Eigen::Index>(spec.L / 2);
  parallel_for(rows.size(), jobs, [&](std::size_t cell) {
    const std::size_t a = cell / gammas.size();
    const std::size_t g = cell % gammas.size();
    HalfChainRow& row = rows[cell];
    row.alpha = alphas[a];
    row.gamma = gammas[g];
    try {
      row.chi_half =
          homogeneous_susceptibility(*units[a], gammas[g], spec.beta, spec.omega_z, settings)
              .chi(0, half);
    } catch (const NumericError&) {
      row.chi_half = kInfinity;
    }
  });
  return rows;
}

/// Gamma of the largest chi_half for one alpha.
inline double peak_gamma(const std::vector<HalfChainRow>& rows, double alpha) {
  double best = -kInfinity, where = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : rows) {
    if (r.alpha == alpha && r.chi_half > best) {
      best = r.chi_half;
      where = r.gamma;
    }
  }
  return where;
}

struct SlopeCell {
  double gamma = 0.0;
  double T = 0.0;
  std::vector<double> alpha_chi;  ///< one per alpha
  double a = 0.0;
  double b_fit = 0.0;
};

/// alpha_chi = a alpha + b_fit across `alphas` for every (Gamma, T) cell.
/// Decay exponents are fitted over r in [3, N/2].
inline std::vector<SlopeCell> slope_map(const std::vector<double>& alphas,
                                        const std::vector<double>& gammas,
                                        const std::vector<double>& temperatures,
                                        const LatticeSpec& spec,
                                        const TruncationPolicy& policy = {}, unsigned jobs = 1,
                                        const SolverSettings& settings = {}) {
  if (spec.d != 1) throw ConfigError("slope_map: needs a chain (d = 1)");
  if (alphas.size() < 2) throw ConfigError("slope_map: need at least two alphas");
  const std::size_t r_max = static_cast<std::size_t>(spec.L) / 2;
  if (r_max < 4) throw ConfigError("slope_map: chain too short for the fit window");

  std::vector<std::shared_ptr<const SpectralData>> units(alphas.size());
  parallel_for(alphas.size(), jobs, [&](std::size_t a) {
    LatticeSpec s = spec;
    s.alpha = alphas[a];
    units[a] = unit_spectral(s, policy);
  });

  std::vector<SlopeCell> cells(gammas.size() * temperatures.size());
  parallel_for(cells.size(), jobs, [&](std::size_t c) {
    SlopeCell& cell = cells[c];
    cell.gamma = gammas[c / temperatures.size()];
    cell.T = temperatures[c % temperatures.size()];
    const double beta = cell.T == 0.0 ? kInfinity : 1.0 / cell.T;
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      const auto chi = homogeneous_susceptibility(*units[a], cell.gamma, beta, spec.omega_z,
                                                  settings);
      cell.alpha_chi.push_back(decay_fit(chi_profile(chi), 3, r_max).alpha_chi);
    }
    const LineFit fit = fit_line(alphas, cell.alpha_chi);
    cell.a = fit.slope;
    cell.b_fit = fit.intercept;
  });
  return cells;
}

/// beta_c from omega_z = 4 Gamma tanh(beta_c omega_z / 2), by bisection.
/// Returns +inf at Gamma = omega_z/4 and NaN below it (no transition).
inline double critical_beta(double gamma, double omega_z) {
  if (!(gamma > 0.0)) throw DomainError("critical_beta: gamma must be > 0");
  if (omega_z == 0.0) return 0.5 / gamma;
  if (gamma < 0.25 * omega_z) return std::numeric_limits<double>::quiet_NaN();
  if (gamma == 0.25 * omega_z) return kInfinity;
  auto g = [&](double b) { return omega_z - 4.0 * gamma * std::tanh(0.5 * b * omega_z); };
  double hi = 1.0 / omega_z;
  while (g(hi) > 0.0) hi *= 2.0;
  return bisect(g, 0.0, hi);
}

/// beta_c from the k = 0 pole 1 = 2 Y Gamma of the paramagnetic susceptibility.
inline double critical_beta_from_pole(double gamma, double omega_z) {
  if (!(gamma > 0.0)) throw DomainError("critical_beta_from_pole: gamma must be > 0");
  if (gamma < 0.25 * omega_z) return std::numeric_limits<double>::quiet_NaN();
  if (gamma == 0.25 * omega_z) return kInfinity;
  auto g = [&](double b) { return 1.0 - 2.0 * gamma * response_kernel(b, omega_z, 0.0); };
  double hi = omega_z > 0.0 ? 1.0 / omega_z : 1.0 / gamma;
  while (g(hi) > 0.0) hi *= 2.0;
  return bisect(g, 0.0, hi);
}

/// beta_c from the multivariate exponent: the largest eigenvalue of the
/// Hessian of phi at u = 0 changes sign there. Independent of alpha.
inline double critical_beta_multivariate(std::shared_ptr<const SpectralData> spectral,
                                         double omega_z) {
  const double gamma = 1.0 / spectral->omega(0);
  if (gamma < 0.25 * omega_z) return std::numeric_limits<double>::quiet_NaN();
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(spectral->M));
  auto top = [&](double beta) {
    SaddleProblem p(spectral, beta, omega_z);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled_hessian(zero, p), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
  };
  double hi = omega_z > 0.0 ? 1.0 / omega_z : 1.0 / gamma;
  while (top(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 1e12) return kInfinity;
  }
  return bisect(top, 1e-12, hi);
}

/// First Gamma on an increasing grid where the multivariate ascent gives u_0 > threshold.
inline double order_onset_gamma(const SpectralData& unit, const std::vector<double>& gammas,
                                double beta, double omega_z, double threshold = 1e-3,
                                const SolverSettings& settings = {}) {
  for (double g : gammas) {
    auto spectral = std::make_shared<const SpectralData>(unit.rescaled(g));
    SaddleProblem p(spectral, beta, omega_z);
    if (solve_multivariate(p, std::nullopt, settings).u_bar(0) > threshold) return g;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

struct CriticalPoint {
  double gamma = 0.0;
  double beta_c = 0.0;
  double T_c = 0.0;        ///< NaN when there is no transition
  bool transition = false;
};

inline std::vector<CriticalPoint> critical_line(const std::vector<double>& gammas, double omega_z) {
  std::vector<CriticalPoint> out;
  out.reserve(gammas.size());
  for (double g : gammas) {
    CriticalPoint c;
    c.gamma = g;
    c.beta_c = critical_beta(g, omega_z);
    c.transition = !std::isnan(c.beta_c);
    c.T_c = c.transition ? 1.0 / c.beta_c : std::numeric_limits<double>::quiet_NaN();
    out.push_back(c);
  }
  return out;
}

}  // namespace lrsaddle
