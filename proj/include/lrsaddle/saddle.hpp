#pragma once

// Saddle-point exponent of the transverse-field Ising model after the
// generalized Hubbard-Stratonovich mapping:
//
//   phi[u] = -beta sum_k omega_k u_k^2 + (1/N) sum_i ln[2 cosh(beta eps_i)],
//   2 eps_i = sqrt(omega_z^2 + 4 x_i^2),  x_i = 2 sum_k lambda_ik u_k + h_i.
//
// The solvers work on psi = phi / beta, which has a finite beta -> infinity
// limit (ln[2 cosh(beta eps)] / beta -> eps), so the same code path covers T = 0.

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lrsaddle/common.hpp"
#include "lrsaddle/lattice.hpp"
#include "lrsaddle/spectral.hpp"

namespace lrsaddle {

class SaddleProblem {
 public:
  SaddleProblem(std::shared_ptr<const SpectralData> spectral, double beta, double omega_z,
                Vector h = {})
      : spectral_(std::move(spectral)), beta_(beta), omega_z_(omega_z), h_(std::move(h)) {
    if (!spectral_) throw DomainError("SaddleProblem: missing spectral data");
    if (spectral_->M == 0 || spectral_->omega.size() != static_cast<Eigen::Index>(spectral_->M)) {
      throw ConfigError("SaddleProblem: spectral data must be truncated to M >= 1 modes");
    }
    for (Eigen::Index k = 0; k < spectral_->omega.size(); ++k) {
      const double w = spectral_->omega(k);
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw ConfigError("SaddleProblem: mode " + std::to_string(k) +
                          " has no finite positive frequency");
      }
    }
    if (!(beta_ > 0.0)) throw ConfigError("SaddleProblem: beta must be > 0 or inf");
    if (!(omega_z_ >= 0.0)) throw ConfigError("SaddleProblem: omega_z must be >= 0");
    if (h_.size() == 0) h_ = Vector::Zero(static_cast<Eigen::Index>(N()));
    if (h_.size() != static_cast<Eigen::Index>(N())) {
      throw ConfigError("SaddleProblem: field has wrong length");
    }
  }

  /// Problem for a lattice spec; the field is taken from spec.h.
  static SaddleProblem from_spec(const LatticeSpec& spec,
                                 std::shared_ptr<const SpectralData> spectral) {
    Vector h = Vector::Zero(static_cast<Eigen::Index>(spec.sites()));
    for (std::size_t i = 0; i < spec.h.size(); ++i) h(static_cast<Eigen::Index>(i)) = spec.h[i];
    return SaddleProblem(std::move(spectral), spec.beta, spec.omega_z, std::move(h));
  }

  const SpectralData& spectral() const { return *spectral_; }
  const std::shared_ptr<const SpectralData>& spectral_ptr() const { return spectral_; }
  double beta() const { return beta_; }
  double omega_z() const { return omega_z_; }
  const Vector& h() const { return h_; }
  std::size_t N() const { return spectral_->N(); }
  std::size_t M() const { return spectral_->M; }
  bool zero_temperature() const { return std::isinf(beta_); }
  /// Coupling scale: the top eigenvalue D_0 (equal to gamma for the Kac-rescaled matrix).
  double gamma() const { return 1.0 / spectral_->omega(0); }
  bool uniform_field() const { return (h_.array() == h_(0)).all(); }

  SaddleProblem with_field(Vector h) const {
    return SaddleProblem(spectral_, beta_, omega_z_, std::move(h));
  }

 private:
  std::shared_ptr<const SpectralData> spectral_;
  double beta_;
  double omega_z_;
  Vector h_;
};

/// Per-site quantities at a given u.
struct SiteFields {
  Vector x;    ///< effective longitudinal field 2 sum_k lambda_ik u_k + h_i
  Vector eps;  ///< single-spin level eps_i
  Vector m;    ///< <sigma^x_i> = tanh(beta eps_i) x_i / eps_i
  Vector Y;    ///< d m_i / d x_i
};

/// Local response dm/dx of one spin in field x:
/// beta (1 - tanh^2)(x/eps)^2 + tanh/eps (1 - (x/eps)^2).
inline double response_kernel(double beta, double omega_z, double x) {
  const double eps = std::sqrt(0.25 * omega_z * omega_z + x * x);
  if (eps < 1e-300) return std::isinf(beta) ? kInfinity : beta;
  const double t = std::isinf(beta) ? 1.0 : std::tanh(beta * eps);
  const double r = x / eps;
  const double sech2_beta = std::isinf(beta) ? 0.0 : beta * (1.0 - t * t);
  return sech2_beta * r * r + t / eps * (1.0 - r * r);
}

inline double single_spin_magnetization(double beta, double omega_z, double x) {
  const double eps = std::sqrt(0.25 * omega_z * omega_z + x * x);
  if (eps < 1e-300) return 0.0;
  const double t = std::isinf(beta) ? 1.0 : std::tanh(beta * eps);
  return t * x / eps;
}

inline SiteFields site_fields(const Vector& u, const SaddleProblem& p) {
  if (u.size() != static_cast<Eigen::Index>(p.M())) {
    throw DomainError("saddle: u has " + std::to_string(u.size()) + " entries, expected " +
                      std::to_string(p.M()));
  }
  SiteFields f;
  f.x = 2.0 * (p.spectral().lambda * u) + p.h();
  const auto n = f.x.size();
  f.eps.resize(n);
  f.m.resize(n);
  f.Y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = f.x(i);
    f.eps(i) = std::sqrt(0.25 * p.omega_z() * p.omega_z() + x * x);
    f.m(i) = single_spin_magnetization(p.beta(), p.omega_z(), x);
    f.Y(i) = response_kernel(p.beta(), p.omega_z(), x);
  }
  return f;
}

/// psi = phi / beta; at T = 0 this is minus the ground-state energy per site
/// of the decoupled problem.
inline double scaled_phi(const Vector& u, const SaddleProblem& p) {
  const SiteFields f = site_fields(u, p);
  const double quad = (p.spectral().omega.array() * u.array().square()).sum();
  double acc = 0.0;
  if (p.zero_temperature()) {
    acc = f.eps.sum();
  } else {
    for (Eigen::Index i = 0; i < f.eps.size(); ++i) acc += log_2cosh(p.beta() * f.eps(i));
    acc /= p.beta();
  }
  return -quad + acc / static_cast<double>(p.N());
}

inline double phi(const Vector& u, const SaddleProblem& p) {
  if (p.zero_temperature()) throw DomainError("phi: beta must be finite, use scaled_phi");
  const SiteFields f = site_fields(u, p);
  const double quad = (p.spectral().omega.array() * u.array().square()).sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.eps.size(); ++i) acc += log_2cosh(p.beta() * f.eps(i));
  return -p.beta() * quad + acc / static_cast<double>(p.N());
}

inline Vector scaled_gradient(const Vector& u, const SaddleProblem& p) {
  const SiteFields f = site_fields(u, p);
  const auto& s = p.spectral();
  return (-2.0 * s.omega.array() * u.array()).matrix() +
         (2.0 / static_cast<double>(p.N())) * (s.lambda.transpose() * f.m);
}

inline Vector phi_gradient(const Vector& u, const SaddleProblem& p) {
  if (p.zero_temperature()) throw DomainError("phi_gradient: beta must be finite");
  return p.beta() * scaled_gradient(u, p);
}

inline Matrix scaled_hessian(const Vector& u, const SaddleProblem& p) {
  const SiteFields f = site_fields(u, p);
  const auto& s = p.spectral();
  Matrix hess = (4.0 / static_cast<double>(p.N())) *
                (s.lambda.transpose() * f.Y.asDiagonal() * s.lambda);
  hess.diagonal() -= 2.0 * s.omega;
  return hess;
}

/// Hessian by central differences of the analytic gradient, symmetrised.
/// Returned for phi (finite beta) or psi (T = 0).
inline Matrix hessian_fd(const Vector& u, const SaddleProblem& p, double step) {
  const auto m = static_cast<Eigen::Index>(p.M());
  const double scale = p.zero_temperature() ? 1.0 : p.beta();
  Matrix hess(m, m);
  Vector probe = u;
  for (Eigen::Index k = 0; k < m; ++k) {
    probe(k) = u(k) + step;
    const Vector up = scaled_gradient(probe, p);
    probe(k) = u(k) - step;
    const Vector down = scaled_gradient(probe, p);
    probe(k) = u(k);
    hess.col(k) = scale * (up - down) / (2.0 * step);
  }
  return 0.5 * (hess + hess.transpose());
}

struct SolverSettings {
  double grad_tol = 1e-10;       ///< on |grad psi|_inf
  int max_iter = 500;
  double init_scale = 0.1;       ///< initial u_0 in units of gamma
  double hessian_step = 1e-5;    ///< relative to max(gamma, omega_z)
  int max_escapes = 8;
};

enum class SaddleMode { homogeneous, multivariate };
enum class SaddleStatus { maximum, saddle, degenerate };

inline const char* to_string(SaddleMode m) {
  return m == SaddleMode::homogeneous ? "homogeneous" : "multivariate";
}
inline const char* to_string(SaddleStatus s) {
  switch (s) {
    case SaddleStatus::maximum: return "maximum";
    case SaddleStatus::saddle: return "saddle";
    case SaddleStatus::degenerate: return "degenerate";
  }
  return "unknown";
}

struct SaddleSolution {
  Vector u_bar;
  double phi_value = 0.0;    ///< phi, or psi = phi/beta when phi_scaled
  bool phi_scaled = false;   ///< true on the zero-temperature path
  Vector hessian_eigs;       ///< ascending
  SaddleMode mode = SaddleMode::multivariate;
  SaddleStatus status = SaddleStatus::maximum;
  int iterations = 0;
  double gradient_norm = 0.0;  ///< |grad psi|_inf

  bool is_maximum() const { return status == SaddleStatus::maximum; }
};

namespace detail {

inline double hessian_step(const SaddleProblem& p, const SolverSettings& s) {
  return s.hessian_step * std::max(p.gamma(), p.omega_z());
}

/// Fills value, Hessian spectrum and status of a candidate maximiser.
inline void finalize(SaddleSolution& sol, const SaddleProblem& p, const SolverSettings& s) {
  sol.phi_scaled = p.zero_temperature();
  sol.phi_value = sol.phi_scaled ? scaled_phi(sol.u_bar, p) : phi(sol.u_bar, p);
  sol.gradient_norm = scaled_gradient(sol.u_bar, p).cwiseAbs().maxCoeff();
  const Matrix hess = hessian_fd(sol.u_bar, p, hessian_step(p, s));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(hess, Eigen::EigenvaluesOnly);
  sol.hessian_eigs = eig.eigenvalues();
  const double scale = (p.zero_temperature() ? 1.0 : p.beta()) * p.spectral().omega(0);
  const double top = sol.hessian_eigs(sol.hessian_eigs.size() - 1);
  if (top < -1e-9 * scale) {
    sol.status = SaddleStatus::maximum;
  } else if (top <= 1e-9 * scale) {
    sol.status = SaddleStatus::degenerate;
  } else {
    sol.status = SaddleStatus::saddle;
  }
}

/// Unit vector with a non-negative zero-mode component (first nonzero entry
/// positive when that component vanishes).
inline Vector oriented(Vector v) {
  double lead = v(0);
  if (std::abs(lead) < 1e-12) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (std::abs(v(k)) > 1e-12) {
        lead = v(k);
        break;
      }
    }
  }
  if (lead < 0.0) v = -v;
  return v.normalized();
}

}  // namespace detail

/// Default symmetry-broken start: u_0 = init_scale * gamma, other modes zero.
inline Vector default_start(const SaddleProblem& p, const SolverSettings& s = {}) {
  Vector u = Vector::Zero(static_cast<Eigen::Index>(p.M()));
  u(0) = s.init_scale * p.gamma();
  return u;
}

/// Local maximiser of psi by damped Newton ascent. Stationary points that are
/// not maxima are left along the top Hessian eigenvector.
inline SaddleSolution solve_multivariate(const SaddleProblem& p,
                                         std::optional<Vector> u_init = std::nullopt,
                                         const SolverSettings& settings = {}) {
  Vector u = u_init ? *u_init : default_start(p, settings);
  if (u.size() != static_cast<Eigen::Index>(p.M())) {
    throw DomainError("solve_multivariate: u_init has wrong length");
  }
  int escapes = 0;
  int iter = 0;
  double value = scaled_phi(u, p);
  for (; iter < settings.max_iter; ++iter) {
    const Vector g = scaled_gradient(u, p);
    const double gnorm = g.cwiseAbs().maxCoeff();
    const Matrix hess = scaled_hessian(u, p);
    Eigen::LLT<Matrix> llt(-hess);
    const bool concave = llt.info() == Eigen::Success;

    if (gnorm <= settings.grad_tol) {
      if (concave) break;
      if (escapes >= settings.max_escapes) break;
      Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
      const Vector dir = detail::oriented(eig.eigenvectors().col(eig.eigenvectors().cols() - 1));
      u += settings.init_scale * p.gamma() * dir;
      value = scaled_phi(u, p);
      ++escapes;
      continue;
    }

    Vector step;
    if (concave) {
      step = llt.solve(g);
    } else {
      // shifted Newton: -H + mu I made positive definite
      Eigen::SelfAdjointEigenSolver<Matrix> eig(hess, Eigen::EigenvaluesOnly);
      const double mu = eig.eigenvalues().maxCoeff() + 2.0 * p.spectral().omega(0);
      Matrix shifted = -hess;
      shifted.diagonal().array() += mu;
      step = shifted.llt().solve(g);
    }
    const double slope = g.dot(step);
    double t = 1.0;
    Vector trial = u + step;
    double trial_value = scaled_phi(trial, p);
    // Near convergence the value change is below rounding; accept Newton steps.
    const bool tiny = concave && step.cwiseAbs().maxCoeff() < 1e-7 * p.gamma();
    if (!tiny) {
      const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value));
      while (trial_value < value + 1e-4 * t * slope - noise && t > 1e-12) {
        t *= 0.5;
        trial = u + t * step;
        trial_value = scaled_phi(trial, p);
      }
      if (t <= 1e-12 && trial_value < value) {
        throw NumericError("solve_multivariate: line search failed at |grad| = " +
                           std::to_string(gnorm));
      }
    }
    u = trial;
    value = trial_value;
  }

  SaddleSolution sol;
  sol.u_bar = u;
  sol.mode = SaddleMode::multivariate;
  sol.iterations = iter;
  detail::finalize(sol, p, settings);
  if (sol.gradient_norm > settings.grad_tol) {
    throw NumericError("solve_multivariate: no convergence after " +
                       std::to_string(settings.max_iter) + " iterations (|grad| = " +
                       std::to_string(sol.gradient_norm) + ")");
  }
  return sol;
}

/// Closed-form second derivative of phi along the homogeneous direction at
/// zero field: -2 beta omega_0 + sech^2(beta eps)(4 beta u/eps)^2
/// + beta tanh(beta eps)(4/eps - 16 u^2/eps^3).
inline double homogeneous_hessian(double u, double beta, double omega0, double omega_z) {
  const double eps = 0.5 * std::sqrt(omega_z * omega_z + 16.0 * u * u);
  const double t = std::tanh(beta * eps);
  const double a = 4.0 * beta * u / eps;
  return -2.0 * beta * omega0 + (1.0 - t * t) * a * a +
         beta * t * (4.0 / eps - 16.0 * u * u / (eps * eps * eps));
}

/// Uniform-field problem reduced to the zero mode: u_k = 0 for k > 0 and
/// u_0 solves u = gamma m(2u + h).
inline SaddleSolution solve_homogeneous(const SaddleProblem& p, const SolverSettings& settings = {}) {
  if (!p.uniform_field()) throw ConfigError("solve_homogeneous: field must be uniform");
  const double gamma = p.gamma();
  const double wz = p.omega_z();
  const double h0 = p.h()(0);
  const double beta = p.beta();
  double u_bar = 0.0;

  auto scalar_value = [&](double u) {
    const double x = 2.0 * u + h0;
    const double eps = std::sqrt(0.25 * wz * wz + x * x);
    const double level = p.zero_temperature() ? eps : log_2cosh(beta * eps) / beta;
    return -u * u / gamma + level;
  };

  if (h0 == 0.0) {
    // nontrivial branch: eps = 2 gamma tanh(beta eps), 2 eps = sqrt(wz^2 + 16 u^2)
    double eps = 0.0;
    if (p.zero_temperature()) {
      if (2.0 * gamma > 0.5 * wz) eps = 2.0 * gamma;
    } else {
      const double lo = std::max(0.5 * wz, 1e-12);
      auto g = [&](double e) { return e - 2.0 * gamma * std::tanh(beta * e); };
      if (g(lo) < 0.0) eps = bisect(g, lo, 2.0 * gamma, 1e-15);
    }
    if (eps > 0.0) u_bar = 0.25 * std::sqrt(std::max(4.0 * eps * eps - wz * wz, 0.0));
  } else {
    auto F = [&](double u) {
      return gamma * single_spin_magnetization(beta, wz, 2.0 * u + h0) - u;
    };
    constexpr int kGrid = 4096;
    double best = -kInfinity;
    double prev_u = -gamma, prev_f = F(prev_u);
    for (int k = 1; k <= kGrid; ++k) {
      const double cur_u = -gamma + 2.0 * gamma * k / kGrid;
      const double cur_f = F(cur_u);
      double root = std::numeric_limits<double>::quiet_NaN();
      if (prev_f == 0.0) {
        root = prev_u;
      } else if ((prev_f > 0.0) != (cur_f > 0.0)) {
        root = bisect(F, prev_u, cur_u, 1e-16);
      }
      if (std::isfinite(root)) {
        const double v = scalar_value(root);
        if (v > best) {
          best = v;
          u_bar = root;
        }
      }
      prev_u = cur_u;
      prev_f = cur_f;
    }
    if (!std::isfinite(best)) {
      throw NumericError("solve_homogeneous: no root of u = gamma m(2u + h) in [-gamma, gamma]");
    }
  }

  SaddleSolution sol;
  sol.u_bar = Vector::Zero(static_cast<Eigen::Index>(p.M()));
  sol.u_bar(0) = u_bar;
  sol.mode = SaddleMode::homogeneous;
  detail::finalize(sol, p, settings);
  return sol;
}

/// Ascents from `starts` random points with |u| <= radius; distinct local
/// maxima are returned with the best first.
inline std::vector<SaddleSolution> multistart_maxima(const SaddleProblem& p, int starts,
                                                     double radius, unsigned seed,
                                                     const SolverSettings& settings = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  std::vector<SaddleSolution> found;
  for (int s = 0; s < starts; ++s) {
    Vector u(static_cast<Eigen::Index>(p.M()));
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) = normal(rng);
    u *= radius * std::pow(unit(rng), 1.0 / static_cast<double>(u.size())) / u.norm();
    SaddleSolution sol = solve_multivariate(p, u, settings);
    if (!sol.is_maximum()) continue;
    const bool seen = std::any_of(found.begin(), found.end(), [&](const SaddleSolution& f) {
      return (f.u_bar - sol.u_bar).cwiseAbs().maxCoeff() < 1e-6 * p.gamma();
    });
    if (!seen) found.push_back(std::move(sol));
  }
  std::sort(found.begin(), found.end(), [](const SaddleSolution& a, const SaddleSolution& b) {
    return a.phi_value > b.phi_value;
  });
  return found;
}

struct FreeEnergy {
  double leading = 0.0;      ///< -phi/beta, the N -> infinity free energy per site
  double fluctuation = 0.0;  ///< -(1/(2 beta N)) sum_k ln(N/(pi omega_k)); vanishes per site
  double total() const { return leading + fluctuation; }
};

inline double partition_log(const SaddleProblem& p, const SaddleSolution& sol) {
  if (p.zero_temperature()) throw DomainError("partition_log: beta must be finite");
  const double n = static_cast<double>(p.N());
  double prefactor = 0.0;
  for (Eigen::Index k = 0; k < p.spectral().omega.size(); ++k) {
    prefactor += std::log(n / (std::numbers::pi * p.spectral().omega(k)));
  }
  return n * phi(sol.u_bar, p) + 0.5 * prefactor;
}

inline FreeEnergy free_energy_per_site(const SaddleProblem& p, const SaddleSolution& sol) {
  FreeEnergy f;
  f.leading = -scaled_phi(sol.u_bar, p);
  if (!p.zero_temperature()) {
    const double n = static_cast<double>(p.N());
    double prefactor = 0.0;
    for (Eigen::Index k = 0; k < p.spectral().omega.size(); ++k) {
      prefactor += std::log(n / (std::numbers::pi * p.spectral().omega(k)));
    }
    f.fluctuation = -0.5 * prefactor / (p.beta() * n);
  }
  return f;
}

struct SecondOrderCorrection {
  double value = 0.0;  ///< (1/N) sum_k ln|nu_k|
  bool degenerate = false;
};

inline SecondOrderCorrection second_order_correction(const SaddleProblem& p,
                                                     const SaddleSolution& sol) {
  SecondOrderCorrection out;
  for (Eigen::Index k = 0; k < sol.hessian_eigs.size(); ++k) {
    const double nu = std::abs(sol.hessian_eigs(k));
    if (nu == 0.0) {
      out.degenerate = true;
      continue;
    }
    out.value += std::log(nu);
  }
  out.degenerate = out.degenerate || sol.status == SaddleStatus::degenerate;
  out.value /= static_cast<double>(p.N());
  return out;
}

struct ModeConvergence {
  std::size_t M = 0;
  double free_energy = 0.0;
  std::vector<std::pair<std::size_t, double>> history;
};

/// Doubles the retained mode count, starting from `start`, until the leading
/// free energy per site moves by less than `tol`.
inline ModeConvergence converge_modes(const SpectralData& full, double beta, double omega_z,
                                      const Vector& h, const TruncationPolicy& start = {},
                                      const SolverSettings& settings = {}, double tol = 1e-10) {
  std::size_t positive = 0;
  while (positive < full.N() && full.D(static_cast<Eigen::Index>(positive)) > 0.0) ++positive;
  ModeConvergence out;
  TruncationPolicy policy = start;
  std::optional<double> previous;
  for (;;) {
    auto spectral = std::make_shared<const SpectralData>(truncate_modes(full, policy));
    SaddleProblem p(spectral, beta, omega_z, h);
    const auto sol = solve_multivariate(p, std::nullopt, settings);
    const double f = free_energy_per_site(p, sol).leading;
    out.history.emplace_back(spectral->M, f);
    out.M = spectral->M;
    out.free_energy = f;
    if (previous && std::abs(f - *previous) < tol) break;
    if (spectral->M >= positive) break;
    previous = f;
    policy.target_M = std::min(2 * spectral->M, positive);
  }
  return out;
}

}  // namespace lrsaddle
