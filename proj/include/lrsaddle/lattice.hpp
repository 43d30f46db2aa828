#pragma once

// Periodic d-dimensional lattices and the Kac-rescaled power-law coupling
// J_ij = gamma * Jt(r_ij) / N_tilde, with Jt(0) = b and Jt(r) = |r|^-alpha.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "lrsaddle/common.hpp"

namespace lrsaddle {

/// One model instance. `beta` may be kInfinity for the zero-temperature path.
struct LatticeSpec {
  int d = 1;
  int L = 2;
  double alpha = 0.0;
  double gamma = 1.0;
  double omega_z = 1.0;
  double beta = 1.0;
  std::vector<double> h;  ///< per-site longitudinal field; empty means zero

  std::size_t sites() const {
    std::size_t n = 1;
    for (int k = 0; k < d; ++k) n *= static_cast<std::size_t>(L);
    return n;
  }
  bool zero_temperature() const { return std::isinf(beta); }
  double field(std::size_t i) const { return h.empty() ? 0.0 : h[i]; }
  bool uniform_field() const {
    return std::all_of(h.begin(), h.end(), [&](double v) { return v == h.front(); });
  }

  void validate() const {
    if (d < 1) throw ConfigError("lattice: d must be a positive integer");
    if (L < 1) throw ConfigError("lattice: L must be a positive integer");
    if (std::pow(static_cast<double>(L), d) > 1e9) throw ConfigError("lattice: L^d too large");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("lattice: alpha must be >= 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("lattice: gamma must be > 0");
    if (!(omega_z >= 0.0) || !std::isfinite(omega_z)) {
      throw ConfigError("lattice: omega_z must be >= 0");
    }
    if (!(beta > 0.0)) throw ConfigError("lattice: beta must be > 0 or inf");
    if (!h.empty() && h.size() != sites()) {
      throw ConfigError("lattice: h has " + std::to_string(h.size()) + " entries, expected " +
                        std::to_string(sites()));
    }
  }
};

/// Dense rescaled coupling matrix together with the parameters that built it.
struct CouplingMatrix {
  Matrix J;
  double b = 0.0;
  double N_tilde = 0.0;
  LatticeSpec spec;

  std::size_t size() const { return static_cast<std::size_t>(J.rows()); }
};

namespace detail {

inline void check_site(std::size_t i, const LatticeSpec& spec) {
  if (i >= spec.sites()) {
    throw DomainError("site index " + std::to_string(i) + " out of range [0, " +
                      std::to_string(spec.sites()) + ")");
  }
}

/// Lattice coordinates of site i; coordinate 0 varies fastest.
inline std::vector<int> coordinates(std::size_t i, const LatticeSpec& spec) {
  std::vector<int> c(static_cast<std::size_t>(spec.d));
  for (int k = 0; k < spec.d; ++k) {
    c[static_cast<std::size_t>(k)] = static_cast<int>(i % static_cast<std::size_t>(spec.L));
    i /= static_cast<std::size_t>(spec.L);
  }
  return c;
}

/// Site index of the displacement (j - i) taken modulo L in every direction.
inline std::size_t displacement_index(std::size_t i, std::size_t j, const LatticeSpec& spec) {
  std::size_t index = 0;
  std::size_t stride = 1;
  const auto L = static_cast<std::size_t>(spec.L);
  for (int k = 0; k < spec.d; ++k) {
    const std::size_t ci = i % L, cj = j % L;
    index += ((cj + L - ci) % L) * stride;
    i /= L;
    j /= L;
    stride *= L;
  }
  return index;
}

/// Euclidean length of the nearest image of the displacement stored at index s.
inline double image_length(std::size_t s, const LatticeSpec& spec) {
  long sum = 0;
  for (int c : coordinates(s, spec)) {
    // components in (-L/2, L/2]; the antipode at even L maps to +L/2
    const int m = (c > spec.L / 2) ? c - spec.L : c;
    sum += static_cast<long>(m) * m;
  }
  return std::sqrt(static_cast<double>(sum));
}

}  // namespace detail

/// Nearest-image displacement from site i to site j, components in (-L/2, L/2].
inline std::vector<int> nearest_image_displacement(std::size_t i, std::size_t j,
                                                   const LatticeSpec& spec) {
  detail::check_site(i, spec);
  detail::check_site(j, spec);
  auto r = detail::coordinates(detail::displacement_index(i, j, spec), spec);
  for (int& c : r) {
    if (c > spec.L / 2) c -= spec.L;
  }
  return r;
}

inline double nearest_image_distance(std::size_t i, std::size_t j, const LatticeSpec& spec) {
  detail::check_site(i, spec);
  detail::check_site(j, spec);
  return detail::image_length(detail::displacement_index(i, j, spec), spec);
}

/// Unnormalised coupling Jt(r_s) for every displacement s measured from site 0,
/// with Jt(0) = b.
inline std::vector<double> coupling_profile(const LatticeSpec& spec, double b) {
  const std::size_t n = spec.sites();
  std::vector<double> profile(n);
  profile[0] = b;
  for (std::size_t s = 1; s < n; ++s) {
    profile[s] = spec.alpha == 0.0 ? 1.0 : std::pow(detail::image_length(s, spec), -spec.alpha);
  }
  return profile;
}

/// Fourier transform sum_s profile[s] cos(q . r_s) for all N reciprocal vectors;
/// entry t belongs to the wave vector with integer coordinates coordinates(t).
inline std::vector<double> profile_fourier(const LatticeSpec& spec,
                                           const std::vector<double>& profile) {
  const std::size_t n = spec.sites();
  const auto L = static_cast<std::size_t>(spec.L);
  std::vector<double> cos_table(L);
  for (std::size_t m = 0; m < L; ++m) {
    cos_table[m] = std::cos(2.0 * std::numbers::pi * static_cast<double>(m) /
                            static_cast<double>(L));
  }
  std::vector<std::vector<int>> coords(n);
  for (std::size_t s = 0; s < n; ++s) coords[s] = detail::coordinates(s, spec);

  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      std::size_t phase = 0;
      for (int k = 0; k < spec.d; ++k) {
        phase += static_cast<std::size_t>(coords[t][static_cast<std::size_t>(k)]) *
                 static_cast<std::size_t>(coords[s][static_cast<std::size_t>(k)]);
      }
      acc += profile[s] * cos_table[phase % L];
    }
    out[t] = acc;
  }
  return out;
}

/// Dirichlet eta sum_{r>=1} (-1)^{r+1} r^-alpha by iterated averaging of
/// partial sums (Euler transformation). eta(0) = 1/2 in this summation.
inline double alternating_zeta(double alpha, double tol = 1e-13) {
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t n = 32; n <= 4096; n *= 2) {
    std::vector<double> s(n);
    double acc = 0.0;
    for (std::size_t r = 1; r <= n; ++r) {
      const double term = std::pow(static_cast<double>(r), -alpha);
      acc += (r % 2 == 1) ? term : -term;
      s[r - 1] = acc;
    }
    for (std::size_t level = 1; level < n; ++level) {
      for (std::size_t i = 0; i + level < n; ++i) s[i] = 0.5 * (s[i] + s[i + 1]);
    }
    if (std::abs(s[0] - previous) < tol) return s[0];
    previous = s[0];
  }
  return previous;
}

/// Finite-lattice shift: the b that puts the smallest eigenvalue of the
/// L^d coupling matrix exactly at zero.
inline double finite_size_shift(const LatticeSpec& spec) {
  if (spec.alpha == 0.0) return 1.0;
  const auto eig = profile_fourier(spec, coupling_profile(spec, 0.0));
  return -*std::min_element(eig.begin(), eig.end());
}

/// Diagonal parameter b. d = 1 uses the thermodynamic-limit series
/// b = -2 sum (-1)^r r^-alpha; d > 1 falls back to the finite-lattice zeroing.
inline double diagonal_shift_b(const LatticeSpec& spec) {
  if (spec.alpha == 0.0) return 1.0;
  if (spec.d == 1) return 2.0 * alternating_zeta(spec.alpha);
  return finite_size_shift(spec);
}

/// b(L) along a sequence of linear sizes, for convergence inspection.
inline std::vector<double> shift_sequence(LatticeSpec spec, const std::vector<int>& sizes) {
  std::vector<double> out;
  out.reserve(sizes.size());
  for (int L : sizes) {
    spec.L = L;
    spec.h.clear();
    out.push_back(finite_size_shift(spec));
  }
  return out;
}

/// Kac normalizer N_tilde = b + sum_{j != i} |r_ij|^-alpha.
inline double kac_normalizer(const LatticeSpec& spec, double b) {
  const auto profile = coupling_profile(spec, b);
  double acc = 0.0;
  for (std::size_t s = profile.size(); s-- > 1;) acc += profile[s];
  return acc + b;
}

enum class ShiftRule {
  finite_size,  ///< zero the smallest eigenvalue of this finite matrix
  series,       ///< use diagonal_shift_b (thermodynamic-limit value for d = 1)
};

struct CouplingOptions {
  std::size_t max_sites = 4096;
  ShiftRule shift = ShiftRule::finite_size;
};

inline CouplingMatrix build_coupling(const LatticeSpec& spec, const CouplingOptions& options = {}) {
  spec.validate();
  const std::size_t n = spec.sites();
  if (n < 2) throw ConfigError("build_coupling: need at least two sites");
  if (n > options.max_sites) {
    throw ResourceError("build_coupling: N = " + std::to_string(n) + " exceeds dense cap " +
                        std::to_string(options.max_sites));
  }
  CouplingMatrix out;
  out.spec = spec;
  out.b = options.shift == ShiftRule::series ? diagonal_shift_b(spec) : finite_size_shift(spec);
  out.N_tilde = kac_normalizer(spec, out.b);

  const auto profile = coupling_profile(spec, out.b);
  const double scale = spec.gamma / out.N_tilde;
  out.J.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = scale * profile[detail::displacement_index(i, j, spec)];
      out.J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      out.J(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return out;
}

/// Full matrix, row-major, one row per line.
inline void write_coupling_csv(const CouplingMatrix& c, std::ostream& os) {
  const auto old_precision = os.precision(17);
  for (Eigen::Index i = 0; i < c.J.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.J.cols(); ++j) {
      if (j) os << ',';
      os << c.J(i, j);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace lrsaddle
