#pragma once

// Eigendecomposition of the coupling matrix, J = Lambda D Lambda^T, and the
// retained-mode data (omega_k = 1/D_k, lambda_ik = sqrt(N) Lambda_ik) that the
// saddle-point solver works with.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lrsaddle/common.hpp"
#include "lrsaddle/lattice.hpp"

namespace lrsaddle {

struct SpectralData {
  Vector D;              ///< all N eigenvalues, descending
  std::size_t M = 0;     ///< retained modes
  Matrix lambda;         ///< N x M, sqrt(N) * eigenvectors
  Vector omega;          ///< M mode frequencies 1/D_k
  double trace_ratio = 0.0;
  double gamma = 0.0;

  std::size_t N() const { return static_cast<std::size_t>(D.size()); }

  /// Spectral data of factor * J. Eigenvectors are unchanged.
  SpectralData rescaled(double factor) const {
    if (!(factor > 0.0)) throw DomainError("SpectralData::rescaled: factor must be > 0");
    SpectralData out = *this;
    out.D *= factor;
    out.omega /= factor;
    out.trace_ratio *= factor;
    out.gamma *= factor;
    return out;
  }
};

struct TruncationPolicy {
  double delta = 1e-3;           ///< keep D_k > delta * gamma
  std::size_t target_M = 0;      ///< when nonzero, keep exactly this many (plus partners)
  double degeneracy_tol = 1e-9;  ///< relative to gamma
};

namespace detail {

inline void fix_eigenvector_signs(Matrix& V) {
  for (Eigen::Index k = 0; k < V.cols(); ++k) {
    const double sum = V.col(k).sum();
    double sign = 1.0;
    if (std::abs(sum) > 1e-8) {
      sign = sum < 0.0 ? -1.0 : 1.0;
    } else {
      for (Eigen::Index i = 0; i < V.rows(); ++i) {
        if (std::abs(V(i, k)) > 1e-12) {
          sign = V(i, k) < 0.0 ? -1.0 : 1.0;
          break;
        }
      }
    }
    if (sign < 0.0) V.col(k) *= -1.0;
  }
}

}  // namespace detail

/// Full decomposition (M = N). Eigenvalues sorted descending, eigenvector
/// signs fixed so that results do not depend on the eigensolver backend.
inline SpectralData eigendecompose(const CouplingMatrix& c) {
  const Eigen::Index n = c.J.rows();
  if (n == 0 || c.J.cols() != n) throw DomainError("eigendecompose: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(c.J);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecompose: eigensolver failed (N = " + std::to_string(n) +
                       ", max|J| = " + std::to_string(c.J.cwiseAbs().maxCoeff()) + ")");
  }
  // Eigen sorts ascending
  SpectralData out;
  out.D = solver.eigenvalues().reverse();
  Matrix V = solver.eigenvectors().rowwise().reverse();
  detail::fix_eigenvector_signs(V);

  const double scale = c.spec.gamma;
  const Matrix rebuilt = V * out.D.asDiagonal() * V.transpose();
  const double err = (rebuilt - c.J).cwiseAbs().maxCoeff();
  if (!(err <= 1e-9 * scale)) {
    const double cond = std::abs(out.D(0)) / std::max(std::abs(out.D(n - 1)), 1e-300);
    throw NumericError("eigendecompose: reconstruction error " + std::to_string(err) +
                       " exceeds 1e-9*gamma (|D_max/D_min| = " + std::to_string(cond) + ")");
  }

  out.M = static_cast<std::size_t>(n);
  out.lambda = std::sqrt(static_cast<double>(n)) * V;
  out.omega = out.D.cwiseInverse();
  out.trace_ratio = c.J.trace() / static_cast<double>(n);
  out.gamma = c.spec.gamma;
  return out;
}

/// Fourier-space eigenvalues D(q) = (gamma/N_tilde) sum_r Jt(r) cos(q.r) of
/// the translation-invariant coupling with diagonal parameter b.
inline std::vector<double> fourier_eigenvalues(const LatticeSpec& spec, double b) {
  const auto profile = coupling_profile(spec, b);
  const double n_tilde = kac_normalizer(spec, b);
  auto eig = profile_fourier(spec, profile);
  for (double& v : eig) v *= spec.gamma / n_tilde;
  return eig;
}

/// Keeps the leading modes. Degenerate partners of the last retained mode are
/// always kept together with it.
inline SpectralData truncate_modes(const SpectralData& s, const TruncationPolicy& policy = {}) {
  const std::size_t n = s.N();
  std::size_t m = 0;
  if (policy.target_M > 0) {
    m = std::min(policy.target_M, n);
  } else {
    while (m < n && s.D(static_cast<Eigen::Index>(m)) > policy.delta * s.gamma) ++m;
  }
  if (m == 0) {
    throw ConfigError("truncate_modes: policy retains no modes (delta = " +
                      std::to_string(policy.delta) + ")");
  }
  const double tol = policy.degeneracy_tol * s.gamma;
  while (m < n &&
         std::abs(s.D(static_cast<Eigen::Index>(m)) - s.D(static_cast<Eigen::Index>(m - 1))) <=
             tol) {
    ++m;
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (!(s.D(static_cast<Eigen::Index>(k)) > 0.0)) {
      throw ConfigError("truncate_modes: retained mode " + std::to_string(k) +
                        " has non-positive eigenvalue");
    }
  }
  SpectralData out;
  out.D = s.D;
  out.M = m;
  out.lambda = s.lambda.leftCols(static_cast<Eigen::Index>(m));
  out.omega = s.D.head(static_cast<Eigen::Index>(m)).cwiseInverse();
  out.trace_ratio = s.trace_ratio;
  out.gamma = s.gamma;
  return out;
}

/// Convenience: build, decompose and truncate in one go.
inline SpectralData spectral_for(const LatticeSpec& spec, const TruncationPolicy& policy = {},
                                 const CouplingOptions& options = {}) {
  return truncate_modes(eigendecompose(build_coupling(spec, options)), policy);
}

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

/// Equal-width histogram on [0, gamma]; values outside are clamped to the end bins.
inline std::vector<HistogramBin> eigen_histogram(const std::vector<double>& eig, double gamma,
                                                 std::size_t bins) {
  if (bins == 0) throw DomainError("eigen_histogram: need at least one bin");
  std::vector<HistogramBin> out(bins);
  const double width = gamma / static_cast<double>(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    out[k].low = width * static_cast<double>(k);
    out[k].high = width * static_cast<double>(k + 1);
  }
  for (double v : eig) {
    const double pos = std::floor(v / width);
    std::size_t k = pos <= 0.0 ? 0 : static_cast<std::size_t>(pos);
    if (k >= bins) k = bins - 1;
    ++out[k].count;
  }
  return out;
}

// Finite-size thresholds for the tractability verdict; the criterion itself
// is a limit statement, these are this library's choices.
inline constexpr double kTractableSlope = -0.05;
inline constexpr double kTractableRatio = 1e-3;

struct TractabilityRow {
  int L = 0;
  std::size_t N = 0;
  double b = 0.0;
  double N_tilde = 0.0;
  double trace_ratio = 0.0;  ///< Tr(J)/N = gamma * b / N_tilde
  std::vector<HistogramBin> histogram;
};

struct TractabilityReport {
  std::vector<TractabilityRow> rows;
  double slope = 0.0;  ///< d ln(trace_ratio) / d ln N
  bool tractable = false;
};

inline TractabilityReport tractability(const LatticeSpec& spec, const std::vector<int>& sizes,
                                       std::size_t bins = 20) {
  if (sizes.size() < 2) throw ConfigError("tractability: need at least two lattice sizes");
  for (std::size_t k = 1; k < sizes.size(); ++k) {
    if (sizes[k] <= sizes[k - 1]) throw ConfigError("tractability: sizes must be increasing");
  }
  TractabilityReport report;
  std::vector<double> log_n, log_ratio;
  for (int L : sizes) {
    LatticeSpec s = spec;
    s.L = L;
    s.h.clear();
    s.validate();
    TractabilityRow row;
    row.L = L;
    row.N = s.sites();
    row.b = finite_size_shift(s);
    row.N_tilde = kac_normalizer(s, row.b);
    row.trace_ratio = s.gamma * row.b / row.N_tilde;
    if (bins > 0) row.histogram = eigen_histogram(fourier_eigenvalues(s, row.b), s.gamma, bins);
    log_n.push_back(std::log(static_cast<double>(row.N)));
    log_ratio.push_back(std::log(row.trace_ratio));
    report.rows.push_back(std::move(row));
  }
  report.slope = fit_line(log_n, log_ratio).slope;
  const double last = report.rows.back().trace_ratio / spec.gamma;
  report.tractable = report.slope < kTractableSlope || last < kTractableRatio;
  return report;
}

}  // namespace lrsaddle
