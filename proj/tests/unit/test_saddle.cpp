#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "lrsaddle/saddle.hpp"

using namespace lrsaddle;

namespace {

LatticeSpec chain(int L, double alpha, double gamma = 1.0) {
  LatticeSpec s;
  s.L = L;
  s.alpha = alpha;
  s.gamma = gamma;
  return s;
}

std::shared_ptr<const SpectralData> modes(const LatticeSpec& s, TruncationPolicy policy = {}) {
  return std::make_shared<const SpectralData>(spectral_for(s, policy));
}

Vector random_ball(std::mt19937_64& rng, Eigen::Index m, double radius) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  Vector u(m);
  for (Eigen::Index k = 0; k < m; ++k) u(k) = normal(rng);
  return u * (radius * unit(rng) / u.norm());
}

}  // namespace

TEST(Phi, ZeroFieldOrigin) {
  const auto sp = modes(chain(20, 0.5));
  for (double beta : {0.3, 1.0, 7.0}) {
    SaddleProblem p(sp, beta, 1.3);
    const Vector u = Vector::Zero(sp->M);
    EXPECT_NEAR(phi(u, p), std::log(2.0 * std::cosh(0.5 * beta * 1.3)), 1e-14);
  }
  SaddleProblem hot(sp, 1e-9, 1.0);
  EXPECT_NEAR(phi(Vector::Zero(sp->M), hot), std::log(2.0), 1e-12);
}

TEST(Phi, MatchesSingleSpinTraces) {
  // trace over spins factorizes into 2x2 problems h_i = omega_z/2 s^z - x_i s^x
  const auto sp = modes(chain(8, 0.5, 0.8), {.target_M = 5});
  Vector h(8);
  h << 0.1, -0.05, 0.0, 0.2, 0.0, 0.0, -0.3, 0.01;
  const double beta = 1.7, wz = 0.9;
  SaddleProblem p(sp, beta, wz, h);
  std::mt19937_64 rng(7);
  for (int t = 0; t < 10; ++t) {
    const Vector u = random_ball(rng, sp->M, 1.6);
    const Vector x = 2.0 * sp->lambda * u + h;
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) {
      Eigen::Matrix2d hi;
      hi << 0.5 * wz, -x(i), -x(i), -0.5 * wz;
      const Eigen::Matrix2d rho = (-beta * hi).exp();
      acc += std::log(rho.trace());
    }
    const double expected = -beta * (sp->omega.array() * u.array().square()).sum() + acc / 8.0;
    EXPECT_NEAR(phi(u, p), expected, 1e-12);
  }
}

TEST(Phi, NoOverflowAtLargeArguments) {
  const auto sp = modes(chain(10, 0.5));
  SaddleProblem p(sp, 1e4, 1.0);
  Vector u = Vector::Zero(sp->M);
  u(0) = 50.0;
  EXPECT_TRUE(std::isfinite(phi(u, p)));
  EXPECT_TRUE(scaled_gradient(u, p).allFinite());
}

TEST(Phi, Z2Symmetry) {
  const auto sp = modes(chain(30, 0.3));
  SaddleProblem p(sp, 2.0, 1.0);
  for (double u0 : {0.1, 0.5, 1.7}) {
    Vector u = Vector::Zero(sp->M);
    u(0) = u0;
    EXPECT_DOUBLE_EQ(phi(u, p), phi(Vector(-u), p));
  }
}

TEST(Gradient, VanishesAtOriginAndOffZeroMode) {
  const auto sp = modes(chain(40, 0.5));
  SaddleProblem p(sp, 3.0, 1.0);
  Vector u = Vector::Zero(sp->M);
  EXPECT_LT(phi_gradient(u, p).cwiseAbs().maxCoeff(), 1e-15);
  u(0) = 0.4;
  const Vector g = phi_gradient(u, p);
  EXPECT_GT(std::abs(g(0)), 1e-3);
  EXPECT_LT(g.tail(g.size() - 1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gradient, MatchesCentralDifferences) {
  const double gamma = 1.2;
  const auto sp = modes(chain(50, 0.5, gamma), {.target_M = 9});
  std::mt19937_64 rng(2024);
  Vector h = Vector::Zero(50);
  h(3) = 0.05;
  for (double beta : {0.5, 4.0, kInfinity}) {
    SaddleProblem p(sp, beta, 1.0, h);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Vector u = random_ball(rng, sp->M, 2.0 * gamma);
      const Vector g = scaled_gradient(u, p);
      Vector fd(sp->M), probe = u;
      const double step = 1e-6;
      for (Eigen::Index k = 0; k < fd.size(); ++k) {
        probe(k) = u(k) + step;
        const double up = scaled_phi(probe, p);
        probe(k) = u(k) - step;
        const double down = scaled_phi(probe, p);
        probe(k) = u(k);
        fd(k) = (up - down) / (2.0 * step);
      }
      worst = std::max(worst, (g - fd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-3));
    }
    EXPECT_LT(worst, 1e-6) << "beta=" << beta;
  }
}

TEST(Hessian, AnalyticMatchesFiniteDifference) {
  const auto sp = modes(chain(30, 0.5), {.target_M = 7});
  SaddleProblem p(sp, 2.5, 1.0);
  std::mt19937_64 rng(11);
  for (int t = 0; t < 10; ++t) {
    const Vector u = random_ball(rng, sp->M, 1.5);
    const Matrix analytic = p.beta() * scaled_hessian(u, p);
    const Matrix fd = hessian_fd(u, p, 1e-5);
    EXPECT_LT((analytic - fd).cwiseAbs().maxCoeff(), 1e-6 * analytic.cwiseAbs().maxCoeff());
  }
}

TEST(Hessian, ClosedFormAlongZeroMode) {
  const auto sp = modes(chain(30, 0.0, 1.1));
  SaddleProblem p(sp, 3.0, 1.0);
  for (double u0 : {0.0, 0.3, 0.9}) {
    Vector u = Vector::Zero(1);
    u(0) = u0;
    const double fd = hessian_fd(u, p, 1e-5)(0, 0);
    EXPECT_NEAR(homogeneous_hessian(u0, 3.0, sp->omega(0), 1.0), fd, 1e-6 * std::abs(fd));
  }
}

TEST(SolveHomogeneous, ParamagnetBelowQuarter) {
  const auto sp = modes(chain(20, 0.5, 0.2));
  for (double beta : {0.5, 10.0, 1e3, kInfinity}) {
    SaddleProblem p(sp, beta, 1.0);
    const auto sol = solve_homogeneous(p);
    EXPECT_EQ(sol.u_bar.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(sol.is_maximum());
    EXPECT_EQ(sol.mode, SaddleMode::homogeneous);
  }
}

TEST(SolveHomogeneous, ZeroTemperatureClosedForm) {
  const auto sp = modes(chain(20, 0.5));
  SaddleProblem p(sp, kInfinity, 1.0);
  const auto sol = solve_homogeneous(p);
  EXPECT_NEAR(sol.u_bar(0), std::sqrt(1.0 - 1.0 / 16.0), 1e-14);
  EXPECT_NEAR(sol.u_bar(0), 0.9682, 1e-4);
  EXPECT_TRUE(sol.phi_scaled);
  EXPECT_TRUE(sol.is_maximum());

  // large finite beta approaches the same value; oracle is bisection on eps = 2 Gamma tanh(beta eps)
  SaddleProblem cold(sp, 40.0, 1.0);
  const double eps = bisect([](double e) { return e - 2.0 * std::tanh(40.0 * e); }, 0.5, 2.0, 1e-15);
  EXPECT_NEAR(solve_homogeneous(cold).u_bar(0), 0.25 * std::sqrt(4.0 * eps * eps - 1.0), 1e-12);
}

TEST(SolveHomogeneous, CriticalTemperature) {
  const auto sp = modes(chain(20, 0.5));
  const double beta_c = 2.0 * std::atanh(0.25);
  EXPECT_NEAR(beta_c, 0.5108, 1e-4);
  SaddleProblem below(sp, beta_c * (1.0 - 1e-6), 1.0);
  SaddleProblem above(sp, beta_c * (1.0 + 1e-3), 1.0);
  EXPECT_EQ(solve_homogeneous(below).u_bar(0), 0.0);
  EXPECT_GT(solve_homogeneous(above).u_bar(0), 1e-3);
}

TEST(SolveHomogeneous, UniformFieldPicksGlobalRoot) {
  const auto sp = modes(chain(20, 0.5));
  Vector h = Vector::Constant(20, -0.02);
  SaddleProblem p(sp, 5.0, 1.0, h);
  const auto sol = solve_homogeneous(p);
  EXPECT_LT(sol.u_bar(0), 0.0);  // aligned with the field
  EXPECT_TRUE(sol.is_maximum());
  EXPECT_LT(sol.gradient_norm, 1e-10);
  Vector h2 = h;
  h2(0) = 0.0;
  EXPECT_THROW(solve_homogeneous(p.with_field(h2)), ConfigError);
}

TEST(SolveMultivariate, AgreesWithHomogeneous) {
  const auto sp = modes(chain(100, 0.5));
  SaddleProblem p(sp, 10.0, 1.0);
  const auto multi = solve_multivariate(p);
  const auto hom = solve_homogeneous(p);
  EXPECT_LT((multi.u_bar - hom.u_bar).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(multi.u_bar.tail(multi.u_bar.size() - 1).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(multi.gradient_norm, 1e-10);
  EXPECT_TRUE(multi.is_maximum());
  EXPECT_LT(multi.hessian_eigs.maxCoeff(), 0.0);
}

TEST(SolveMultivariate, EscapesOriginBelowTc) {
  const auto sp = modes(chain(60, 0.3));
  SaddleProblem p(sp, 5.0, 1.0);
  const auto sol = solve_multivariate(p, Vector(Vector::Zero(sp->M)));
  EXPECT_GT(sol.u_bar(0), 0.5);
  EXPECT_TRUE(sol.is_maximum());
  EXPECT_NEAR(sol.u_bar(0), solve_homogeneous(p).u_bar(0), 1e-8);
}

TEST(SolveMultivariate, SingleSiteFieldGivesSmallDeviation) {
  const auto sp = modes(chain(100, 0.5));
  SaddleProblem p(sp, 10.0, 1.0);
  const auto base = solve_multivariate(p);
  Vector h = Vector::Zero(100);
  h(17) = 1e-4;
  const auto pert = solve_multivariate(p.with_field(h), base.u_bar);
  const double dev = (pert.u_bar - base.u_bar).cwiseAbs().maxCoeff();
  EXPECT_GT(dev, 1e-9);
  EXPECT_LT(dev, 1e-4);

  // linear in the perturbation
  h(17) = 2e-4;
  const auto pert2 = solve_multivariate(p.with_field(h), base.u_bar);
  const Vector d1 = pert.u_bar - base.u_bar, d2 = pert2.u_bar - base.u_bar;
  EXPECT_LT((d2 - 2.0 * d1).cwiseAbs().maxCoeff(), 1e-3 * d1.cwiseAbs().maxCoeff());
}

TEST(SolveMultivariate, ParamagnetFromDefaultStart) {
  const auto sp = modes(chain(50, 0.5, 0.2));
  SaddleProblem p(sp, 10.0, 1.0);
  const auto sol = solve_multivariate(p);
  EXPECT_LT(sol.u_bar.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(sol.is_maximum());
}

TEST(SolveMultivariate, RejectsBadInitialVector) {
  const auto sp = modes(chain(20, 0.5));
  SaddleProblem p(sp, 1.0, 1.0);
  EXPECT_THROW(solve_multivariate(p, Vector(Vector::Zero(sp->M + 1))), DomainError);
}

TEST(SolveMultivariate, GlobalMaximumIsHomogeneous) {
  const auto sp = modes(chain(100, 0.5));
  for (double beta : {1.0, 4.0}) {
    SaddleProblem p(sp, beta, 1.0);
    const auto maxima = multistart_maxima(p, 50, 2.0, 99);
    ASSERT_FALSE(maxima.empty());
    EXPECT_NEAR(maxima.front().phi_value, solve_homogeneous(p).phi_value, 1e-9);
  }
}

TEST(FreeEnergy, DecoupledLimit) {
  const auto sp = modes(chain(20, 0.5, 1e-7));
  for (double beta : {0.5, 3.0}) {
    SaddleProblem p(sp, beta, 1.0);
    const auto sol = solve_homogeneous(p);
    EXPECT_NEAR(free_energy_per_site(p, sol).leading, -std::log(2.0 * std::cosh(0.5 * beta)) / beta,
                1e-12);
  }
}

TEST(FreeEnergy, InfiniteTemperatureEntropy) {
  const auto sp = modes(chain(20, 0.5));
  const double beta = 1e-6;
  SaddleProblem p(sp, beta, 1.0);
  const auto sol = solve_homogeneous(p);
  EXPECT_NEAR(beta * free_energy_per_site(p, sol).leading, -std::log(2.0), 1e-9);
}

TEST(FreeEnergy, PartitionLogDecomposition) {
  const auto sp = modes(chain(40, 0.5));
  SaddleProblem p(sp, 2.0, 1.0);
  const auto sol = solve_homogeneous(p);
  const auto f = free_energy_per_site(p, sol);
  const double lnZ = partition_log(p, sol);
  EXPECT_NEAR(-lnZ / (2.0 * 40.0), f.total(), 1e-12);
  double prefactor = 0.0;
  for (Eigen::Index k = 0; k < sp->omega.size(); ++k) prefactor += std::log(40.0 / (M_PI * sp->omega(k)));
  EXPECT_NEAR(lnZ, 40.0 * sol.phi_value + 0.5 * prefactor, 1e-10);

  // the subleading piece vanishes per site
  auto fluctuation = [](int L) {
    SaddleProblem q(modes(chain(L, 0.0)), 2.0, 1.0);
    return free_energy_per_site(q, solve_homogeneous(q)).fluctuation;
  };
  EXPECT_LT(std::abs(fluctuation(400)), std::abs(fluctuation(40)));
  SaddleProblem cold(sp, kInfinity, 1.0);
  EXPECT_THROW(partition_log(cold, solve_homogeneous(cold)), DomainError);
}

TEST(SecondOrder, AllToAllScalesAsOneOverN) {
  auto correction = [](int L) {
    SaddleProblem p(modes(chain(L, 0.0)), 2.0, 1.0);
    const auto sol = solve_homogeneous(p);
    return std::pair{second_order_correction(p, sol).value, sol.hessian_eigs(0)};
  };
  const auto [c100, nu] = correction(100);
  const auto [c200, nu2] = correction(200);
  EXPECT_NEAR(c100, std::log(std::abs(nu)) / 100.0, 1e-14);
  EXPECT_NEAR(c200 / c100, 0.5, 1e-9);
  EXPECT_NEAR(nu, nu2, 1e-8);
}

TEST(SecondOrder, DoublingModesRoughlyDoubles) {
  const auto full = eigendecompose(build_coupling(chain(100, 0.5)));
  for (double beta : {2.0, 10.0}) {
    auto at = [&](std::size_t M) {
      auto sp = std::make_shared<const SpectralData>(truncate_modes(full, {.target_M = M}));
      SaddleProblem p(sp, beta, 1.0);
      return second_order_correction(p, solve_multivariate(p)).value;
    };
    for (auto [m1, m2] : {std::pair<std::size_t, std::size_t>{5, 11}, {11, 21}, {21, 41}}) {
      const double ratio = at(m2) / at(m1);
      EXPECT_GE(ratio, 1.5) << "M " << m1 << "->" << m2;
      EXPECT_LE(ratio, 3.0) << "M " << m1 << "->" << m2;
    }
  }
}

TEST(SecondOrder, FlagsDegenerateHessian) {
  SaddleSolution sol;
  sol.hessian_eigs = Vector::Zero(2);
  sol.hessian_eigs(0) = -1.0;
  SaddleProblem p(modes(chain(10, 0.5), {.target_M = 2}), 1.0, 1.0);
  EXPECT_TRUE(second_order_correction(p, sol).degenerate);
}

TEST(ModeConvergence, SweepStopsWhenFreeEnergySettles) {
  const auto full = eigendecompose(build_coupling(chain(100, 0.5)));
  const auto conv = converge_modes(full, 2.0, 1.0, Vector::Zero(100), {.target_M = 3});
  ASSERT_GE(conv.history.size(), 2u);
  const auto n = conv.history.size();
  EXPECT_LT(std::abs(conv.history[n - 1].second - conv.history[n - 2].second), 1e-10);
  EXPECT_EQ(conv.M, conv.history.back().first);
}

TEST(SaddleProblem, ValidatesInputs) {
  const auto sp = modes(chain(10, 0.5));
  EXPECT_THROW(SaddleProblem(sp, 0.0, 1.0), ConfigError);
  EXPECT_THROW(SaddleProblem(sp, 1.0, -1.0), ConfigError);
  EXPECT_THROW(SaddleProblem(sp, 1.0, 1.0, Vector::Zero(3)), ConfigError);
  auto untruncated = std::make_shared<const SpectralData>(eigendecompose(build_coupling(chain(10, 0.5))));
  EXPECT_THROW(SaddleProblem(untruncated, 1.0, 1.0), ConfigError);  // D_min = 0 gives no finite omega
}

TEST(SolveMultivariate, AcceptsStepsBelowRounding) {
  // final Newton steps here change phi by less than one ulp
  const auto sp = modes(chain(100, 0.5, 0.47));
  const auto sol = solve_multivariate(SaddleProblem(sp, 1.0, 1.0));
  EXPECT_LT(sol.u_bar.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(sol.is_maximum());
}
