#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "uqbench/kl.hpp"
#include "uqbench/mmt.hpp"

using namespace uqbench;
using namespace uqbench::mmt;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXcd plane_wave(std::size_t n, long m, complex amp = {1.0, 0.0}) {
  Eigen::VectorXcd u(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    u[static_cast<Eigen::Index>(j)] = amp * std::exp(complex(0.0, 2.0 * kPi * static_cast<double>(m) * static_cast<double>(j) / static_cast<double>(n)));
  return u;
}

Eigen::VectorXcd smooth_field(std::size_t n, double amp) {
  return amp * (plane_wave(n, 0) + 0.5 * plane_wave(n, 1) + 0.3 * plane_wave(n, -2));
}

MMTParams linear_params(std::size_t n = 64) {
  MMTParams p;
  p.lambda = 0.0;
  p.grid_size = n;
  p.dissipation.strength = 0.0;
  return p;
}

double energy(const Eigen::VectorXcd& u) { return u.squaredNorm() / static_cast<double>(u.size()); }

// Classical RK4 on dz/dt = -i lambda |z|^2 z.
complex scalar_rk4(complex z, double lambda, double t_end, std::size_t steps) {
  const double h = t_end / static_cast<double>(steps);
  auto f = [lambda](complex w) { return complex(0.0, -lambda) * std::norm(w) * w; };
  for (std::size_t s = 0; s < steps; ++s) {
    const complex k1 = f(z);
    const complex k2 = f(z + 0.5 * h * k1);
    const complex k3 = f(z + 0.5 * h * k2);
    const complex k4 = f(z + h * k3);
    z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return z;
}

}  // namespace

TEST(FractionalDerivative, ZeroExponentIsIdentity) {
  const ComplexField f{smooth_field(64, 1.3), 0.0};
  const auto g = apply_fractional_derivative(f, 0.0);
  EXPECT_LT((g.values - f.values).norm(), 1e-13);
}

TEST(FractionalDerivative, SingleModeScaling) {
  for (long m : {1L, -3L, 7L}) {
    const ComplexField f{plane_wave(128, m), 0.0};
    const auto g = apply_fractional_derivative(f, 0.5);
    const double factor = std::sqrt(2.0 * kPi * static_cast<double>(std::abs(m)));
    EXPECT_LT((g.values - factor * f.values).norm(), 1e-12 * factor * f.values.norm()) << m;
  }
}

TEST(FractionalDerivative, ConstantIsAnnihilated) {
  const ComplexField f{plane_wave(64, 0, {2.0, -1.0}), 0.0};
  EXPECT_LT(apply_fractional_derivative(f, 0.5).values.norm(), 1e-13);
  EXPECT_LT(apply_fractional_derivative(f, -0.25).values.norm(), 1e-13);
}

TEST(Symbols, DissipationOnlyAboveCutoff) {
  const DissipationSpec d;
  const std::size_t n = 512;
  const double k_max = kPi * static_cast<double>(n);
  EXPECT_EQ(dissipation_symbol(0.0, n, d), 0.0);
  EXPECT_EQ(dissipation_symbol(0.6 * k_max, n, d), 0.0);
  EXPECT_LT(dissipation_symbol(0.9 * k_max, n, d), 0.0);
  EXPECT_DOUBLE_EQ(dissipation_symbol(k_max, n, d), -d.strength);
  EXPECT_EQ(dissipation_symbol(k_max, n, {2.0 / 3.0, 0.0, 8.0}), 0.0);
}

TEST(Params, Validation) {
  MMTParams p;
  EXPECT_NO_THROW(p.validate());
  auto bad = p;
  bad.dt = 0.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.grid_size = 100;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.alpha_m = 0.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.t_end = -1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.dissipation.strength = -1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Step, ZeroFieldIsFixedPoint) {
  MMTParams p;
  p.grid_size = 64;
  const auto out = step({Eigen::VectorXcd::Zero(64), 0.0}, p);
  EXPECT_EQ(out.values, Eigen::VectorXcd::Zero(64));
  EXPECT_DOUBLE_EQ(out.time, p.dt);
}

TEST(Step, LinearSingleModeOneStep) {
  auto p = linear_params();
  const ComplexField f{plane_wave(64, 1), 0.0};
  const auto g = step(f, p);
  const double phase = -std::pow(2.0 * kPi, p.alpha_m) * p.dt;
  for (Eigen::Index j = 0; j < 64; ++j) {
    EXPECT_NEAR(std::abs(g.values[j]), 1.0, 1e-10);
    EXPECT_NEAR(std::arg(g.values[j] / f.values[j]), phase, 1e-8);
  }
}

TEST(Step, RejectsWrongLength) {
  EXPECT_THROW(step({Eigen::VectorXcd::Zero(32), 0.0}, linear_params(64)), DimensionMismatch);
}

TEST(Integrate, LinearModeOverUnitTime) {
  auto p = linear_params();
  p.t_end = 1.0;
  const ComplexField f{plane_wave(64, 3, {0.7, 0.2}), 0.0};
  const auto g = integrate(f, p);
  const complex rot = std::exp(complex(0.0, -std::pow(6.0 * kPi, p.alpha_m)));
  EXPECT_LT((g.values - rot * f.values).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(g.time, 1.0, 1e-12);
}

TEST(Integrate, LinearEnergyConserved) {
  auto p = linear_params(256);
  p.t_end = 1.0;
  const Eigen::VectorXcd u0 = smooth_field(256, 2.0) + 0.1 * plane_wave(256, 40);
  const auto u1 = integrate({u0, 0.0}, p).values;
  EXPECT_NEAR(energy(u1), energy(u0), 1e-8 * energy(u0));
}

TEST(Integrate, LinearMatchesPerModeRotation) {
  auto p = linear_params(128);
  p.t_end = 0.73;
  p.alpha_m = 0.8;
  Eigen::VectorXcd u0 = Eigen::VectorXcd::Zero(128);
  Eigen::VectorXcd expect = Eigen::VectorXcd::Zero(128);
  for (long m : {0L, 1L, -2L, 5L, 17L}) {
    const complex a(0.3 * static_cast<double>(m) + 0.5, 0.1);
    u0 += plane_wave(128, m, a);
    expect += plane_wave(128, m, a * std::exp(complex(0.0, -std::pow(2.0 * kPi * std::abs(m), 0.8) * 0.73)));
  }
  const auto g = integrate({u0, 0.0}, p);
  EXPECT_LT((g.values - expect).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(extreme_real_amplitude(g.values), extreme_real_amplitude(expect), 1e-10);
}

TEST(Integrate, DissipationNeverAddsEnergy) {
  auto p = linear_params(128);
  p.dissipation.strength = 10.0;
  Eigen::VectorXcd u = smooth_field(128, 1.0);
  for (long m = 30; m < 64; m += 3) u += plane_wave(128, m, {0.2, 0.1});
  Integrator integ(p, p.dt);
  ComplexField f{u, 0.0};
  double e = energy(f.values);
  for (int s = 0; s < 200; ++s) {
    integ.step(f);
    const double e2 = energy(f.values);
    EXPECT_LE(e2, e * (1.0 + 1e-12));
    e = e2;
  }
  EXPECT_LT(e, energy(u));
}

TEST(Integrate, ConstantFieldFollowsScalarOde) {
  MMTParams p;
  p.grid_size = 64;
  p.t_end = 1.0;
  p.dissipation.strength = 0.0;
  const complex u0(0.6, -0.3);
  const auto g = integrate({plane_wave(64, 0, u0), 0.0}, p);
  const complex closed = u0 * std::exp(complex(0.0, -p.lambda * std::norm(u0) * p.t_end));
  const complex ode = scalar_rk4(u0, p.lambda, p.t_end, 20000);
  EXPECT_NEAR(std::abs(ode - closed), 0.0, 1e-10);
  for (Eigen::Index j = 0; j < 64; ++j) EXPECT_NEAR(std::abs(g.values[j] - ode), 0.0, 1e-6);
}

TEST(Integrate, ConvergesAtFourthOrder) {
  MMTParams p;
  p.grid_size = 64;
  p.t_end = 1.0;
  p.dissipation.strength = 0.0;
  const auto u0 = smooth_field(64, 0.5);
  std::vector<Eigen::VectorXcd> r;
  for (double dt : {0.02, 0.01, 0.005}) {
    p.dt = dt;
    r.push_back(integrate({u0, 0.0}, p).values);
  }
  const double order = std::log2((r[0] - r[1]).norm() / (r[1] - r[2]).norm());
  EXPECT_GE(order, 3.5);
}

TEST(Integrate, GridRefinementConsistent) {
  auto run = [](std::size_t n) {
    MMTParams p;
    p.grid_size = n;
    p.t_end = 1.0;
    // weak enough that no focusing event outruns the coarse grid
    return extreme_real_amplitude(integrate({smooth_field(n, 0.2), 0.0}, p).values);
  };
  const double a = run(256), b = run(512);
  EXPECT_NEAR(a, b, 1e-3 * b);
}

TEST(Integrate, ZeroHorizonReturnsInput) {
  MMTParams p;
  p.grid_size = 64;
  p.t_end = 0.0;
  const auto u = smooth_field(64, 1.0);
  EXPECT_EQ(integrate({u, 0.0}, p).values, u);
}

TEST(Integrate, StepCountCoversHorizon) {
  MMTParams p;
  EXPECT_EQ(step_count(p), 10000u);
  p.t_end = 1.0;
  p.dt = 0.3;
  EXPECT_EQ(step_count(p), 4u);
  p.t_end = 0.0;
  EXPECT_EQ(step_count(p), 0u);
}

TEST(Integrate, BlowUpIsReported) {
  MMTParams p;
  p.grid_size = 64;
  p.t_end = 1.0;
  try {
    integrate({plane_wave(64, 0, {2e6, 0.0}), 0.0}, p);
    FAIL() << "expected BlowUp";
  } catch (const BlowUp& e) {
    EXPECT_GT(e.amplitude(), kBlowUpThreshold);
    EXPECT_GE(e.time(), 0.0);
    EXPECT_LE(e.time(), p.t_end);
  }
  Eigen::VectorXcd bad = smooth_field(64, 1.0);
  bad[3] = complex(std::nan(""), 0.0);
  EXPECT_THROW(integrate({bad, 0.0}, p), BlowUp);
}

TEST(Simulate, ZeroCoefficientsGiveZeroOutput) {
  MMTParams p;
  p.grid_size = 64;
  p.t_end = 1.0;
  const auto b = kl::eigendecompose({1.0, 0.35, 64}, 2);
  EXPECT_EQ(simulate(Eigen::VectorXd::Zero(4), b, p).output, 0.0);
}

TEST(Simulate, LinearOutputMatchesClosedForm) {
  auto p = linear_params(128);
  p.t_end = 0.5;
  const auto b = kl::eigendecompose({1.0, 0.35, 128}, 3);
  Eigen::VectorXd a(6);
  a << 1.0, -0.5, 2.0, 0.3, 0.0, -1.2;
  const auto r = simulate(a, b, p);
  // Evolve each Fourier component of the initial field analytically.
  const auto u0 = kl::synthesize_field(b, a);
  Eigen::VectorXcd expect = Eigen::VectorXcd::Zero(128);
  for (long m = -64; m < 64; ++m) {
    const complex c = plane_wave(128, m).dot(u0) / 128.0;
    if (std::abs(c) < 1e-15) continue;
    expect += plane_wave(128, m, c * std::exp(complex(0.0, -std::pow(2.0 * kPi * std::abs(m), p.alpha_m) * p.t_end)));
  }
  EXPECT_NEAR(r.output, extreme_real_amplitude(expect), 1e-10);
}

TEST(Simulate, DeterministicBitForBit) {
  MMTParams p;
  p.grid_size = 128;
  p.t_end = 2.0;
  const auto b = kl::eigendecompose({1.0, 0.35, 128}, 2);
  Eigen::VectorXd a(4);
  a << 3.0, -2.0, 1.0, 4.5;
  EXPECT_EQ(simulate(a, b, p).output, simulate(a, b, p).output);
}

TEST(Simulate, GridMismatchRejected) {
  MMTParams p;
  p.grid_size = 64;
  const auto b = kl::eigendecompose({1.0, 0.35, 128}, 1);
  EXPECT_THROW(simulate(Eigen::VectorXd::Zero(2), b, p), DimensionMismatch);
}
