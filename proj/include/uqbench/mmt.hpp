#ifndef UQBENCH_MMT_HPP
#define UQBENCH_MMT_HPP

#include <Eigen/Dense>

#include <cmath>
#include <algorithm>
#include <numbers>
#include <span>
#include <vector>

#include "uqbench/errors.hpp"
#include "uqbench/fft.hpp"
#include "uqbench/kl.hpp"

namespace uqbench::mmt {

/// Spectral sponge D(k) = -strength * ((|k| - k_c) / (k_max - k_c))^exponent
/// for |k| > k_c = cutoff_fraction * k_max, zero below.
struct DissipationSpec {
  double cutoff_fraction = 2.0 / 3.0;
  double strength = 10.0;
  double exponent = 8.0;
  friend bool operator==(const DissipationSpec&, const DissipationSpec&) = default;
};

/// i u_t = |d_x|^alpha_m u + lambda |d_x|^{-beta/4}( ||d_x|^{-beta/4} u|^2 |d_x|^{-beta/4} u ) + i D u
/// on the periodic unit interval.
struct MMTParams {
  double lambda = -4.0;
  double alpha_m = 0.5;
  double beta = 0.0;
  std::size_t grid_size = 512;
  double t_end = 50.0;
  double dt = 5e-3;
  DissipationSpec dissipation;

  void validate() const {
    if (grid_size < 8 || (grid_size & (grid_size - 1)) != 0)
      throw InvalidArgument("MMTParams: grid_size must be a power of two >= 8");
    if (!(dt > 0.0)) throw InvalidArgument("MMTParams: dt must be > 0");
    if (!(t_end >= 0.0)) throw InvalidArgument("MMTParams: t_end must be >= 0");
    if (!(alpha_m > 0.0)) throw InvalidArgument("MMTParams: alpha_m must be > 0");
    if (!(dissipation.strength >= 0.0)) throw InvalidArgument("MMTParams: dissipation strength must be >= 0");
    if (!(dissipation.cutoff_fraction >= 0.0 && dissipation.cutoff_fraction <= 1.0))
      throw InvalidArgument("MMTParams: cutoff_fraction must lie in [0, 1]");
  }

  friend bool operator==(const MMTParams&, const MMTParams&) = default;
};

/// max|u| above which a run is declared unstable.
inline constexpr double kBlowUpThreshold = 1e6;

struct ComplexField {
  Eigen::VectorXcd values;
  double time = 0.0;
};

/// Angular wavenumber 2 pi m of FFT bin i.
inline double angular_wavenumber(std::size_t i, std::size_t n) {
  return 2.0 * std::numbers::pi * static_cast<double>(signed_mode(i, n));
}

/// Fourier multiplier |k|^exponent; the k = 0 bin passes through only when
/// exponent == 0.
inline double fractional_symbol(double k, double exponent) {
  if (exponent == 0.0) return 1.0;
  if (k == 0.0) return 0.0;
  return std::pow(std::abs(k), exponent);
}

inline ComplexField apply_fractional_derivative(const ComplexField& field, double exponent) {
  const auto n = static_cast<std::size_t>(field.values.size());
  Fft fft(n);
  std::vector<complex> in(field.values.data(), field.values.data() + n);
  std::vector<complex> hat(n);
  fft.forward(in, hat);
  for (std::size_t i = 0; i < n; ++i) hat[i] *= fractional_symbol(angular_wavenumber(i, n), exponent);
  ComplexField out{Eigen::VectorXcd(static_cast<Eigen::Index>(n)), field.time};
  fft.inverse(hat, std::span<complex>(out.values.data(), n));
  return out;
}

inline double dissipation_symbol(double k, std::size_t n, const DissipationSpec& d) {
  const double k_max = std::numbers::pi * static_cast<double>(n);
  const double k_c = d.cutoff_fraction * k_max;
  const double ak = std::abs(k);
  if (ak <= k_c || d.strength == 0.0 || k_max <= k_c) return 0.0;
  return -d.strength * std::pow((ak - k_c) / (k_max - k_c), d.exponent);
}

/// Number of uniform steps used to reach t_end with step at most dt.
inline std::size_t step_count(const MMTParams& p) {
  if (p.t_end == 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(p.t_end / p.dt - 1e-9));
}

namespace detail {
// Plain complex product; skips the C99 Annex G NaN/Inf recovery of operator*.
inline complex cmul(complex a, complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}
}  // namespace detail

/// Fourth-order exponential time differencing Runge-Kutta integrator in
/// Fourier space. The linear part (dispersion + sponge) is integrated exactly;
/// phi-function coefficients are evaluated by a 16-point contour mean.
/// Holds its own FFT workspace; use one instance per thread.
class Integrator {
 public:
  static constexpr int kContourPoints = 16;

  Integrator(const MMTParams& params, double h) : p_(params), h_(h), n_(params.grid_size), fft_(params.grid_size) {
    p_.validate();
    if (!(h > 0.0)) throw InvalidArgument("Integrator: step must be > 0");
    for (auto* b : {&E_, &E2_, &Q_, &f1_, &f2_, &f3_, &g_, &phys_, &work_, &v_, &ev_, &a_, &b_, &c_, &Nv_, &Na_,
                    &Nb_, &Nc_})
      *b = AlignedBuffer(n_);
    smooth_.assign(n_, 1.0);
    const long keep = static_cast<long>(n_) / 3;
    const double nd = static_cast<double>(n_);
    // transforms are unnormalized: the cubic picks up a factor n^3
    const complex nl_factor = complex(0.0, -p_.lambda) / (nd * nd * nd);
    for (std::size_t i = 0; i < n_; ++i) {
      const double k = angular_wavenumber(i, n_);
      const complex L(dissipation_symbol(k, n_, p_.dissipation), -fractional_symbol(k, p_.alpha_m));
      const complex hl = h_ * L;
      E_[i] = std::exp(hl);
      E2_[i] = std::exp(hl / 2.0);
      complex q{}, a{}, b{}, c{};
      for (int j = 0; j < kContourPoints; ++j) {
        const double theta = std::numbers::pi * (static_cast<double>(j) + 0.5) * 2.0 / kContourPoints;
        const complex r = hl + std::exp(complex(0.0, theta));
        const complex er = std::exp(r);
        const complex r3 = r * r * r;
        q += (std::exp(r / 2.0) - 1.0) / r;
        a += (-4.0 - r + er * (4.0 - 3.0 * r + r * r)) / r3;
        b += (2.0 + r + er * (r - 2.0)) / r3;
        c += (-4.0 - 3.0 * r - r * r + er * (4.0 - r)) / r3;
      }
      const double w = h_ / kContourPoints;
      Q_[i] = q * w;
      f1_[i] = a * w;
      f2_[i] = b * w;
      f3_[i] = c * w;
      const double mask = std::abs(signed_mode(i, n_)) <= keep ? 1.0 : 0.0;
      // beta == 0 makes the smoothing operator the identity, k = 0 included
      if (p_.beta != 0.0) smooth_[i] = fractional_symbol(k, -p_.beta / 4.0);
      g_[i] = nl_factor * (smooth_[i] * mask);
    }
  }

  double step_size() const noexcept { return h_; }

  /// Advances `field` by one step in place.
  void step(ComplexField& field) { advance(field, 1); }

  /// Integrates `steps` steps in place. Throws BlowUp as soon as max|u| at
  /// the start of a step exceeds the threshold or turns non-finite.
  void advance(ComplexField& field, std::size_t steps) {
    if (static_cast<std::size_t>(field.values.size()) != n_)
      throw DimensionMismatch("Integrator field length", n_, static_cast<std::size_t>(field.values.size()));
    if (steps == 0) return;
    for (std::size_t i = 0; i < n_; ++i) phys_[i] = field.values[static_cast<Eigen::Index>(i)];
    fft_.forward_raw(phys_.data(), v_.data());
    for (std::size_t s = 0; s < steps; ++s) {
      step_spectral(field.time);
      field.time += h_;
    }
    fft_.backward_raw(v_.data(), phys_.data());
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) field.values[static_cast<Eigen::Index>(i)] = phys_[i] * inv_n;
    const double amp = field.values.cwiseAbs().maxCoeff();
    if (!std::isfinite(amp) || amp > kBlowUpThreshold) throw BlowUp(field.time, amp);
  }

 private:
  // out = dealias(-i lambda S(|S u|^2 S u)); returns max|u| when requested.
  double nonlinear(const AlignedBuffer& hat, AlignedBuffer& out, bool want_amplitude) {
    using detail::cmul;
    const complex* src = hat.data();
    if (p_.beta != 0.0) {
      for (std::size_t i = 0; i < n_; ++i) work_[i] = hat[i] * smooth_[i];
      src = work_.data();
    }
    fft_.backward_raw(src, phys_.data());
    double peak = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double a2 = std::norm(phys_[i]);
      peak = std::max(peak, a2);
      phys_[i] *= a2;
    }
    fft_.forward_raw(phys_.data(), out.data());
    for (std::size_t i = 0; i < n_; ++i) out[i] = cmul(out[i], g_[i]);
    if (!want_amplitude) return 0.0;
    return std::sqrt(peak) / static_cast<double>(n_);
  }

  void step_spectral(double t) {
    using detail::cmul;
    if (p_.lambda == 0.0) {
      for (std::size_t i = 0; i < n_; ++i) v_[i] = cmul(v_[i], E_[i]);
      return;
    }
    const double amp = nonlinear(v_, Nv_, true);
    if (!std::isfinite(amp) || amp > kBlowUpThreshold) throw BlowUp(t, amp);
    for (std::size_t i = 0; i < n_; ++i) {
      ev_[i] = cmul(E2_[i], v_[i]);
      a_[i] = ev_[i] + cmul(Q_[i], Nv_[i]);
    }
    nonlinear(a_, Na_, false);
    for (std::size_t i = 0; i < n_; ++i) b_[i] = ev_[i] + cmul(Q_[i], Na_[i]);
    nonlinear(b_, Nb_, false);
    for (std::size_t i = 0; i < n_; ++i) c_[i] = cmul(E2_[i], a_[i]) + cmul(Q_[i], 2.0 * Nb_[i] - Nv_[i]);
    nonlinear(c_, Nc_, false);
    for (std::size_t i = 0; i < n_; ++i)
      v_[i] = cmul(E_[i], v_[i]) + cmul(Nv_[i], f1_[i]) + cmul(Na_[i] + Nb_[i], 2.0 * f2_[i]) + cmul(Nc_[i], f3_[i]);
  }

  MMTParams p_;
  double h_;
  std::size_t n_;
  Fft fft_;
  AlignedBuffer E_, E2_, Q_, f1_, f2_, f3_, g_;
  std::vector<double> smooth_;
  AlignedBuffer phys_, work_, v_, ev_, a_, b_, c_, Nv_, Na_, Nb_, Nc_;
};

/// Advances `field` by exactly one step of size params.dt.
inline ComplexField step(const ComplexField& field, const MMTParams& params) {
  if (static_cast<std::size_t>(field.values.size()) != params.grid_size)
    throw DimensionMismatch("mmt::step field length", params.grid_size, static_cast<std::size_t>(field.values.size()));
  Integrator integ(params, params.dt);
  ComplexField out = field;
  integ.step(out);
  return out;
}

/// Integrates from `initial` to params.t_end (relative to initial.time).
inline ComplexField integrate(ComplexField initial, const MMTParams& params) {
  params.validate();
  if (static_cast<std::size_t>(initial.values.size()) != params.grid_size)
    throw DimensionMismatch("mmt::integrate field length", params.grid_size,
                            static_cast<std::size_t>(initial.values.size()));
  const auto steps = step_count(params);
  if (steps == 0) return initial;
  Integrator integ(params, params.t_end / static_cast<double>(steps));
  integ.advance(initial, steps);
  return initial;
}

/// max_x |Re u(x)|.
inline double extreme_real_amplitude(const Eigen::VectorXcd& u) { return u.real().cwiseAbs().maxCoeff(); }

struct SimulationResult {
  ComplexField initial;
  ComplexField final_field;
  double output = 0.0;
};

/// Synthesizes the KL initial condition for `alpha`, integrates to t_end and
/// evaluates y = ||Re u(., t_end)||_inf.
inline SimulationResult simulate(const Eigen::Ref<const Eigen::VectorXd>& alpha, const kl::KLBasis& basis,
                                 const MMTParams& params) {
  if (basis.grid_size() != params.grid_size)
    throw DimensionMismatch("simulate: basis grid vs solver grid", params.grid_size, basis.grid_size());
  SimulationResult r;
  r.initial = ComplexField{kl::synthesize_field(basis, alpha), 0.0};
  r.final_field = integrate(r.initial, params);
  r.output = extreme_real_amplitude(r.final_field.values);
  return r;
}

}  // namespace uqbench::mmt

#endif  // UQBENCH_MMT_HPP
