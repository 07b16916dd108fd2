#ifndef UQBENCH_KL_HPP
#define UQBENCH_KL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "uqbench/errors.hpp"
#include "uqbench/fft.hpp"
#include "uqbench/random.hpp"

namespace uqbench::kl {

/// Parameters of the stationary complex periodic autocorrelation kernel
///   k(x, x') = s2 * exp(2i sin^2(pi d)) * exp(-2 sin^2(pi d) / l^2),  d = x - x'
/// on the unit interval sampled at `grid_size` points.
struct KernelSpec {
  double sigma_u_sq = 1.0;
  double l_u = 0.35;
  std::size_t grid_size = 512;

  void validate() const {
    if (!(sigma_u_sq > 0.0)) throw InvalidArgument("KernelSpec: sigma_u_sq must be > 0");
    if (!(l_u > 0.0)) throw InvalidArgument("KernelSpec: l_u must be > 0");
    if (grid_size < 8 || (grid_size & (grid_size - 1)) != 0)
      throw InvalidArgument("KernelSpec: grid_size must be a power of two >= 8");
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Kernel value at lag `d` (in units of the domain length).
inline complex kernel_at_lag(const KernelSpec& spec, double d) {
  const double s = std::sin(std::numbers::pi * d);
  const double s2 = s * s;
  return spec.sigma_u_sq * std::exp(complex(0.0, 2.0 * s2)) * std::exp(-2.0 * s2 / (spec.l_u * spec.l_u));
}

/// k(x_j, 0) for x_j = j / grid_size.
inline Eigen::VectorXcd build_kernel_row(const KernelSpec& spec) {
  spec.validate();
  const auto n = spec.grid_size;
  Eigen::VectorXcd row(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    row[static_cast<Eigen::Index>(j)] = kernel_at_lag(spec, static_cast<double>(j) / static_cast<double>(n));
  return row;
}

enum class ModeType : std::uint8_t { cosine = 0, sine = 1 };

/// Identifies a real Fourier mode: sqrt(2) cos(2 pi q x) or sqrt(2) sin(2 pi q x)
/// (q = 0 and q = n/2 have only the cosine member, with unit amplitude).
struct ModeId {
  long wavenumber = 0;
  ModeType type = ModeType::cosine;
  friend bool operator==(const ModeId&, const ModeId&) = default;
};

inline Eigen::VectorXcd fourier_mode(ModeId id, std::size_t n) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
  const bool edge = id.wavenumber == 0 || 2 * static_cast<std::size_t>(id.wavenumber) == n;
  const double amp = edge ? 1.0 : std::numbers::sqrt2;
  for (std::size_t j = 0; j < n; ++j) {
    // reduce the phase argument exactly in integers before scaling
    const auto r = (static_cast<std::size_t>(id.wavenumber) * j) % n;
    const double arg = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(n);
    v[static_cast<Eigen::Index>(j)] = amp * (id.type == ModeType::cosine ? std::cos(arg) : std::sin(arg));
  }
  return v;
}

/// Truncated Karhunen-Loeve basis. Eigenvalues are sorted descending; every mode
/// has unit norm under <f, g> = (1/n) sum_x f(x) conj(g(x)).
class KLBasis {
 public:
  KLBasis() = default;
  KLBasis(KernelSpec spec, std::vector<double> eigenvalues, std::vector<ModeId> ids)
      : spec_(spec), eigenvalues_(std::move(eigenvalues)), ids_(std::move(ids)) {
    modes_.reserve(ids_.size());
    for (const auto& id : ids_) modes_.push_back(fourier_mode(id, spec_.grid_size));
  }

  const KernelSpec& spec() const noexcept { return spec_; }
  std::size_t m() const noexcept { return eigenvalues_.size(); }
  std::size_t grid_size() const noexcept { return spec_.grid_size; }
  const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }
  const std::vector<ModeId>& mode_ids() const noexcept { return ids_; }
  const std::vector<Eigen::VectorXcd>& modes() const noexcept { return modes_; }
  const Eigen::VectorXcd& mode(std::size_t j) const { return modes_.at(j); }

  /// Spectrum over the 2m real coordinates (real and imaginary coefficient
  /// of each complex mode carry the same variance), descending.
  std::vector<double> real_spectrum() const {
    std::vector<double> out;
    out.reserve(2 * eigenvalues_.size());
    for (double v : eigenvalues_) {
      out.push_back(v);
      out.push_back(v);
    }
    return out;
  }

  /// Discrete inner products c_j = <u, phi_j>.
  Eigen::VectorXcd project(const Eigen::VectorXcd& u) const {
    if (static_cast<std::size_t>(u.size()) != grid_size())
      throw DimensionMismatch("KLBasis::project field length", grid_size(), static_cast<std::size_t>(u.size()));
    Eigen::VectorXcd c(static_cast<Eigen::Index>(m()));
    const double inv_n = 1.0 / static_cast<double>(grid_size());
    for (std::size_t j = 0; j < m(); ++j) c[static_cast<Eigen::Index>(j)] = modes_[j].dot(u) * inv_n;
    return c;
  }

 private:
  KernelSpec spec_;
  std::vector<double> eigenvalues_;
  std::vector<ModeId> ids_;
  std::vector<Eigen::VectorXcd> modes_;
};

/// Eigenvalues below -negative_tolerance(spec) are treated as a construction bug.
inline double negative_tolerance(const KernelSpec& spec) { return 1e-9 * spec.sigma_u_sq; }

/// Spectrum of the Hermitian part of the circulant operator with first
/// column `row`, indexed by wavenumber q = 0..n/2, before clamping.
inline std::vector<double> hermitian_spectrum_of_row(const Eigen::VectorXcd& row) {
  const auto n = static_cast<std::size_t>(row.size());
  Fft fft(n);
  std::vector<complex> in(row.data(), row.data() + row.size());
  std::vector<complex> hat(n);
  fft.forward(in, hat);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> by_q(n / 2 + 1);
  for (std::size_t q = 0; q <= n / 2; ++q) {
    // average the +q/-q bins so cosine and sine members tie exactly
    const auto qm = (n - q) % n;
    by_q[q] = 0.5 * (hat[q].real() + hat[qm].real()) * inv_n;
  }
  return by_q;
}

inline std::vector<double> hermitian_spectrum_by_wavenumber(const KernelSpec& spec) {
  return hermitian_spectrum_of_row(build_kernel_row(spec));
}

/// KL decomposition of the stationary periodic kernel. Eigenmodes are real
/// Fourier modes; eigenvalues are the Fourier coefficients of the Hermitian
/// part of the kernel row. Returns the `m` largest; ties are ordered by
/// ascending wavenumber, cosine before sine.
/// The `row` overload decomposes an explicitly supplied kernel row sampled on
/// spec's grid.
inline KLBasis eigendecompose(const KernelSpec& spec, const Eigen::VectorXcd& row, std::size_t m) {
  spec.validate();
  const auto n = spec.grid_size;
  if (static_cast<std::size_t>(row.size()) != n)
    throw DimensionMismatch("eigendecompose kernel row", n, static_cast<std::size_t>(row.size()));
  if (m < 1 || m > n) throw InvalidArgument("eigendecompose: need 1 <= m <= grid_size");
  const auto by_q = hermitian_spectrum_of_row(row);

  struct Entry {
    double value;
    ModeId id;
  };
  std::vector<Entry> all;
  all.reserve(n);
  const double tol = negative_tolerance(spec);
  for (std::size_t q = 0; q <= n / 2; ++q) {
    double v = by_q[q];
    if (v < -tol)
      throw NonHermitianKernel("eigendecompose: eigenvalue " + std::to_string(v) + " at wavenumber " +
                               std::to_string(q));
    v = std::max(v, 0.0);
    all.push_back({v, {static_cast<long>(q), ModeType::cosine}});
    if (q != 0 && q != n / 2) all.push_back({v, {static_cast<long>(q), ModeType::sine}});
  }
  std::stable_sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.id.wavenumber != b.id.wavenumber) return a.id.wavenumber < b.id.wavenumber;
    return a.id.type < b.id.type;
  });

  std::vector<double> values;
  std::vector<ModeId> ids;
  values.reserve(m);
  ids.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    values.push_back(all[j].value);
    ids.push_back(all[j].id);
  }
  return KLBasis(spec, std::move(values), std::move(ids));
}

inline KLBasis eigendecompose(const KernelSpec& spec, std::size_t m) {
  return eigendecompose(spec, build_kernel_row(spec), m);
}

/// Latin-hypercube sample of `n` points in [-z_star, z_star]^dim. Row i is one
/// point. Every column visits each of the n equal-width strata exactly once;
/// the position within a stratum is uniform.
inline Eigen::MatrixXd sample_lhs(std::size_t dim, std::size_t n, double z_star, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_lhs: n must be >= 1");
  if (!(z_star > 0.0)) throw InvalidArgument("sample_lhs: z_star must be > 0");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const double width = 2.0 * z_star / static_cast<double>(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t c = 0; c < dim; ++c) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      double v = -z_star + (static_cast<double>(perm[i]) + unit(rng)) * width;
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::clamp(v, -z_star, z_star);
    }
  }
  return out;
}

inline Eigen::MatrixXd sample_lhs(const KLBasis& basis, std::size_t n, double z_star, std::uint64_t seed) {
  return sample_lhs(2 * basis.m(), n, z_star, seed);
}

/// Stratum index of `value` for an n-point LHS over [-z_star, z_star].
inline std::size_t lhs_stratum(double value, std::size_t n, double z_star) {
  const double t = (value + z_star) / (2.0 * z_star) * static_cast<double>(n);
  const auto s = static_cast<long>(std::floor(t));
  return static_cast<std::size_t>(std::clamp(s, 0L, static_cast<long>(n) - 1));
}

/// u(x) = sum_j (alpha_j + i alpha_{m+j}) sqrt(lambda_j) phi_j(x).
inline Eigen::VectorXcd synthesize_field(const KLBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& alpha) {
  const auto m = basis.m();
  if (static_cast<std::size_t>(alpha.size()) != 2 * m)
    throw DimensionMismatch("synthesize_field alpha length", 2 * m, static_cast<std::size_t>(alpha.size()));
  Eigen::VectorXcd u = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.grid_size()));
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const complex c(alpha[jj], alpha[jj + static_cast<Eigen::Index>(m)]);
    if (c == complex(0.0, 0.0)) continue;
    u += (c * std::sqrt(basis.eigenvalues()[j])) * basis.mode(j);
  }
  return u;
}

}  // namespace uqbench::kl

#endif  // UQBENCH_KL_HPP
