#ifndef UQBENCH_GP_HPP
#define UQBENCH_GP_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "uqbench/adam.hpp"
#include "uqbench/errors.hpp"
#include "uqbench/posterior.hpp"
#include "uqbench/random.hpp"

namespace uqbench::gp {

/// Squared-exponential ARD kernel parameters plus homoskedastic noise.
struct GPHyperparams {
  double theta_sigma = 1.0;
  Eigen::VectorXd theta;  // one length scale per input dimension
  double sigma_n = 1e-2;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(theta.size()); }

  void validate() const {
    if (!(theta_sigma > 0.0) || !(sigma_n > 0.0) || theta.size() == 0 || !(theta.array() > 0.0).all())
      throw InvalidArgument("GPHyperparams: all hyperparameters must be strictly positive");
  }

  /// Packed as [log theta_sigma, log theta_1..d, log sigma_n].
  Eigen::VectorXd to_log() const {
    Eigen::VectorXd v(theta.size() + 2);
    v[0] = std::log(theta_sigma);
    v.segment(1, theta.size()) = theta.array().log().matrix();
    v[v.size() - 1] = std::log(sigma_n);
    return v;
  }

  static GPHyperparams from_log(const Eigen::VectorXd& v) {
    GPHyperparams h;
    h.theta_sigma = std::exp(v[0]);
    h.theta = v.segment(1, v.size() - 2).array().exp().matrix();
    h.sigma_n = std::exp(v[v.size() - 1]);
    return h;
  }
};

inline double kernel(const Eigen::Ref<const Eigen::VectorXd>& a1, const Eigen::Ref<const Eigen::VectorXd>& a2,
                     const GPHyperparams& hp) {
  if (a1.size() != hp.theta.size() || a2.size() != hp.theta.size())
    throw DimensionMismatch("gp::kernel input dimension", hp.dim(), static_cast<std::size_t>(a1.size()));
  const double r2 = ((a1 - a2).array() / hp.theta.array()).square().sum();
  return hp.theta_sigma * std::exp(-0.5 * r2);
}

/// Cross-covariance between the rows of A and the rows of B.
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GPHyperparams& hp) {
  if (A.cols() != hp.theta.size() || B.cols() != hp.theta.size())
    throw DimensionMismatch("gp::kernel_matrix input dimension", hp.dim(), static_cast<std::size_t>(A.cols()));
  const Eigen::ArrayXd inv = hp.theta.array().inverse();
  const Eigen::MatrixXd As = A * inv.matrix().asDiagonal();
  const Eigen::MatrixXd Bs = B * inv.matrix().asDiagonal();
  const Eigen::VectorXd an = As.rowwise().squaredNorm();
  const Eigen::VectorXd bn = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd r2 = (-2.0 * As * Bs.transpose()).colwise() + an;
  r2.rowwise() += bn.transpose();
  return hp.theta_sigma * (-0.5 * r2.array().max(0.0)).exp().matrix();
}

/// Additive diagonal jitter ladder tried when (K + sigma_n^2 I) is not
/// numerically positive definite.
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-6;

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

/// Cholesky of (K + sigma_n^2 I), escalating jitter 0, 1e-10, ..., 1e-6.
inline Factorization factorize(const Eigen::MatrixXd& K, double sigma_n) {
  const auto n = K.rows();
  Eigen::MatrixXd Ky = K;
  Ky.diagonal().array() += sigma_n * sigma_n;
  Factorization f;
  f.llt.compute(Ky);
  if (f.llt.info() == Eigen::Success) return f;
  for (double j = kJitterStart; j <= kJitterMax * 1.000001; j *= 10.0) {
    Eigen::MatrixXd Kj = Ky;
    Kj.diagonal().array() += j;
    f.llt.compute(Kj);
    f.jitter = j;
    if (f.llt.info() == Eigen::Success) return f;
  }
  throw CholeskyFailure("gp: Cholesky failed with jitter up to 1e-6 (n=" + std::to_string(n) + ")");
}

struct NllResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d NLL / d log-hyperparameters, packed like GPHyperparams::to_log
};

/// Negative log marginal likelihood
///   0.5 y^T Ky^-1 y + 0.5 log|Ky| + (n/2) log 2 pi,  Ky = K + sigma_n^2 I,
/// and its gradient in log-hyperparameter space.
inline NllResult nll(const GPHyperparams& hp, const Eigen::MatrixXd& A, const Eigen::VectorXd& Y,
                     bool with_gradient = true) {
  hp.validate();
  const auto n = A.rows();
  if (n < 1) throw InvalidArgument("gp::nll: need at least one observation");
  if (Y.size() != n) throw DimensionMismatch("gp::nll outputs", static_cast<std::size_t>(n), static_cast<std::size_t>(Y.size()));
  const Eigen::MatrixXd K = kernel_matrix(A, A, hp);
  const auto f = factorize(K, hp.sigma_n);
  const Eigen::VectorXd alpha = f.llt.solve(Y);
  const Eigen::MatrixXd L = f.llt.matrixL();
  NllResult r;
  r.value = 0.5 * Y.dot(alpha) + L.diagonal().array().log().sum() +
            0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!with_gradient) return r;

  // dNLL/dpsi = 0.5 tr((Ky^-1 - alpha alpha^T) dKy/dpsi)
  const Eigen::MatrixXd Kinv = f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd W = Kinv - alpha * alpha.transpose();
  const auto d = A.cols();
  r.gradient.resize(d + 2);
  r.gradient[0] = 0.5 * (W.array() * K.array()).sum();
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::ArrayXd col = A.col(i).array() / hp.theta[i];
    Eigen::MatrixXd D2 = (col.matrix().replicate(1, n) - col.matrix().transpose().replicate(n, 1)).array().square();
    r.gradient[1 + i] = 0.5 * (W.array() * K.array() * D2.array()).sum();
  }
  r.gradient[d + 1] = 0.5 * W.trace() * 2.0 * hp.sigma_n * hp.sigma_n;
  return r;
}

struct OptimizerConfig {
  std::size_t restarts = 8;
  std::size_t iterations = 2000;
  double learning_rate = 5e-2;
  std::uint64_t seed = 0;
  /// Stop a restart once the relative NLL change stays below this for `patience` accepted steps.
  double tolerance = 1e-10;
  std::size_t patience = 25;
  /// sigma_n is kept above noise_floor_fraction * std(Y).
  double noise_floor_fraction = 1e-6;
};

/// Fitted model: training data, factor of (K + sigma_n^2 I) and weights.
struct GPPosteriorState {
  Eigen::MatrixXd A;
  Eigen::VectorXd Y;
  Eigen::MatrixXd L;       // lower-triangular factor
  Eigen::VectorXd weights;  // (K + sigma_n^2 I)^-1 Y
  double jitter = 0.0;
};

struct FitTrace {
  std::vector<double> nll_history;  // accepted iterations of the winning restart
  std::size_t restarts_failed = 0;
  double best_nll = std::numeric_limits<double>::infinity();
};

inline GPPosteriorState condition(const GPHyperparams& hp, const Eigen::MatrixXd& A, const Eigen::VectorXd& Y) {
  hp.validate();
  if (Y.size() != A.rows())
    throw DimensionMismatch("gp::condition outputs", static_cast<std::size_t>(A.rows()), static_cast<std::size_t>(Y.size()));
  GPPosteriorState s;
  s.A = A;
  s.Y = Y;
  const auto f = factorize(kernel_matrix(A, A, hp), hp.sigma_n);
  s.L = f.llt.matrixL();
  s.weights = f.llt.solve(Y);
  s.jitter = f.jitter;
  return s;
}

namespace detail {
inline double stddev(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 0.0;
  const double m = y.mean();
  return std::sqrt((y.array() - m).square().sum() / static_cast<double>(y.size() - 1));
}
}  // namespace detail

/// Multi-start Adam minimization of the NLL in log-hyperparameter space.
/// A proposed step is accepted only when it does not increase the NLL;
/// otherwise the step size is halved. Returns the best restart.
inline std::pair<GPHyperparams, GPPosteriorState> fit(const Eigen::MatrixXd& A, const Eigen::VectorXd& Y,
                                                     const OptimizerConfig& opt = {}, FitTrace* trace = nullptr) {
  const auto n = A.rows();
  const auto d = A.cols();
  if (n < 1 || d < 1) throw InvalidArgument("gp::fit: need a non-empty design");
  if (Y.size() != n) throw DimensionMismatch("gp::fit outputs", static_cast<std::size_t>(n), static_cast<std::size_t>(Y.size()));

  const double y_std = detail::stddev(Y);
  const double y_scale = y_std > 0.0 ? y_std : std::max(Y.cwiseAbs().maxCoeff(), 1.0);
  const double second_moment = std::max(Y.squaredNorm() / static_cast<double>(n), 1e-12);
  const double log_noise_floor = std::log(opt.noise_floor_fraction * y_scale);

  Eigen::VectorXd range(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double r = A.col(i).maxCoeff() - A.col(i).minCoeff();
    range[i] = r > 0.0 ? r : 1.0;
  }

  Rng rng = make_rng(opt.seed, 0x6770);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FitTrace local;
  FitTrace& tr = trace ? *trace : local;
  std::optional<Eigen::VectorXd> best;

  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, opt.restarts); ++restart) {
    Eigen::VectorXd psi(d + 2);
    psi[0] = std::log(second_moment) + (unit(rng) - 0.5) * 2.0;
    for (Eigen::Index i = 0; i < d; ++i)
      psi[1 + i] = std::log(0.1 * range[i]) + unit(rng) * std::log(100.0);
    psi[d + 1] = std::max(std::log(0.1 * y_scale) + (unit(rng) - 0.5) * 2.0, log_noise_floor);

    std::vector<double> history;
    try {
      NllResult cur = nll(GPHyperparams::from_log(psi), A, Y);
      history.push_back(cur.value);
      Adam adam(psi.size(), {opt.learning_rate});
      double lr = opt.learning_rate;
      std::size_t quiet = 0;
      for (std::size_t it = 0; it < opt.iterations; ++it) {
        Eigen::VectorXd cand = psi + adam.delta(cur.gradient, lr);
        cand[d + 1] = std::max(cand[d + 1], log_noise_floor);
        NllResult next;
        bool ok = false;
        try {
          next = nll(GPHyperparams::from_log(cand), A, Y);
          ok = std::isfinite(next.value) && next.value <= cur.value;
        } catch (const CholeskyFailure&) {
          ok = false;
        }
        if (!ok) {
          lr *= 0.5;
          if (lr < 1e-8 * opt.learning_rate) break;
          continue;
        }
        const double rel = (cur.value - next.value) / (1.0 + std::abs(cur.value));
        psi = cand;
        cur = std::move(next);
        history.push_back(cur.value);
        lr = std::min(opt.learning_rate, lr * 1.1);
        quiet = rel < opt.tolerance ? quiet + 1 : 0;
        if (quiet >= opt.patience) break;
      }
      if (cur.value < tr.best_nll) {
        tr.best_nll = cur.value;
        tr.nll_history = std::move(history);
        best = psi;
      }
    } catch (const CholeskyFailure&) {
      ++tr.restarts_failed;
    }
  }
  if (!best) throw AllStartsFailed("gp::fit: every restart failed to factorize");
  const auto hp = GPHyperparams::from_log(*best);
  return {hp, condition(hp, A, Y)};
}

/// Posterior at one query: mu = k*^T Ky^-1 Y, sigma^2 = k** - k*^T Ky^-1 k*.
/// sigma_eps = sqrt(max(sigma^2, 0)); sigma_n is the fitted noise level.
inline Posterior predict(const GPPosteriorState& s, const GPHyperparams& hp, const Eigen::Ref<const Eigen::VectorXd>& query) {
  if (static_cast<std::size_t>(query.size()) != hp.dim())
    throw DimensionMismatch("gp::predict query", hp.dim(), static_cast<std::size_t>(query.size()));
  Posterior p;
  p.sigma_n = hp.sigma_n;
  if (s.A.rows() == 0) {
    p.sigma_eps = std::sqrt(hp.theta_sigma);
    return p;
  }
  const Eigen::MatrixXd q = query.transpose();
  const Eigen::VectorXd ks = kernel_matrix(s.A, q, hp).col(0);
  p.mu = ks.dot(s.weights);
  const Eigen::VectorXd v = s.L.triangularView<Eigen::Lower>().solve(ks);
  const double var = hp.theta_sigma - v.squaredNorm();
  p.sigma_eps = std::sqrt(std::max(var, 0.0));
  return p;
}

/// Pre-clamp posterior variance (for diagnostics).
inline double raw_variance(const GPPosteriorState& s, const GPHyperparams& hp, const Eigen::Ref<const Eigen::VectorXd>& query) {
  const Eigen::MatrixXd q = query.transpose();
  const Eigen::VectorXd ks = kernel_matrix(s.A, q, hp).col(0);
  const Eigen::VectorXd v = s.L.triangularView<Eigen::Lower>().solve(ks);
  return hp.theta_sigma - v.squaredNorm();
}

/// Batched predict over the rows of Q.
inline std::vector<Posterior> predict_batch(const GPPosteriorState& s, const GPHyperparams& hp, const Eigen::MatrixXd& Q) {
  if (static_cast<std::size_t>(Q.cols()) != hp.dim())
    throw DimensionMismatch("gp::predict query", hp.dim(), static_cast<std::size_t>(Q.cols()));
  std::vector<Posterior> out(static_cast<std::size_t>(Q.rows()));
  if (s.A.rows() == 0) {
    for (auto& p : out) p = {0.0, std::sqrt(hp.theta_sigma), hp.sigma_n};
    return out;
  }
  const Eigen::MatrixXd Ks = kernel_matrix(s.A, Q, hp);  // n x q
  const Eigen::VectorXd mu = Ks.transpose() * s.weights;
  const Eigen::MatrixXd V = s.L.triangularView<Eigen::Lower>().solve(Ks);
  const Eigen::VectorXd vn = V.colwise().squaredNorm().transpose();
  for (Eigen::Index j = 0; j < Q.rows(); ++j) {
    auto& p = out[static_cast<std::size_t>(j)];
    p.mu = mu[j];
    p.sigma_eps = std::sqrt(std::max(hp.theta_sigma - vn[j], 0.0));
    p.sigma_n = hp.sigma_n;
  }
  return out;
}

}  // namespace uqbench::gp

#endif  // UQBENCH_GP_HPP
