#ifndef UQBENCH_NN_HPP
#define UQBENCH_NN_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uqbench/adam.hpp"
#include "uqbench/errors.hpp"
#include "uqbench/random.hpp"

namespace uqbench::nn {

enum class Head : std::uint8_t { deterministic, gaussian };
enum class Mode : std::uint8_t { train, infer_deterministic, infer_stochastic };
enum class LossKind : std::uint8_t { mse, nll, elbo };

struct NetworkSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden = {64, 64, 64, 64};
  double dropout_rate = 0.0;
  Head head = Head::deterministic;
  bool variational = false;
  /// Gaussian head: sigma_n = sigma_floor + exp(log_sigma_param).
  double sigma_floor = 1e-4;
  double init_sigma_n = 0.1;
  /// Prior std of the variational weights.
  double prior_sigma = 1.0;

  void validate() const {
    if (input_dim < 1) throw InvalidArgument("NetworkSpec: input_dim must be >= 1");
    for (auto w : hidden)
      if (w < 1) throw InvalidArgument("NetworkSpec: layer widths must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("NetworkSpec: dropout rate must be in [0, 1)");
    if (!(sigma_floor >= 0.0) || !(init_sigma_n > sigma_floor))
      throw InvalidArgument("NetworkSpec: need 0 <= sigma_floor < init_sigma_n");
    if (!(prior_sigma > 0.0)) throw InvalidArgument("NetworkSpec: prior_sigma must be > 0");
  }

  std::size_t layers() const noexcept { return hidden.size() + 1; }
  std::size_t fan_in(std::size_t l) const { return l == 0 ? input_dim : hidden[l - 1]; }
  std::size_t fan_out(std::size_t l) const { return l == hidden.size() ? 1 : hidden[l]; }
  /// Dropout acts on the input of every layer except the first hidden layer.
  bool drops_before(std::size_t l) const noexcept { return l >= 1 && dropout_rate > 0.0; }
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Random quantities of one forward pass: dropout masks (0/1, per layer
/// input) and standard-normal weight/bias perturbations (variational only).
struct Noise {
  std::vector<Eigen::MatrixXd> masks;  // [layer] B x fan_in, empty when that layer has no dropout
  std::vector<Eigen::MatrixXd> eps_w;  // [layer] fan_out x fan_in
  std::vector<Eigen::VectorXd> eps_b;  // [layer] fan_out
};

struct Output {
  Eigen::VectorXd mu;
  double sigma_n = 0.0;  // 0 for a deterministic head
};

struct LossOptions {
  double l2_weight = 0.0;
  /// The ELBO complexity term is kl_scale * KL / n_train.
  double kl_scale = 1.0;
  /// Number of training rows; the ELBO complexity term is per-example.
  double n_train = 1.0;
};

struct LossResult {
  double value = 0.0;
  double data_term = 0.0;
  double complexity = 0.0;
  Eigen::VectorXd gradient;
};

/// Parameters of a dense ReLU stack in one flat vector:
///   [W_0 b_0 ... W_{L-1} b_{L-1}]          (means when variational)
///   [rW_0 rb_0 ... rW_{L-1} rb_{L-1}]      (softplus-std parameters, variational only)
///   [log_sigma]                            (gaussian head only)
/// Weight blocks are column-major fan_out x fan_in.
class Network {
 public:
  Network() = default;

  Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    layout();
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total_));
    Rng rng = make_rng(seed, 0x1e17);
    for (std::size_t l = 0; l < spec_.layers(); ++l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec_.fan_in(l)));
      std::uniform_real_distribution<double> u(-bound, bound);
      auto W = weight(l);
      for (Eigen::Index j = 0; j < W.cols(); ++j)
        for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
      if (spec_.variational) {
        const double s0 = 0.05 * std::sqrt(2.0 / static_cast<double>(spec_.fan_in(l)));
        rho_weight(l).setConstant(inverse_softplus(s0));
        rho_bias(l).setConstant(inverse_softplus(s0));
      }
    }
    if (spec_.head == Head::gaussian) params_[log_sigma_index()] = std::log(spec_.init_sigma_n - spec_.sigma_floor);
  }

  Network(NetworkSpec spec, Eigen::VectorXd params) : spec_(std::move(spec)) {
    spec_.validate();
    layout();
    if (static_cast<std::size_t>(params.size()) != total_)
      throw DimensionMismatch("Network parameter vector", total_, static_cast<std::size_t>(params.size()));
    params_ = std::move(params);
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }
  Eigen::VectorXd& params() noexcept { return params_; }
  std::size_t num_params() const noexcept { return total_; }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t l) { return block(w_off_[l], l); }
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const { return cblock(w_off_[l], l); }
  Eigen::Map<Eigen::VectorXd> bias(std::size_t l) { return vblock(b_off_[l], l); }
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const { return cvblock(b_off_[l], l); }
  Eigen::Map<Eigen::MatrixXd> rho_weight(std::size_t l) { return block(rw_off_.at(l), l); }
  Eigen::Map<const Eigen::MatrixXd> rho_weight(std::size_t l) const { return cblock(rw_off_.at(l), l); }
  Eigen::Map<Eigen::VectorXd> rho_bias(std::size_t l) { return vblock(rb_off_.at(l), l); }
  Eigen::Map<const Eigen::VectorXd> rho_bias(std::size_t l) const { return cvblock(rb_off_.at(l), l); }

  Eigen::Index log_sigma_index() const { return static_cast<Eigen::Index>(total_) - 1; }
  double sigma_n() const {
    return spec_.head == Head::gaussian ? spec_.sigma_floor + std::exp(params_[log_sigma_index()]) : 0.0;
  }

  /// Sets every variational std to (numerically) zero.
  void freeze_variational_std() {
    if (!spec_.variational) return;
    for (std::size_t l = 0; l < spec_.layers(); ++l) {
      rho_weight(l).setConstant(-1e4);
      rho_bias(l).setConstant(-1e4);
    }
  }

  /// Draws the randomness of one pass over `batch` rows.
  template <class URBG>
  Noise sample_noise(std::size_t batch, URBG& rng, Mode mode) const {
    Noise nz;
    nz.masks.resize(spec_.layers());
    nz.eps_w.resize(spec_.layers());
    nz.eps_b.resize(spec_.layers());
    if (mode == Mode::infer_deterministic) return nz;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l < spec_.layers(); ++l) {
      const auto in = static_cast<Eigen::Index>(spec_.fan_in(l));
      const auto out = static_cast<Eigen::Index>(spec_.fan_out(l));
      if (spec_.drops_before(l)) {
        auto& m = nz.masks[l];
        m.resize(static_cast<Eigen::Index>(batch), in);
        for (Eigen::Index j = 0; j < in; ++j)
          for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = unit(rng) < spec_.dropout_rate ? 0.0 : 1.0;
      }
      if (spec_.variational) {
        nz.eps_w[l].resize(out, in);
        for (Eigen::Index j = 0; j < in; ++j)
          for (Eigen::Index i = 0; i < out; ++i) nz.eps_w[l](i, j) = gauss(rng);
        nz.eps_b[l].resize(out);
        for (Eigen::Index i = 0; i < out; ++i) nz.eps_b[l][i] = gauss(rng);
      }
    }
    return nz;
  }

  /// Noise for one prediction pass in which row r's dropout masks come from
  /// its own stream `row_seeds[r]`, and the weight perturbation from `pass_seed`.
  Noise sample_pass_noise(std::span<const std::uint64_t> row_seeds, std::uint64_t pass_seed) const {
    Noise nz;
    nz.masks.resize(spec_.layers());
    nz.eps_w.resize(spec_.layers());
    nz.eps_b.resize(spec_.layers());
    const auto batch = static_cast<Eigen::Index>(row_seeds.size());
    if (spec_.dropout_rate > 0.0) {
      for (std::size_t l = 0; l < spec_.layers(); ++l)
        if (spec_.drops_before(l)) nz.masks[l].resize(batch, static_cast<Eigen::Index>(spec_.fan_in(l)));
      for (Eigen::Index r = 0; r < batch; ++r) {
        SplitMix64 g(derive_seed(pass_seed, row_seeds[static_cast<std::size_t>(r)]));
        for (std::size_t l = 0; l < spec_.layers(); ++l) {
          if (!spec_.drops_before(l)) continue;
          auto& m = nz.masks[l];
          for (Eigen::Index j = 0; j < m.cols(); ++j) m(r, j) = g.uniform() < spec_.dropout_rate ? 0.0 : 1.0;
        }
      }
    }
    if (spec_.variational) {
      SplitMix64 g(derive_seed(pass_seed, 0xb11));
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (std::size_t l = 0; l < spec_.layers(); ++l) {
        const auto in = static_cast<Eigen::Index>(spec_.fan_in(l));
        const auto out = static_cast<Eigen::Index>(spec_.fan_out(l));
        nz.eps_w[l].resize(out, in);
        for (Eigen::Index j = 0; j < in; ++j)
          for (Eigen::Index i = 0; i < out; ++i) nz.eps_w[l](i, j) = gauss(g);
        nz.eps_b[l].resize(out);
        for (Eigen::Index i = 0; i < out; ++i) nz.eps_b[l][i] = gauss(g);
      }
    }
    return nz;
  }

  /// Forward pass over the rows of X with the given noise realization.
  Output forward(const Eigen::MatrixXd& X, Mode mode, const Noise& noise) const {
    Tape t;
    run(X, mode, noise, t);
    return {t.z.back().col(0), sigma_n()};
  }

  template <class URBG>
  Output forward(const Eigen::MatrixXd& X, Mode mode, URBG& rng) const {
    return forward(X, mode, sample_noise(static_cast<std::size_t>(X.rows()), rng, mode));
  }

  /// Mean loss over the batch plus regularization, with the gradient with
  /// respect to every parameter.
  LossResult loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, LossKind kind, const LossOptions& opt,
                  const Noise& noise, Mode mode = Mode::train) const {
    const auto B = X.rows();
    if (B < 1) throw InvalidArgument("Network::loss: empty batch");
    if (y.size() != B) throw DimensionMismatch("Network::loss targets", static_cast<std::size_t>(B), static_cast<std::size_t>(y.size()));
    if ((kind == LossKind::nll) && spec_.head != Head::gaussian)
      throw InvalidArgument("Network::loss: nll needs a gaussian head");
    if (kind == LossKind::elbo && !spec_.variational) throw InvalidArgument("Network::loss: elbo needs variational layers");
    Tape t;
    run(X, mode, noise, t);
    const Eigen::VectorXd f = t.z.back().col(0);
    const Eigen::VectorXd r = f - y;
    const double inv_b = 1.0 / static_cast<double>(B);

    LossResult res;
    res.gradient = Eigen::VectorXd::Zero(params_.size());
    Eigen::VectorXd df;
    const bool gaussian_data = spec_.head == Head::gaussian && kind != LossKind::mse;
    if (gaussian_data) {
      const double s = params_[log_sigma_index()];
      const double sig = spec_.sigma_floor + std::exp(s);
      const double s2 = sig * sig;
      res.data_term = inv_b * 0.5 * (r.squaredNorm() / s2) + 0.5 * std::log(s2) + 0.5 * std::log(2.0 * std::numbers::pi);
      df = r * (inv_b / s2);
      const double dsig = -inv_b * r.squaredNorm() / (s2 * sig) + 1.0 / sig;
      res.gradient[log_sigma_index()] = dsig * std::exp(s);
    } else {
      res.data_term = inv_b * r.squaredNorm();
      df = r * (2.0 * inv_b);
    }
    res.value = res.data_term;

    backward(t, df, noise, res.gradient);

    if (opt.l2_weight > 0.0) {
      for (std::size_t l = 0; l < spec_.layers(); ++l) {
        const auto W = weight(l);
        res.value += opt.l2_weight * W.squaredNorm();
        block_in(res.gradient, w_off_[l], l) += 2.0 * opt.l2_weight * W;
      }
    }
    if (kind == LossKind::elbo) {
      const double scale = opt.kl_scale / opt.n_train;
      const double kl = add_kl(res.gradient, scale);
      res.complexity = scale * kl;
      res.value += res.complexity;
    }
    return res;
  }

  /// KL[q(w) || N(0, prior^2)] summed over all variational parameters.
  double kl_divergence() const {
    Eigen::VectorXd dummy = Eigen::VectorXd::Zero(params_.size());
    return add_kl(dummy, 0.0);
  }

 private:
  struct Tape {
    std::vector<Eigen::MatrixXd> in;  // layer input after dropout
    std::vector<Eigen::MatrixXd> z;   // pre-activation
    std::vector<Eigen::MatrixXd> W;   // effective weights
    std::vector<bool> dropped;
    bool sampled = false;
  };

  void layout() {
    std::size_t off = 0;
    const auto L = spec_.layers();
    w_off_.resize(L);
    b_off_.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      w_off_[l] = off;
      off += spec_.fan_in(l) * spec_.fan_out(l);
      b_off_[l] = off;
      off += spec_.fan_out(l);
    }
    if (spec_.variational) {
      rw_off_.resize(L);
      rb_off_.resize(L);
      for (std::size_t l = 0; l < L; ++l) {
        rw_off_[l] = off;
        off += spec_.fan_in(l) * spec_.fan_out(l);
        rb_off_[l] = off;
        off += spec_.fan_out(l);
      }
    }
    if (spec_.head == Head::gaussian) ++off;
    total_ = off;
  }

  Eigen::Map<Eigen::MatrixXd> block(std::size_t off, std::size_t l) {
    return {params_.data() + off, static_cast<Eigen::Index>(spec_.fan_out(l)), static_cast<Eigen::Index>(spec_.fan_in(l))};
  }
  Eigen::Map<const Eigen::MatrixXd> cblock(std::size_t off, std::size_t l) const {
    return {params_.data() + off, static_cast<Eigen::Index>(spec_.fan_out(l)), static_cast<Eigen::Index>(spec_.fan_in(l))};
  }
  Eigen::Map<Eigen::VectorXd> vblock(std::size_t off, std::size_t l) {
    return {params_.data() + off, static_cast<Eigen::Index>(spec_.fan_out(l))};
  }
  Eigen::Map<const Eigen::VectorXd> cvblock(std::size_t off, std::size_t l) const {
    return {params_.data() + off, static_cast<Eigen::Index>(spec_.fan_out(l))};
  }
  Eigen::Map<Eigen::MatrixXd> block_in(Eigen::VectorXd& g, std::size_t off, std::size_t l) const {
    return {g.data() + off, static_cast<Eigen::Index>(spec_.fan_out(l)), static_cast<Eigen::Index>(spec_.fan_in(l))};
  }
  Eigen::Map<Eigen::VectorXd> vblock_in(Eigen::VectorXd& g, std::size_t off, std::size_t l) const {
    return {g.data() + off, static_cast<Eigen::Index>(spec_.fan_out(l))};
  }

  bool sampling(Mode mode) const noexcept { return spec_.variational && mode != Mode::infer_deterministic; }
  bool dropping(Mode mode, std::size_t l) const noexcept {
    return spec_.drops_before(l) && mode != Mode::infer_deterministic;
  }

  void run(const Eigen::MatrixXd& X, Mode mode, const Noise& noise, Tape& t) const {
    if (static_cast<std::size_t>(X.cols()) != spec_.input_dim)
      throw DimensionMismatch("Network input width", spec_.input_dim, static_cast<std::size_t>(X.cols()));
    const auto L = spec_.layers();
    t.in.resize(L);
    t.z.resize(L);
    t.W.resize(L);
    t.dropped.assign(L, false);
    t.sampled = sampling(mode);
    const double keep_scale = 1.0 / (1.0 - spec_.dropout_rate);
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < L; ++l) {
      if (dropping(mode, l)) {
        const auto& m = noise.masks.at(l);
        if (m.rows() != a.rows() || m.cols() != a.cols()) throw InvalidArgument("Network: dropout mask shape mismatch");
        t.in[l] = a.cwiseProduct(m) * keep_scale;
        t.dropped[l] = true;
      } else {
        t.in[l] = std::move(a);
      }
      Eigen::VectorXd b = bias(l);
      if (sampling(mode)) {
        t.W[l] = weight(l) + noise.eps_w.at(l).cwiseProduct(rho_weight(l).unaryExpr(&softplus));
        b += noise.eps_b.at(l).cwiseProduct(rho_bias(l).unaryExpr(&softplus));
      } else {
        t.W[l] = weight(l);
      }
      t.z[l] = t.in[l] * t.W[l].transpose();
      t.z[l].rowwise() += b.transpose();
      if (l + 1 < L) a = t.z[l].cwiseMax(0.0);
    }
  }

  void backward(const Tape& t, const Eigen::VectorXd& df, const Noise& noise, Eigen::VectorXd& grad) const {
    const auto L = spec_.layers();
    const double keep_scale = 1.0 / (1.0 - spec_.dropout_rate);
    const bool var = t.sampled;
    Eigen::MatrixXd gz = df;  // B x 1
    for (std::size_t li = L; li-- > 0;) {
      const Eigen::MatrixXd gW = gz.transpose() * t.in[li];
      const Eigen::VectorXd gb = gz.colwise().sum().transpose();
      block_in(grad, w_off_[li], li) += gW;
      vblock_in(grad, b_off_[li], li) += gb;
      if (var) {
        const Eigen::MatrixXd sw = rho_weight(li).unaryExpr(&sigmoid);
        const Eigen::VectorXd sb = rho_bias(li).unaryExpr(&sigmoid);
        block_in(grad, rw_off_[li], li) += gW.cwiseProduct(noise.eps_w[li]).cwiseProduct(sw);
        vblock_in(grad, rb_off_[li], li) += gb.cwiseProduct(noise.eps_b[li]).cwiseProduct(sb);
      }
      if (li == 0) break;
      Eigen::MatrixXd ga = gz * t.W[li];  // gradient w.r.t. this layer's (dropped) input
      if (t.dropped[li]) ga = ga.cwiseProduct(noise.masks[li]) * keep_scale;
      gz = ga.cwiseProduct((t.z[li - 1].array() > 0.0).cast<double>().matrix());
    }
  }

  double add_kl(Eigen::VectorXd& grad, double scale) const {
    if (!spec_.variational) return 0.0;
    const double p2 = spec_.prior_sigma * spec_.prior_sigma;
    double kl = 0.0;
    auto accumulate = [&](std::size_t mu_off, std::size_t rho_off, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        const double mu = params_[static_cast<Eigen::Index>(mu_off + i)];
        const double rho = params_[static_cast<Eigen::Index>(rho_off + i)];
        const double s = softplus(rho);
        kl += std::log(spec_.prior_sigma / s) + (s * s + mu * mu) / (2.0 * p2) - 0.5;
        grad[static_cast<Eigen::Index>(mu_off + i)] += scale * mu / p2;
        grad[static_cast<Eigen::Index>(rho_off + i)] += scale * (-1.0 / s + s / p2) * sigmoid(rho);
      }
    };
    for (std::size_t l = 0; l < spec_.layers(); ++l) {
      accumulate(w_off_[l], rw_off_[l], spec_.fan_in(l) * spec_.fan_out(l));
      accumulate(b_off_[l], rb_off_[l], spec_.fan_out(l));
    }
    return kl;
  }

  NetworkSpec spec_;
  Eigen::VectorXd params_;
  std::vector<std::size_t> w_off_, b_off_, rw_off_, rb_off_;
  std::size_t total_ = 0;
};

enum class KlSchedule : std::uint8_t { uniform, blundell };

struct TrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double l2_weight = 0.0;
  std::uint64_t seed = 0;
  double kl_scale = 1.0;
  KlSchedule kl_schedule = KlSchedule::uniform;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning_rate must be > 0");
    if (!(l2_weight >= 0.0)) throw InvalidArgument("TrainConfig: l2_weight must be >= 0");
  }
};

/// Weight of the complexity term for batch `i` of `m` (sums to 1 over an epoch).
inline double kl_batch_weight(KlSchedule s, std::size_t i, std::size_t m) {
  if (s == KlSchedule::uniform || m == 1) return 1.0 / static_cast<double>(m);
  // 2^(m-i-1) / (2^m - 1), computed stably
  const double e = static_cast<double>(m - i - 1) - static_cast<double>(m);
  return std::exp2(e) / (1.0 - std::exp2(-static_cast<double>(m)));
}

struct TrainResult {
  Network network;
  std::vector<double> loss_history;  // mean batch loss per epoch
};

inline LossKind default_loss(const NetworkSpec& spec) {
  if (spec.variational) return LossKind::elbo;
  return spec.head == Head::gaussian ? LossKind::nll : LossKind::mse;
}

/// Adam over shuffled mini-batches. Deterministic given cfg.seed.
inline TrainResult train(const NetworkSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const TrainConfig& cfg, std::optional<LossKind> kind = std::nullopt) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  if (n == 0) throw InvalidArgument("nn::train: empty training set");
  if (static_cast<std::size_t>(y.size()) != n) throw DimensionMismatch("nn::train targets", n, static_cast<std::size_t>(y.size()));
  const LossKind lk = kind.value_or(default_loss(spec));
  TrainResult res{Network(spec, cfg.seed), {}};
  Network& net = res.network;
  Adam adam(static_cast<Eigen::Index>(net.num_params()), {cfg.learning_rate});
  Rng rng = make_rng(cfg.seed, 0x7a1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t batches = (n + bs - 1) / bs;
  res.loss_history.reserve(cfg.epochs);
  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      const std::size_t lo = bi * bs;
      const std::size_t hi = std::min(n, lo + bs);
      const auto B = static_cast<Eigen::Index>(hi - lo);
      xb.resize(B, X.cols());
      yb.resize(B);
      for (Eigen::Index r = 0; r < B; ++r) {
        xb.row(r) = X.row(static_cast<Eigen::Index>(order[lo + static_cast<std::size_t>(r)]));
        yb[r] = y[static_cast<Eigen::Index>(order[lo + static_cast<std::size_t>(r)])];
      }
      // Batch weights sum to one per epoch; scaled by the batch count so each
      // batch loss is a per-example quantity comparable to the data term.
      LossOptions lo_opt{cfg.l2_weight,
                         cfg.kl_scale * kl_batch_weight(cfg.kl_schedule, bi, batches) * static_cast<double>(batches),
                         static_cast<double>(n)};
      const Noise noise = net.sample_noise(static_cast<std::size_t>(B), rng, Mode::train);
      const LossResult lr = net.loss(xb, yb, lk, lo_opt, noise, Mode::train);
      if (!std::isfinite(lr.value) || !lr.gradient.allFinite())
        throw DivergedLoss("nn::train: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(net.params(), lr.gradient);
      total += lr.value;
    }
    res.loss_history.push_back(total / static_cast<double>(batches));
  }
  return res;
}

}  // namespace uqbench::nn

#endif  // UQBENCH_NN_HPP
