#ifndef UQBENCH_UQ_HPP
#define UQBENCH_UQ_HPP

// The eight surrogate variants behind one predict contract.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqbench/container.hpp"
#include "uqbench/dataset.hpp"
#include "uqbench/errors.hpp"
#include "uqbench/gp.hpp"
#include "uqbench/histogram.hpp"
#include "uqbench/nn.hpp"
#include "uqbench/parallel.hpp"
#include "uqbench/posterior.hpp"
#include "uqbench/random.hpp"

namespace uqbench::uq {

using json = nlohmann::json;

enum class SurrogateKind : std::uint8_t { gp, nn, gnn, enn, egnn, bnn, dnn, dgnn };

inline constexpr std::array<SurrogateKind, 8> kAllKinds = {SurrogateKind::gp,  SurrogateKind::nn,  SurrogateKind::gnn,
                                                           SurrogateKind::enn, SurrogateKind::egnn, SurrogateKind::bnn,
                                                           SurrogateKind::dnn, SurrogateKind::dgnn};

struct Capabilities {
  bool epistemic = false;
  bool aleatoric = false;
  friend bool operator==(const Capabilities&, const Capabilities&) = default;
};

constexpr Capabilities capabilities(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::gp: return {true, true};
    case SurrogateKind::nn: return {false, false};
    case SurrogateKind::gnn: return {false, true};
    case SurrogateKind::enn: return {true, false};
    case SurrogateKind::egnn: return {true, true};
    case SurrogateKind::bnn: return {true, true};
    case SurrogateKind::dnn: return {true, false};
    case SurrogateKind::dgnn: return {true, true};
  }
  return {};
}

inline std::string_view to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::gp: return "gp";
    case SurrogateKind::nn: return "nn";
    case SurrogateKind::gnn: return "gnn";
    case SurrogateKind::enn: return "enn";
    case SurrogateKind::egnn: return "egnn";
    case SurrogateKind::bnn: return "bnn";
    case SurrogateKind::dnn: return "dnn";
    case SurrogateKind::dgnn: return "dgnn";
  }
  return "?";
}

inline SurrogateKind parse_kind(std::string_view s) {
  std::string t;
  for (char c : s)
    if (c != '-' && c != '_') t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (auto k : kAllKinds)
    if (to_string(k) == t) return k;
  throw InvalidArgument("unknown surrogate kind '" + std::string(s) + "'");
}

inline bool gaussian_head(SurrogateKind k) {
  return k == SurrogateKind::gnn || k == SurrogateKind::egnn || k == SurrogateKind::bnn || k == SurrogateKind::dgnn;
}
inline bool independent_members(SurrogateKind k) { return k == SurrogateKind::enn || k == SurrogateKind::egnn; }
inline bool uses_dropout(SurrogateKind k) { return k == SurrogateKind::dnn || k == SurrogateKind::dgnn; }

enum class EnsembleKind : std::uint8_t { single, independent_nets, dropout_passes, bnn_passes };

inline EnsembleKind ensemble_kind(SurrogateKind k) {
  if (independent_members(k)) return EnsembleKind::independent_nets;
  if (uses_dropout(k)) return EnsembleKind::dropout_passes;
  if (k == SurrogateKind::bnn) return EnsembleKind::bnn_passes;
  return EnsembleKind::single;
}

inline std::size_t default_ensemble_size(SurrogateKind k) {
  switch (ensemble_kind(k)) {
    case EnsembleKind::independent_nets: return 8;
    case EnsembleKind::dropout_passes: return 50;
    case EnsembleKind::bnn_passes: return 100;
    case EnsembleKind::single: return 1;
  }
  return 1;
}

struct EnsembleConfig {
  std::size_t n_e = 8;
  std::vector<std::uint64_t> member_seeds;
  EnsembleKind kind = EnsembleKind::independent_nets;

  void validate() const {
    if (n_e < 2) throw DegenerateEnsemble("ensemble needs n_e >= 2, got " + std::to_string(n_e));
    if (!member_seeds.empty() && member_seeds.size() != n_e)
      throw DimensionMismatch("EnsembleConfig member seeds", n_e, member_seeds.size());
  }
};

/// Deterministic members: mean and unbiased sample variance of the outputs.
inline Posterior ensemble_predict(std::span<const double> y) {
  const auto n = y.size();
  if (n < 2) throw DegenerateEnsemble("ensemble_predict needs at least two members");
  // Shifted by the first member so identical members give exactly zero spread.
  const double shift = y[0];
  double sum = 0.0;
  for (double v : y) sum += v - shift;
  const double dmean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : y) ss += (v - shift - dmean) * (v - shift - dmean);
  return {shift + dmean, std::sqrt(ss / static_cast<double>(n - 1)), 0.0};
}

/// Gaussian members (mu_j, sigma_n_j): sigma_n^2 is the mean member variance,
/// sigma_eps^2 the unbiased sample variance of the member means.
inline Posterior ensemble_predict(std::span<const double> mu, std::span<const double> sigma_n) {
  if (mu.size() != sigma_n.size()) throw DimensionMismatch("ensemble_predict sigma_n", mu.size(), sigma_n.size());
  Posterior p = ensemble_predict(mu);
  double s2 = 0.0;
  for (double s : sigma_n) s2 += s * s;
  p.sigma_n = std::sqrt(s2 / static_cast<double>(sigma_n.size()));
  return p;
}

struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::enn;
  std::vector<std::size_t> hidden = {64, 64, 64, 64};
  double dropout_rate = 0.5;  // D-NN / DG-NN only
  /// Members (ENN, EG-NN) or inference passes (D-NN, DG-NN, BNN); 0 picks the variant default.
  std::size_t n_e = 0;
  std::size_t epochs = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double l2_weight = 1e-4;  // ENN / EG-NN only
  double kl_scale = 1.0;
  nn::KlSchedule kl_schedule = nn::KlSchedule::uniform;
  /// Gaussian-head floor and initial sigma_n, in units of the target std.
  double sigma_floor = 1e-4;
  double init_sigma_n = 0.1;
  gp::OptimizerConfig gp;
  std::uint64_t seed = 0;
  bool functional = false;
  std::size_t threads = 1;

  std::size_t ensemble_size() const { return n_e == 0 ? default_ensemble_size(kind) : n_e; }

  void validate() const {
    if (kind != SurrogateKind::gp) {
      if (hidden.empty()) throw InvalidArgument("SurrogateConfig: need at least one hidden layer");
      for (auto w : hidden)
        if (w < 1) throw InvalidArgument("SurrogateConfig: layer widths must be >= 1");
      if (epochs < 1 || batch_size < 1) throw InvalidArgument("SurrogateConfig: epochs and batch_size must be >= 1");
      if (!(learning_rate > 0.0)) throw InvalidArgument("SurrogateConfig: learning_rate must be > 0");
      if (!(l2_weight >= 0.0)) throw InvalidArgument("SurrogateConfig: l2_weight must be >= 0");
      if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("SurrogateConfig: dropout rate must be in [0, 1)");
    }
    if (ensemble_kind(kind) != EnsembleKind::single && ensemble_size() < 2)
      throw DegenerateEnsemble(std::string(to_string(kind)) + " needs n_e >= 2");
    if (threads < 1) throw InvalidArgument("SurrogateConfig: threads must be >= 1");
  }

  nn::NetworkSpec network_spec(std::size_t input_dim) const {
    nn::NetworkSpec s;
    s.input_dim = input_dim;
    s.hidden = hidden;
    s.dropout_rate = uses_dropout(kind) ? dropout_rate : 0.0;
    s.head = gaussian_head(kind) ? nn::Head::gaussian : nn::Head::deterministic;
    s.variational = kind == SurrogateKind::bnn;
    s.sigma_floor = sigma_floor;
    s.init_sigma_n = init_sigma_n;
    return s;
  }
};

inline json to_json(const SurrogateConfig& c) {
  return {{"model", std::string(to_string(c.kind))},
          {"hidden", c.hidden},
          {"rd", c.dropout_rate},
          {"ne", c.n_e},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"l2_weight", c.l2_weight},
          {"kl_scale", c.kl_scale},
          {"kl_schedule", c.kl_schedule == nn::KlSchedule::uniform ? "uniform" : "blundell"},
          {"sigma_floor", c.sigma_floor},
          {"init_sigma_n", c.init_sigma_n},
          {"gp_restarts", c.gp.restarts},
          {"gp_iterations", c.gp.iterations},
          {"gp_learning_rate", c.gp.learning_rate},
          {"seed", c.seed},
          {"functional", c.functional}};
}

/// Reads a model config; absent keys keep their defaults, unknown keys are rejected.
inline SurrogateConfig surrogate_config_from_json(const json& j, SurrogateConfig c = {}) {
  if (!j.is_object()) throw InvalidArgument("model config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "model") c.kind = parse_kind(v.get<std::string>());
      else if (key == "hidden") c.hidden = v.get<std::vector<std::size_t>>();
      else if (key == "rd") c.dropout_rate = v.get<double>();
      else if (key == "ne") c.n_e = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "l2_weight") c.l2_weight = v.get<double>();
      else if (key == "kl_scale") c.kl_scale = v.get<double>();
      else if (key == "kl_schedule") {
        const auto s = v.get<std::string>();
        if (s == "uniform") c.kl_schedule = nn::KlSchedule::uniform;
        else if (s == "blundell") c.kl_schedule = nn::KlSchedule::blundell;
        else throw InvalidArgument("kl_schedule must be 'uniform' or 'blundell'");
      } else if (key == "sigma_floor") c.sigma_floor = v.get<double>();
      else if (key == "init_sigma_n") c.init_sigma_n = v.get<double>();
      else if (key == "gp_restarts") c.gp.restarts = v.get<std::size_t>();
      else if (key == "gp_iterations") c.gp.iterations = v.get<std::size_t>();
      else if (key == "gp_learning_rate") c.gp.learning_rate = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "functional") c.functional = v.get<bool>();
      else throw InvalidArgument("unknown model config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Per-feature affine standardization fitted on training rows.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    const auto n = static_cast<double>(X.rows());
    s.mean = X.colwise().mean();
    s.scale = ((X.rowwise() - s.mean).array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
      if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean).array().rowwise() / scale.array();
  }
};

/// Hash of the bit pattern of one query row, used to seed its dropout stream.
inline std::uint64_t row_hash(const Eigen::Ref<const Eigen::RowVectorXd>& r) {
  std::uint64_t h = 0x51ed2701a3c4b5f9ULL;
  for (Eigen::Index j = 0; j < r.size(); ++j) h = derive_seed(h, std::bit_cast<std::uint64_t>(r[j] == 0.0 ? 0.0 : r[j]));
  return h;
}

struct PredictOptions {
  std::optional<std::size_t> n_e;
  std::uint64_t seed = 0;
};

/// Per-pass member outputs in target units: rows are passes, columns queries.
struct PassOutputs {
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sigma_n;  // empty for deterministic heads
};

class SurrogateModel {
 public:
  SurrogateModel() = default;

  SurrogateKind kind() const noexcept { return config_.kind; }
  Capabilities capabilities() const noexcept { return uq::capabilities(config_.kind); }
  const SurrogateConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<nn::Network>& members() const noexcept { return members_; }
  std::vector<nn::Network>& members() noexcept { return members_; }
  const std::vector<std::vector<double>>& loss_histories() const noexcept { return histories_; }
  const gp::GPHyperparams& gp_hyperparams() const { return gp_hp_.value(); }
  double target_mean() const noexcept { return y_mean_; }
  double target_scale() const noexcept { return y_scale_; }

  /// Passes the ensemble would use without an override.
  std::size_t default_passes() const { return config_.ensemble_size(); }

  PassOutputs pass_outputs(const Eigen::MatrixXd& Q, std::size_t passes, std::uint64_t seed) const {
    check_query(Q);
    if (kind() == SurrogateKind::gp) throw InvalidArgument("pass_outputs: a GP has no ensemble passes");
    const auto ek = ensemble_kind(kind());
    if (ek == EnsembleKind::single) passes = 1;
    if (ek == EnsembleKind::independent_nets && passes > members_.size())
      throw InvalidArgument("ensemble has " + std::to_string(members_.size()) + " members, asked for " + std::to_string(passes));
    const Eigen::MatrixXd Xs = x_std_.apply(Q);
    const bool gauss = gaussian_head(kind());
    PassOutputs out;
    out.mu.resize(static_cast<Eigen::Index>(passes), Q.rows());
    if (gauss) out.sigma_n.resize(static_cast<Eigen::Index>(passes), Q.rows());
    std::vector<std::uint64_t> row_seeds(static_cast<std::size_t>(Q.rows()));
    for (Eigen::Index r = 0; r < Q.rows(); ++r) row_seeds[static_cast<std::size_t>(r)] = row_hash(Q.row(r));
    parallel_for(passes, config_.threads, [&](std::size_t p) {
      const nn::Network& net = ek == EnsembleKind::independent_nets ? members_[p] : members_.front();
      nn::Output o;
      if (ek == EnsembleKind::dropout_passes || ek == EnsembleKind::bnn_passes) {
        const auto noise = net.sample_pass_noise(row_seeds, derive_seed(seed, p));
        o = net.forward(Xs, nn::Mode::infer_stochastic, noise);
      } else {
        o = net.forward(Xs, nn::Mode::infer_deterministic, nn::Noise{});
      }
      const auto pi = static_cast<Eigen::Index>(p);
      out.mu.row(pi) = (o.mu.array() * y_scale_ + y_mean_).matrix().transpose();
      if (gauss) out.sigma_n.row(pi).setConstant(o.sigma_n * y_scale_);
    });
    return out;
  }

  std::vector<Posterior> predict(const Eigen::MatrixXd& Q, const PredictOptions& opt = {}) const {
    check_query(Q);
    std::vector<Posterior> out(static_cast<std::size_t>(Q.rows()));
    if (kind() == SurrogateKind::gp) {
      out = gp::predict_batch(gp_state_, *gp_hp_, Q);
      for (auto& p : out) {
        p.mu = p.mu * y_scale_ + y_mean_;
        p.sigma_eps *= y_scale_;
        p.sigma_n *= y_scale_;
      }
      return out;
    }
    const auto ek = ensemble_kind(kind());
    std::size_t passes = opt.n_e.value_or(default_passes());
    if (ek != EnsembleKind::single && passes < 2) throw DegenerateEnsemble("predict needs n_e >= 2");
    const auto po = pass_outputs(Q, passes, opt.seed);
    const bool gauss = gaussian_head(kind());
    std::vector<double> mu(static_cast<std::size_t>(po.mu.rows())), sn(mu.size());
    for (Eigen::Index q = 0; q < Q.rows(); ++q) {
      auto& p = out[static_cast<std::size_t>(q)];
      if (ek == EnsembleKind::single) {
        p = {po.mu(0, q), 0.0, gauss ? po.sigma_n(0, q) : 0.0};
      } else {
        for (std::size_t j = 0; j < mu.size(); ++j) {
          mu[j] = po.mu(static_cast<Eigen::Index>(j), q);
          if (gauss) sn[j] = po.sigma_n(static_cast<Eigen::Index>(j), q);
        }
        p = gauss ? ensemble_predict(mu, sn) : ensemble_predict(mu);
      }
    }
    // Variants without a capability never report it.
    const auto caps = capabilities();
    for (auto& p : out) {
      if (!caps.epistemic) p.sigma_eps = 0.0;
      if (!caps.aleatoric) p.sigma_n = 0.0;
    }
    return out;
  }

  Posterior predict_one(const Eigen::Ref<const Eigen::VectorXd>& q, const PredictOptions& opt = {}) const {
    const Eigen::MatrixXd Q = q.transpose();
    return predict(Q, opt).front();
  }

  io::Container to_container() const;
  static SurrogateModel from_container(const io::Container& c);

  void save(const std::filesystem::path& p) const { to_container().save(p); }
  static SurrogateModel load(const std::filesystem::path& p) { return from_container(io::Container::load(p)); }

 private:
  friend SurrogateModel train_surrogate(const Eigen::MatrixXd&, const Eigen::VectorXd&, const SurrogateConfig&);

  void check_query(const Eigen::MatrixXd& Q) const {
    if (static_cast<std::size_t>(Q.cols()) != input_dim_)
      throw DimensionMismatch(std::string(to_string(kind())) + " query width", input_dim_, static_cast<std::size_t>(Q.cols()));
  }

  SurrogateConfig config_;
  std::size_t input_dim_ = 0;
  Standardizer x_std_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  std::vector<nn::Network> members_;
  std::vector<std::vector<double>> histories_;
  std::optional<gp::GPHyperparams> gp_hp_;
  gp::GPPosteriorState gp_state_;
};

inline SurrogateModel train_surrogate(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SurrogateConfig& cfg) {
  cfg.validate();
  if (X.rows() == 0) throw InvalidArgument("train_surrogate: empty training set");
  if (y.size() != X.rows())
    throw DimensionMismatch("train_surrogate targets", static_cast<std::size_t>(X.rows()), static_cast<std::size_t>(y.size()));
  if (!X.allFinite() || !y.allFinite()) throw InvalidArgument("train_surrogate: non-finite training data");
  SurrogateModel m;
  m.config_ = cfg;
  m.input_dim_ = static_cast<std::size_t>(X.cols());
  m.y_mean_ = y.mean();
  const double var = (y.array() - m.y_mean_).square().mean();
  m.y_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - m.y_mean_) / m.y_scale_;

  if (cfg.kind == SurrogateKind::gp) {
    m.x_std_.mean = Eigen::RowVectorXd::Zero(X.cols());
    m.x_std_.scale = Eigen::RowVectorXd::Ones(X.cols());
    auto opt = cfg.gp;
    opt.seed = derive_seed(cfg.seed, 0x69);
    auto [hp, state] = gp::fit(X, ys, opt);
    m.gp_hp_ = hp;
    m.gp_state_ = std::move(state);
    return m;
  }

  m.x_std_ = Standardizer::fit(X);
  const Eigen::MatrixXd Xs = m.x_std_.apply(X);
  const auto spec = cfg.network_spec(m.input_dim_);
  const std::size_t count = independent_members(cfg.kind) ? cfg.ensemble_size() : 1;
  m.members_.resize(count);
  m.histories_.resize(count);
  parallel_for(count, cfg.threads, [&](std::size_t j) {
    nn::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.l2_weight = independent_members(cfg.kind) ? cfg.l2_weight : 0.0;
    tc.kl_scale = cfg.kl_scale;
    tc.kl_schedule = cfg.kl_schedule;
    tc.seed = derive_seed(cfg.seed, j + 1);
    auto r = nn::train(spec, Xs, ys, tc);
    m.members_[j] = std::move(r.network);
    m.histories_[j] = std::move(r.loss_history);
  });
  return m;
}

/// Trains on the rows `train_idx` of a dataset, using ROM coefficients or
/// functional traces according to cfg.functional.
inline SurrogateModel train_surrogate(const data::Dataset& ds, std::span<const std::size_t> train_idx,
                                      const SurrogateConfig& cfg) {
  if (cfg.functional && !ds.functional_inputs) throw InvalidArgument("dataset has no functional inputs");
  return train_surrogate(ds.features(train_idx, cfg.functional), ds.targets(train_idx), cfg);
}

namespace detail {
inline json network_spec_json(const nn::NetworkSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden", s.hidden},
          {"dropout_rate", s.dropout_rate},
          {"head", s.head == nn::Head::gaussian ? "gaussian" : "deterministic"},
          {"variational", s.variational},
          {"sigma_floor", s.sigma_floor},
          {"init_sigma_n", s.init_sigma_n},
          {"prior_sigma", s.prior_sigma}};
}
}  // namespace detail

inline io::Container SurrogateModel::to_container() const {
  io::Container c("surrogate");
  auto& meta = c.meta();
  meta["variant"] = std::string(to_string(kind()));
  meta["capabilities"] = {{"epistemic", capabilities().epistemic}, {"aleatoric", capabilities().aleatoric}};
  meta["config"] = to_json(config_);
  meta["input_dim"] = input_dim_;
  meta["target_mean"] = y_mean_;
  meta["target_scale"] = y_scale_;
  c.add("x_mean", x_std_.mean);
  c.add("x_scale", x_std_.scale);
  if (kind() == SurrogateKind::gp) {
    c.add_vector("gp_log_hyperparams", gp_hp_->to_log());
    c.add("gp_inputs", gp_state_.A);
    c.add_vector("gp_targets", gp_state_.Y);
  } else {
    meta["network"] = detail::network_spec_json(members_.front().spec());
    meta["members"] = members_.size();
    for (std::size_t j = 0; j < members_.size(); ++j) {
      c.add_vector("member_" + std::to_string(j), members_[j].params());
      if (j < histories_.size() && !histories_[j].empty())
        c.add_vector("loss_history_" + std::to_string(j),
                     Eigen::Map<const Eigen::VectorXd>(histories_[j].data(), static_cast<Eigen::Index>(histories_[j].size())));
    }
  }
  return c;
}

inline SurrogateModel SurrogateModel::from_container(const io::Container& c) {
  if (c.kind() != "surrogate") throw CorruptFile("expected a surrogate snapshot, found '" + c.kind() + "'");
  SurrogateModel m;
  try {
    const auto& meta = c.meta();
    m.config_ = surrogate_config_from_json(meta.at("config"));
    m.config_.threads = 1;
    m.input_dim_ = meta.at("input_dim").get<std::size_t>();
    m.y_mean_ = meta.at("target_mean").get<double>();
    m.y_scale_ = meta.at("target_scale").get<double>();
    m.x_std_.mean = c.matrix("x_mean");
    m.x_std_.scale = c.matrix("x_scale");
    if (m.kind() == SurrogateKind::gp) {
      m.gp_hp_ = gp::GPHyperparams::from_log(c.vector("gp_log_hyperparams"));
      m.gp_state_ = gp::condition(*m.gp_hp_, c.matrix("gp_inputs"), c.vector("gp_targets"));
    } else {
      const auto spec = m.config_.network_spec(m.input_dim_);
      const auto count = meta.at("members").get<std::size_t>();
      for (std::size_t j = 0; j < count; ++j) {
        m.members_.emplace_back(spec, c.vector("member_" + std::to_string(j)));
        const auto hname = "loss_history_" + std::to_string(j);
        if (c.has(hname)) {
          const auto h = c.vector(hname);
          m.histories_.emplace_back(h.data(), h.data() + h.size());
        } else {
          m.histories_.emplace_back();
        }
      }
    }
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("surrogate snapshot: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptFile(std::string("surrogate snapshot: ") + e.what());
  }
  return m;
}

struct ConvergencePoint {
  std::size_t n_e = 0;
  double log_pdf_difference = 0.0;
  double mean_squared_difference = 0.0;
};

struct ConvergenceCurve {
  SurrogateKind kind = SurrogateKind::dnn;
  std::size_t reference = 0;
  std::vector<ConvergencePoint> points;
};

/// sigma_eps at n_e uses the first n_e passes (or members) of the reference
/// run, so the curves are exactly zero at the reference.
inline ConvergenceCurve convergence_study(const SurrogateModel& model, const Eigen::MatrixXd& Q,
                                          std::span<const std::size_t> grid, std::size_t reference,
                                          std::uint64_t seed = 0) {
  if (!model.capabilities().epistemic || model.kind() == SurrogateKind::gp)
    throw NoEpistemicUQ(std::string(to_string(model.kind())) + " has no ensemble to converge");
  if (grid.empty()) throw InvalidArgument("convergence_study: empty n_e grid");
  if (Q.rows() == 0) throw InvalidArgument("convergence_study: no validation rows");
  for (auto g : grid) {
    if (g < 2) throw DegenerateEnsemble("convergence_study: n_e must be >= 2");
    if (g > reference) throw InvalidArgument("convergence_study: reference n_e must be >= every grid value");
  }
  const auto po = model.pass_outputs(Q, reference, seed);
  const auto sigma_at = [&](std::size_t ne) {
    std::vector<double> s(static_cast<std::size_t>(Q.rows()));
    for (Eigen::Index q = 0; q < Q.rows(); ++q) {
      const auto col = po.mu.col(q).head(static_cast<Eigen::Index>(ne));
      const double mean = col.mean();
      s[static_cast<std::size_t>(q)] = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(ne - 1));
    }
    return s;
  };
  const auto ref = sigma_at(reference);
  ConvergenceCurve curve{model.kind(), reference, {}};
  for (auto g : grid) {
    const auto s = sigma_at(g);
    double msd = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) msd += (s[i] - ref[i]) * (s[i] - ref[i]);
    msd /= static_cast<double>(s.size());
    curve.points.push_back({g, metrics::log_pdf_difference(s, ref), msd});
  }
  return curve;
}

}  // namespace uqbench::uq

#endif  // UQBENCH_UQ_HPP
