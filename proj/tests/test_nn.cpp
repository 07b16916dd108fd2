#include <gtest/gtest.h>

#include <random>

#include "uqbench/nn.hpp"

using namespace uqbench;
using nn::Head;
using nn::LossKind;
using nn::Mode;
using nn::Network;
using nn::NetworkSpec;

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index r, Eigen::Index c, double lo, double hi, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

NetworkSpec small_spec(Head head, bool variational, double rd = 0.0) {
  NetworkSpec s;
  s.input_dim = 3;
  s.hidden = {8, 8};
  s.head = head;
  s.variational = variational;
  s.dropout_rate = rd;
  return s;
}

// Random parameters so no ReLU sits exactly on its kink.
Network randomized(const NetworkSpec& spec, std::uint64_t seed) {
  Network net(spec, seed);
  auto& p = net.params();
  p = uniform_matrix(p.size(), 1, -0.8, 0.8, seed + 1).col(0);
  if (spec.variational)
    for (std::size_t l = 0; l < spec.layers(); ++l) {
      net.rho_weight(l).array() -= 3.0;
      net.rho_bias(l).array() -= 3.0;
    }
  return net;
}

// max over parameters of |analytic - fd| / max(|analytic|, |fd|, floor)
double gradient_error(const Network& net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, LossKind kind,
                      const nn::LossOptions& opt, const nn::Noise& noise) {
  const auto g = net.loss(X, y, kind, opt, noise).gradient;
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    Network p = net, m = net;
    p.params()[k] += h;
    m.params()[k] -= h;
    const double fd = (p.loss(X, y, kind, opt, noise).value - m.loss(X, y, kind, opt, noise).value) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[k]), 1e-3});
    worst = std::max(worst, std::abs(fd - g[k]) / denom);
  }
  return worst;
}

}  // namespace

TEST(Spec, Validation) {
  NetworkSpec s;
  s.dropout_rate = 1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.hidden = {4, 0};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.input_dim = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.init_sigma_n = s.sigma_floor;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Spec, DropoutSkipsFirstHiddenLayer) {
  auto s = small_spec(Head::deterministic, false, 0.3);
  EXPECT_FALSE(s.drops_before(0));
  EXPECT_TRUE(s.drops_before(1));
  EXPECT_TRUE(s.drops_before(2));
  s.dropout_rate = 0.0;
  EXPECT_FALSE(s.drops_before(2));
}

TEST(Network, ParameterCount) {
  EXPECT_EQ(Network(small_spec(Head::deterministic, false), 1).num_params(), 3u * 8 + 8 + 8 * 8 + 8 + 8 + 1);
  EXPECT_EQ(Network(small_spec(Head::gaussian, false), 1).num_params(), 3u * 8 + 8 + 8 * 8 + 8 + 8 + 1 + 1);
  EXPECT_EQ(Network(small_spec(Head::gaussian, true), 1).num_params(), 2 * (3u * 8 + 8 + 8 * 8 + 8 + 8 + 1) + 1);
  EXPECT_THROW(Network(small_spec(Head::deterministic, false), Eigen::VectorXd::Zero(3)), DimensionMismatch);
}

TEST(Network, InitialSigmaN) {
  Network net(small_spec(Head::gaussian, false), 3);
  EXPECT_NEAR(net.sigma_n(), 0.1, 1e-15);
  EXPECT_EQ(Network(small_spec(Head::deterministic, false), 3).sigma_n(), 0.0);
}

TEST(Forward, SingleLinearLayerByHand) {
  NetworkSpec s;
  s.input_dim = 2;
  s.hidden = {};
  Network net(s, 0);
  net.weight(0) << 1.5, -2.0;
  net.bias(0) << 0.25;
  Eigen::MatrixXd X(2, 2);
  X << 1.0, 1.0, -2.0, 0.5;
  const auto out = net.forward(X, Mode::infer_deterministic, nn::Noise{});
  EXPECT_DOUBLE_EQ(out.mu[0], 1.5 - 2.0 + 0.25);
  EXPECT_DOUBLE_EQ(out.mu[1], -3.0 - 1.0 + 0.25);
}

TEST(Forward, ReluHiddenLayerByHand) {
  NetworkSpec s;
  s.input_dim = 1;
  s.hidden = {2};
  Network net(s, 0);
  net.weight(0) << 1.0, -1.0;
  net.bias(0) << 0.0, 0.5;
  net.weight(1) << 2.0, 3.0;
  net.bias(1) << -1.0;
  Eigen::MatrixXd X(1, 1);
  X << 2.0;
  // hidden = relu(2, -1.5) = (2, 0); output = 4 - 1
  EXPECT_DOUBLE_EQ(net.forward(X, Mode::infer_deterministic, nn::Noise{}).mu[0], 3.0);
}

TEST(Forward, NoDropoutMeansNoRandomness) {
  const auto spec = small_spec(Head::deterministic, false, 0.0);
  const Network net(spec, 5);
  const auto X = uniform_matrix(10, 3, -1, 1, 6);
  Rng a = make_rng(1), b = make_rng(2);
  EXPECT_EQ(net.forward(X, Mode::infer_stochastic, a).mu, net.forward(X, Mode::infer_stochastic, b).mu);
}

TEST(Forward, DeterministicInferenceIgnoresDropout) {
  const Network net(small_spec(Head::deterministic, false, 0.5), 5);
  const auto X = uniform_matrix(10, 3, -1, 1, 6);
  Rng a = make_rng(1), b = make_rng(2);
  EXPECT_EQ(net.forward(X, Mode::infer_deterministic, a).mu, net.forward(X, Mode::infer_deterministic, b).mu);
  EXPECT_NE(net.forward(X, Mode::infer_stochastic, a).mu, net.forward(X, Mode::infer_stochastic, b).mu);
}

// Inverted dropout is unbiased through one (linear) output layer.
TEST(Forward, DropoutExpectationMatchesDeterministicPass) {
  NetworkSpec s;
  s.input_dim = 2;
  s.hidden = {16};
  s.dropout_rate = 0.5;
  const Network net(s, 8);
  const Eigen::Index passes = 10000;
  for (std::uint64_t q = 0; q < 3; ++q) {
    const Eigen::RowVectorXd x = uniform_matrix(1, 2, -1, 1, 70 + q);
    const Eigen::MatrixXd X = x.replicate(passes, 1);
    Rng rng = make_rng(q);
    const auto stoch = net.forward(X, Mode::infer_stochastic, rng).mu;
    const double det = net.forward(Eigen::MatrixXd(x), Mode::infer_deterministic, nn::Noise{}).mu[0];
    const double mean = stoch.mean();
    const double se = std::sqrt((stoch.array() - mean).square().sum() / double(passes - 1) / double(passes));
    EXPECT_GT(se, 0.0);
    EXPECT_LT(std::abs(mean - det), 3.0 * se) << "query " << q;
  }
}

TEST(Forward, DropoutMasksHaveTheRightRate) {
  const Network net(small_spec(Head::deterministic, false, 0.3), 1);
  Rng rng = make_rng(4);
  const auto nz = net.sample_noise(2000, rng, Mode::train);
  EXPECT_EQ(nz.masks[0].size(), 0);
  const double kept = nz.masks[1].mean();
  EXPECT_NEAR(kept, 0.7, 0.01);
}

TEST(Forward, PassNoiseDependsOnlyOnRowSeed) {
  const Network net(small_spec(Head::deterministic, false, 0.5), 1);
  const std::vector<std::uint64_t> ab = {11, 22}, ba = {22, 11};
  const auto n1 = net.sample_pass_noise(ab, 99);
  const auto n2 = net.sample_pass_noise(ba, 99);
  for (std::size_t l = 1; l < 3; ++l) {
    EXPECT_EQ(n1.masks[l].row(0), n2.masks[l].row(1));
    EXPECT_EQ(n1.masks[l].row(1), n2.masks[l].row(0));
  }
  const auto n3 = net.sample_pass_noise(ab, 100);
  EXPECT_NE(n1.masks[1], n3.masks[1]);
}

TEST(Forward, FrozenVariationalStdEqualsDeterministicNet) {
  auto vspec = small_spec(Head::gaussian, true);
  Network vnet = randomized(vspec, 12);
  vnet.freeze_variational_std();
  auto dspec = vspec;
  dspec.variational = false;
  Network dnet(dspec, 0);
  const auto means = Network(small_spec(Head::deterministic, false), 0).num_params();
  dnet.params().head(static_cast<Eigen::Index>(means)) = vnet.params().head(static_cast<Eigen::Index>(means));
  dnet.params()[dnet.log_sigma_index()] = vnet.params()[vnet.log_sigma_index()];
  const auto X = uniform_matrix(20, 3, -1, 1, 13);
  Rng rng = make_rng(5);
  const auto v = vnet.forward(X, Mode::infer_stochastic, rng);
  const auto d = dnet.forward(X, Mode::infer_deterministic, nn::Noise{});
  EXPECT_EQ(v.mu, d.mu);
  EXPECT_EQ(v.sigma_n, d.sigma_n);
}

TEST(Forward, VariationalPassesDiffer) {
  const Network net = randomized(small_spec(Head::gaussian, true), 14);
  const auto X = uniform_matrix(4, 3, -1, 1, 15);
  Rng rng = make_rng(6);
  EXPECT_NE(net.forward(X, Mode::infer_stochastic, rng).mu, net.forward(X, Mode::infer_stochastic, rng).mu);
}

TEST(Loss, MseZeroAtPerfectFit) {
  const Network net = randomized(small_spec(Head::deterministic, false), 16);
  const auto X = uniform_matrix(6, 3, -1, 1, 17);
  const Eigen::VectorXd y = net.forward(X, Mode::infer_deterministic, nn::Noise{}).mu;
  const auto r = net.loss(X, y, LossKind::mse, {}, nn::Noise{}, Mode::infer_deterministic);
  EXPECT_EQ(r.value, 0.0);
  const auto r2 = net.loss(X, y, LossKind::mse, {.l2_weight = 0.01}, nn::Noise{}, Mode::infer_deterministic);
  double norm = 0.0;
  for (std::size_t l = 0; l < 3; ++l) norm += net.weight(l).squaredNorm();
  EXPECT_NEAR(r2.value, 0.01 * norm, 1e-12);
}

TEST(Loss, NllAtUnitSigmaIsHalfLogTwoPi) {
  auto spec = small_spec(Head::gaussian, false);
  spec.sigma_floor = 0.0;
  Network net = randomized(spec, 18);
  net.params()[net.log_sigma_index()] = 0.0;
  const auto X = uniform_matrix(5, 3, -1, 1, 19);
  const Eigen::VectorXd y = net.forward(X, Mode::infer_deterministic, nn::Noise{}).mu;
  const auto r = net.loss(X, y, LossKind::nll, {}, nn::Noise{}, Mode::infer_deterministic);
  EXPECT_NEAR(r.value, 0.9189385332, 1e-9);
}

TEST(Loss, HeadMismatchRejected) {
  const Network det(small_spec(Head::deterministic, false), 1);
  const auto X = uniform_matrix(2, 3, -1, 1, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(det.loss(X, y, LossKind::nll, {}, nn::Noise{}), InvalidArgument);
  EXPECT_THROW(det.loss(X, y, LossKind::elbo, {}, nn::Noise{}), InvalidArgument);
  EXPECT_THROW(det.loss(X, Eigen::VectorXd::Zero(3), LossKind::mse, {}, nn::Noise{}), DimensionMismatch);
}

TEST(Loss, KlClosedForm) {
  NetworkSpec s;
  s.input_dim = 1;
  s.hidden = {};
  s.variational = true;
  s.prior_sigma = 2.0;
  Network net(s, 0);
  net.weight(0)(0, 0) = 0.5;
  net.bias(0)[0] = -1.0;
  net.rho_weight(0)(0, 0) = nn::inverse_softplus(0.3);
  net.rho_bias(0)[0] = nn::inverse_softplus(2.0);
  auto kl = [](double mu, double sd, double p) { return std::log(p / sd) + (sd * sd + mu * mu) / (2 * p * p) - 0.5; };
  EXPECT_NEAR(net.kl_divergence(), kl(0.5, 0.3, 2.0) + kl(-1.0, 2.0, 2.0), 1e-12);
}

TEST(Loss, KlVanishesAtThePrior) {
  NetworkSpec s;
  s.input_dim = 2;
  s.hidden = {3};
  s.variational = true;
  Network net(s, 0);
  for (std::size_t l = 0; l < 2; ++l) {
    net.weight(l).setZero();
    net.bias(l).setZero();
    net.rho_weight(l).setConstant(nn::inverse_softplus(1.0));
    net.rho_bias(l).setConstant(nn::inverse_softplus(1.0));
  }
  EXPECT_NEAR(net.kl_divergence(), 0.0, 1e-12);
}

TEST(Loss, ElboAddsScaledKl) {
  const Network net = randomized(small_spec(Head::gaussian, true), 20);
  const auto X = uniform_matrix(6, 3, -1, 1, 21);
  const Eigen::VectorXd y = uniform_matrix(6, 1, -1, 1, 22).col(0);
  Rng rng = make_rng(7);
  const auto nz = net.sample_noise(6, rng, Mode::train);
  const auto nll = net.loss(X, y, LossKind::nll, {}, nz);
  const auto elbo = net.loss(X, y, LossKind::elbo, {.kl_scale = 0.5, .n_train = 40}, nz);
  EXPECT_NEAR(elbo.data_term, nll.data_term, 1e-14);
  EXPECT_NEAR(elbo.value, nll.value + 0.5 * net.kl_divergence() / 40.0, 1e-10);
}

TEST(Gradient, MseHead) {
  const Network net = randomized(small_spec(Head::deterministic, false), 30);
  const auto X = uniform_matrix(7, 3, -1, 1, 31);
  const Eigen::VectorXd y = uniform_matrix(7, 1, -1, 1, 32).col(0);
  EXPECT_LT(gradient_error(net, X, y, LossKind::mse, {.l2_weight = 0.01}, nn::Noise{}), 1e-5);
}

TEST(Gradient, NllHead) {
  const Network net = randomized(small_spec(Head::gaussian, false), 33);
  const auto X = uniform_matrix(7, 3, -1, 1, 34);
  const Eigen::VectorXd y = uniform_matrix(7, 1, -1, 1, 35).col(0);
  EXPECT_LT(gradient_error(net, X, y, LossKind::nll, {.l2_weight = 0.01}, nn::Noise{}), 1e-5);
}

TEST(Gradient, MseHeadWithFrozenDropoutMasks) {
  const Network net = randomized(small_spec(Head::deterministic, false, 0.3), 36);
  const auto X = uniform_matrix(7, 3, -1, 1, 37);
  const Eigen::VectorXd y = uniform_matrix(7, 1, -1, 1, 38).col(0);
  Rng rng = make_rng(8);
  const auto nz = net.sample_noise(7, rng, Mode::train);
  EXPECT_LT(gradient_error(net, X, y, LossKind::mse, {}, nz), 1e-5);
}

TEST(Gradient, NllHeadWithFrozenDropoutMasks) {
  const Network net = randomized(small_spec(Head::gaussian, false, 0.3), 39);
  const auto X = uniform_matrix(7, 3, -1, 1, 40);
  const Eigen::VectorXd y = uniform_matrix(7, 1, -1, 1, 41).col(0);
  Rng rng = make_rng(9);
  const auto nz = net.sample_noise(7, rng, Mode::train);
  EXPECT_LT(gradient_error(net, X, y, LossKind::nll, {}, nz), 1e-5);
}

TEST(Gradient, ElboWithFrozenWeightNoise) {
  const Network net = randomized(small_spec(Head::gaussian, true), 42);
  const auto X = uniform_matrix(7, 3, -1, 1, 43);
  const Eigen::VectorXd y = uniform_matrix(7, 1, -1, 1, 44).col(0);
  Rng rng = make_rng(10);
  const auto nz = net.sample_noise(7, rng, Mode::train);
  EXPECT_LT(gradient_error(net, X, y, LossKind::elbo, {.kl_scale = 1.0, .n_train = 25}, nz), 1e-5);
}

TEST(Regularization, PenaltyAloneShrinksWeightsEveryStep) {
  Network net = randomized(small_spec(Head::deterministic, false), 45);
  const auto X = uniform_matrix(5, 3, -1, 1, 46);
  const Eigen::VectorXd y = uniform_matrix(5, 1, -1, 1, 47).col(0);
  for (int step = 0; step < 10; ++step) {
    const auto with = net.loss(X, y, LossKind::mse, {.l2_weight = 0.1}, nn::Noise{});
    const auto without = net.loss(X, y, LossKind::mse, {}, nn::Noise{});
    const Eigen::VectorXd penalty = with.gradient - without.gradient;
    std::vector<double> before;
    for (std::size_t l = 0; l < 3; ++l) before.push_back(net.weight(l).norm());
    net.params() -= 0.5 * penalty;
    for (std::size_t l = 0; l < 3; ++l) EXPECT_LT(net.weight(l).norm(), before[l]) << "step " << step << " layer " << l;
  }
}

TEST(Schedule, BatchWeightsSumToOne) {
  for (auto s : {nn::KlSchedule::uniform, nn::KlSchedule::blundell})
    for (std::size_t m : {1u, 2u, 5u, 40u}) {
      double total = 0.0;
      for (std::size_t i = 0; i < m; ++i) total += nn::kl_batch_weight(s, i, m);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  EXPECT_NEAR(nn::kl_batch_weight(nn::KlSchedule::blundell, 0, 3), 4.0 / 7.0, 1e-15);
  EXPECT_NEAR(nn::kl_batch_weight(nn::KlSchedule::blundell, 2, 3), 1.0 / 7.0, 1e-15);
}

TEST(Train, LearnsLinearMap) {
  Eigen::MatrixXd X(50, 1);
  for (int i = 0; i < 50; ++i) X(i, 0) = -1.0 + 2.0 * i / 49.0;
  const Eigen::VectorXd y = 2.0 * X.col(0);
  NetworkSpec s;
  s.input_dim = 1;
  s.hidden = {32, 32};
  const auto res = nn::train(s, X, y, {.epochs = 2000, .batch_size = 16, .learning_rate = 1e-3, .seed = 1});
  const auto Xv = uniform_matrix(200, 1, -1, 1, 48);
  const Eigen::VectorXd pred = res.network.forward(Xv, Mode::infer_deterministic, nn::Noise{}).mu;
  const double mse = (pred - 2.0 * Xv.col(0)).squaredNorm() / 200.0;
  EXPECT_LT(mse, 1e-3);
  EXPECT_EQ(res.loss_history.size(), 2000u);
  EXPECT_LT(res.loss_history.back(), res.loss_history.front());
}

TEST(Train, GaussianHeadRecoversNoiseLevel) {
  Rng rng = make_rng(49);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  Eigen::MatrixXd X(500, 1);
  Eigen::VectorXd y(500);
  for (int i = 0; i < 500; ++i) {
    X(i, 0) = u(rng);
    y[i] = std::sin(X(i, 0)) + noise(rng);
  }
  NetworkSpec s;
  s.input_dim = 1;
  s.hidden = {32, 32};
  s.head = Head::gaussian;
  const auto res = nn::train(s, X, y, {.epochs = 300, .batch_size = 32, .learning_rate = 3e-3, .seed = 2});
  EXPECT_GE(res.network.sigma_n(), 0.07);
  EXPECT_LE(res.network.sigma_n(), 0.13);
}

TEST(Train, DeterministicForSeed) {
  const auto X = uniform_matrix(30, 3, -1, 1, 50);
  const Eigen::VectorXd y = X.rowwise().sum();
  const auto spec = small_spec(Head::gaussian, true, 0.2);
  const nn::TrainConfig cfg{.epochs = 20, .batch_size = 8, .seed = 3};
  const auto a = nn::train(spec, X, y, cfg), b = nn::train(spec, X, y, cfg);
  EXPECT_EQ(a.network.params(), b.network.params());
  EXPECT_EQ(a.loss_history, b.loss_history);
  auto other = cfg;
  other.seed = 4;
  EXPECT_NE(nn::train(spec, X, y, other).network.params(), a.network.params());
}

TEST(Train, NonFiniteLossIsReported) {
  const auto X = uniform_matrix(10, 3, -1, 1, 51);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(10);
  y[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(nn::train(small_spec(Head::deterministic, false), X, y, {.epochs = 2}), DivergedLoss);
}

TEST(Train, ConfigValidation) {
  const auto X = uniform_matrix(4, 3, -1, 1, 52);
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
  const auto s = small_spec(Head::deterministic, false);
  EXPECT_THROW(nn::train(s, X, y, {.epochs = 0}), InvalidArgument);
  EXPECT_THROW(nn::train(s, X, y, {.batch_size = 0}), InvalidArgument);
  EXPECT_THROW(nn::train(s, Eigen::MatrixXd(0, 3), Eigen::VectorXd(0), {}), InvalidArgument);
  EXPECT_THROW(nn::train(s, X, Eigen::VectorXd::Zero(3), {}), DimensionMismatch);
}
