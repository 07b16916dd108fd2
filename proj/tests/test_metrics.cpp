#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "uqbench/metrics.hpp"

using namespace uqbench;

namespace {

std::vector<Posterior> random_posteriors(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> mu(-2.0, 2.0), s(0.1, 1.0);
  std::vector<Posterior> p(n);
  for (auto& q : p) q = {mu(rng), s(rng), 0.5 * s(rng)};
  return p;
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -3.0, double hi = 3.0) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

uq::SurrogateModel tiny_model(uq::SurrogateKind k, Eigen::MatrixXd* Xout = nullptr) {
  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd X(20, 2);
  Eigen::VectorXd y(20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    X(i, 0) = u(rng);
    X(i, 1) = u(rng);
    y[i] = std::cos(2.0 * X(i, 0)) + X(i, 1);
  }
  uq::SurrogateConfig c;
  c.kind = k;
  c.hidden = {8};
  c.epochs = 20;
  c.n_e = k == uq::SurrogateKind::nn ? 0 : 4;
  c.gp.restarts = 2;
  c.gp.iterations = 300;
  if (Xout) *Xout = X;
  return uq::train_surrogate(X, y, c);
}

}  // namespace

TEST(Moments, PopulationMeanAndVariance) {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  const auto [m, var] = metrics::mean_variance(v);
  EXPECT_EQ(m, 2.5);
  EXPECT_EQ(var, 1.25);
  const std::vector<double> sym = {-2.0, -1.0, 0.0, 1.0, 2.0};
  EXPECT_NEAR(metrics::skewness(sym), 0.0, 1e-15);
}

TEST(NormalizedResiduals, PerfectPredictionsGiveZero) {
  auto p = random_posteriors(50, 1);
  std::vector<double> y(p.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = p[i].mu;
  const auto r = metrics::normalized_residuals(p, y);
  for (double z : r.z_values) EXPECT_EQ(z, 0.0);
  EXPECT_EQ(r.variance, 0.0);
  EXPECT_EQ(r.mean, 0.0);
}

TEST(NormalizedResiduals, UsesTotalSigma) {
  const std::vector<Posterior> p = {{1.0, 3.0, 4.0}};
  const std::vector<double> y = {11.0};
  EXPECT_DOUBLE_EQ(metrics::normalized_residuals(p, y).z_values[0], 2.0);
}

TEST(NormalizedResiduals, ShiftInvariantExactlyOnDyadicValues) {
  std::vector<Posterior> p = {{0.25, 0.5, 0.0}, {-1.5, 0.125, 0.25}, {3.0, 1.0, 1.0}};
  std::vector<double> y = {1.0, -1.375, 2.5};
  const auto a = metrics::normalized_residuals(p, y);
  for (auto& q : p) q.mu += 64.0;
  for (auto& v : y) v += 64.0;
  const auto b = metrics::normalized_residuals(p, y);
  EXPECT_EQ(a.z_values, b.z_values);
}

TEST(NormalizedResiduals, ShiftInvariantOnRandomValues) {
  auto p = random_posteriors(200, 2);
  auto y = random_values(200, 3);
  const auto a = metrics::normalized_residuals(p, y);
  for (auto& q : p) q.mu += 0.3;
  for (auto& v : y) v += 0.3;
  const auto b = metrics::normalized_residuals(p, y);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(a.z_values[i], b.z_values[i], 1e-12);
}

TEST(NormalizedResiduals, HalvedSigmaQuadruplesVariance) {
  auto p = random_posteriors(300, 4);
  const auto y = random_values(300, 5);
  const auto a = metrics::normalized_residuals(p, y);
  for (auto& q : p) {
    q.sigma_eps *= 0.5;
    q.sigma_n *= 0.5;
  }
  const auto b = metrics::normalized_residuals(p, y);
  EXPECT_NEAR(b.variance, 4.0 * a.variance, 1e-12 * b.variance);
}

TEST(NormalizedResiduals, HistogramConservesMassAndMatchesDirectVariance) {
  const auto p = random_posteriors(777, 6);
  const auto y = random_values(777, 7);
  const auto r = metrics::normalized_residuals(p, y);
  EXPECT_EQ(r.histogram.total(), 777u);
  for (std::size_t b = 0; b + 1 < r.histogram.edges.size(); ++b) EXPECT_LT(r.histogram.edges[b], r.histogram.edges[b + 1]);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mean += (y[i] - p[i].mu) / p[i].total_sigma();
  mean /= 777.0;
  for (std::size_t i = 0; i < y.size(); ++i) var += std::pow((y[i] - p[i].mu) / p[i].total_sigma() - mean, 2);
  var /= 777.0;
  EXPECT_NEAR(r.variance, var, 1e-12);
  double integral = 0.0;
  for (std::size_t b = 0; b < r.histogram.bins(); ++b) integral += r.histogram.density(b) * r.histogram.width(b);
  EXPECT_NEAR(integral, 1.0, 1e-12);
  ASSERT_EQ(r.reference.size(), r.histogram.bins());
  EXPECT_NEAR(r.reference[0], metrics::standard_normal_pdf(r.histogram.center(0)), 1e-15);
}

TEST(NormalizedResiduals, ZeroUncertaintyRefused) {
  std::vector<Posterior> p = random_posteriors(5, 8);
  p[3].sigma_eps = 0.0;
  p[3].sigma_n = 0.0;
  const auto y = random_values(5, 9);
  EXPECT_THROW(metrics::normalized_residuals(p, y), ZeroUncertainty);
  EXPECT_THROW(metrics::normalized_residuals(std::span<const Posterior>{}, std::span<const double>{}), InvalidArgument);
  EXPECT_THROW(metrics::normalized_residuals(p, std::span<const double>(y).first(4)), DimensionMismatch);
}

TEST(NormalizedResiduals, PlainNetworkRefused) {
  Eigen::MatrixXd X;
  const auto m = tiny_model(uq::SurrogateKind::nn, &X);
  EXPECT_THROW(metrics::normalized_residuals(m, X, Eigen::VectorXd::Zero(X.rows())), ZeroUncertainty);
}

// Targets drawn from the model's own predictive Gaussians are calibrated by construction.
TEST(NormalizedResiduals, SelfConsistentDataIsCalibrated) {
  const auto m = tiny_model(uq::SurrogateKind::gp);
  Rng rng = make_rng(10);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Eigen::MatrixXd Q(1000, 2);
  for (Eigen::Index i = 0; i < Q.size(); ++i) Q.data()[i] = u(rng);
  const auto pred = m.predict(Q);
  std::normal_distribution<double> z;
  Eigen::VectorXd y(1000);
  for (Eigen::Index i = 0; i < 1000; ++i) y[i] = pred[static_cast<std::size_t>(i)].mu + pred[static_cast<std::size_t>(i)].total_sigma() * z(rng);
  const auto r = metrics::normalized_residuals(m, Q, y);
  EXPECT_GE(r.variance, 0.85);
  EXPECT_LE(r.variance, 1.15);
  EXPECT_NEAR(r.mean, 0.0, 0.1);
}

TEST(Uncertainty, RequiresEpistemicModel) {
  Eigen::MatrixXd X;
  const auto nn = tiny_model(uq::SurrogateKind::nn, &X);
  EXPECT_THROW(metrics::uncertainty_distribution(nn, X), NoEpistemicUQ);
  const auto gnn = tiny_model(uq::SurrogateKind::gnn);
  EXPECT_THROW(metrics::uncertainty_distribution(gnn, X), NoEpistemicUQ);
  const auto enn = tiny_model(uq::SurrogateKind::enn);
  const auto r = metrics::uncertainty_distribution(enn, X);
  EXPECT_EQ(r.sigma_eps_values.size(), 20u);
  EXPECT_FALSE(r.sigma_n.has_value());
  for (double s : r.sigma_eps_values) EXPECT_GE(s, 0.0);
}

TEST(Uncertainty, GpWithoutDataRefused) {
  gp::GPHyperparams hp;
  hp.theta = Eigen::VectorXd::Ones(2);
  EXPECT_THROW(metrics::uncertainty_distribution(gp::GPPosteriorState{}, hp, Eigen::MatrixXd::Zero(3, 2)), NoEpistemicUQ);
}

TEST(Uncertainty, GpFarPointsMoreUncertain) {
  Eigen::MatrixXd X;
  const auto m = tiny_model(uq::SurrogateKind::gp, &X);
  const Eigen::MatrixXd far = X.array() + 50.0;
  const auto near_r = metrics::uncertainty_distribution(m, X);
  const auto far_r = metrics::uncertainty_distribution(m, far);
  for (std::size_t i = 0; i < near_r.sigma_eps_values.size(); ++i)
    EXPECT_GT(far_r.sigma_eps_values[i], near_r.sigma_eps_values[i]);
  ASSERT_TRUE(near_r.sigma_n.has_value());
}

TEST(Acquisition, ZeroSpreadGivesZero) {
  EXPECT_EQ(metrics::acquisition(Posterior{1.0, 0.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(metrics::acquisition(Posterior{1.0, 3.0, 2.0}, 0.5), 4.5);
}

TEST(Acquisition, RankingFollowsEpistemicVariance) {
  Eigen::MatrixXd X;
  const auto m = tiny_model(uq::SurrogateKind::enn, &X);
  Eigen::MatrixXd grid(100, 2);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) grid.row(10 * i + j) << -2.0 + 4.0 * i / 9.0, -2.0 + 4.0 * j / 9.0;
  const auto a = metrics::acquisition(m, grid);
  const auto pred = m.predict(grid);
  std::vector<std::size_t> by_a(100), by_s(100);
  std::iota(by_a.begin(), by_a.end(), 0);
  std::iota(by_s.begin(), by_s.end(), 0);
  std::stable_sort(by_a.begin(), by_a.end(), [&](auto i, auto j) { return a[i] > a[j]; });
  std::stable_sort(by_s.begin(), by_s.end(),
                   [&](auto i, auto j) { return pred[i].sigma_eps * pred[i].sigma_eps > pred[j].sigma_eps * pred[j].sigma_eps; });
  EXPECT_EQ(by_a, by_s);

  const auto scaled = metrics::acquisition(m, grid, [](const auto&) { return 3.0; });
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(scaled[i], 3.0 * a[i], 1e-15 * std::max(1.0, scaled[i]));
  EXPECT_EQ(std::max_element(scaled.begin(), scaled.end()) - scaled.begin(), std::max_element(a.begin(), a.end()) - a.begin());
}

TEST(Acquisition, RequiresEpistemicModel) {
  Eigen::MatrixXd X;
  const auto m = tiny_model(uq::SurrogateKind::nn, &X);
  EXPECT_THROW(metrics::acquisition(m, X), NoEpistemicUQ);
}

TEST(Histogram, BinCountPolicy) {
  // Freedman-Diaconis on 10^5 uniform draws asks for ~ 46 bins.
  const auto v = random_values(100000, 11, 0.0, 1.0);
  const auto b = metrics::shared_binning(v);
  EXPECT_GE(b.bins, 40u);
  EXPECT_LE(b.bins, 50u);
  const std::vector<double> few = {0.0, 1.0, 2.0};
  EXPECT_EQ(metrics::shared_binning(few).bins, metrics::kMinBins);
  auto heavy = random_values(1000, 12, -0.01, 0.01);
  heavy.push_back(1e4);
  EXPECT_EQ(metrics::shared_binning(heavy).bins, metrics::kMaxBins);
}

TEST(Histogram, DegenerateSampleGetsAWindow) {
  const std::vector<double> same(10, 2.0);
  const auto h = metrics::histogram(same);
  EXPECT_EQ(h.total(), 10u);
  EXPECT_LT(h.edges.front(), 2.0);
  EXPECT_GT(h.edges.back(), 2.0);
}

TEST(Histogram, SharedSupportCoversAllSamples) {
  const auto a = random_values(100, 13, 0.0, 1.0), b = random_values(50, 14, 2.0, 5.0);
  const std::span<const double> both[] = {a, b};
  const auto bin = metrics::shared_binning(both);
  EXPECT_EQ(metrics::histogram(a, bin).total(), 100u);
  EXPECT_EQ(metrics::histogram(b, bin).total(), 50u);
  const std::vector<double> outside = {10.0};
  EXPECT_THROW(metrics::histogram(outside, bin), InvalidArgument);
  const std::vector<double> nan = {std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(metrics::histogram(nan), InvalidArgument);
  EXPECT_THROW(metrics::histogram(std::vector<double>{}), InvalidArgument);
}

TEST(Histogram, EdgeValuesLandInsideTheSupport) {
  const std::vector<double> v = {0.0, 0.1, 0.2, 0.30000000000000004, 1.0};
  const auto h = metrics::histogram(v);
  EXPECT_EQ(h.total(), v.size());
  EXPECT_EQ(h.counts.front(), 1u);
  EXPECT_EQ(h.counts.back(), 1u);
}

TEST(LogPdfDifference, ZeroForIdenticalSamplesAndSymmetric) {
  const auto a = random_values(500, 15), b = random_values(500, 16, -2.0, 4.0);
  EXPECT_EQ(metrics::log_pdf_difference(a, a), 0.0);
  EXPECT_GT(metrics::log_pdf_difference(a, b), 0.0);
  EXPECT_DOUBLE_EQ(metrics::log_pdf_difference(a, b), metrics::log_pdf_difference(b, a));
}

TEST(Report, SingleModelBundle) {
  const auto p = random_posteriors(40, 17);
  const auto y = random_values(40, 18);
  const auto b = metrics::report({{"egnn", {true, true}, p}}, y);
  ASSERT_EQ(b.models.size(), 1u);
  EXPECT_EQ(b.validation_size, 40u);
  EXPECT_TRUE(b.models[0].nr.has_value());
  EXPECT_TRUE(b.models[0].sigma_eps.has_value());
  EXPECT_EQ(b.models[0].nr->z_values.size(), 40u);
}

TEST(Report, SharedBinsAndCapabilityGaps) {
  auto p1 = random_posteriors(60, 19), p2 = random_posteriors(60, 20), p3 = random_posteriors(60, 21);
  for (auto& q : p1) q.sigma_n = 0.0;
  for (auto& q : p3) q = {q.mu, 0.0, 0.0};
  const auto y = random_values(60, 22);
  const auto b = metrics::report({{"enn", {true, false}, p1}, {"gp", {true, true}, p2}, {"nn", {false, false}, p3}}, y);
  ASSERT_EQ(b.models.size(), 3u);
  EXPECT_EQ(b.models[0].nr->histogram.edges, b.models[1].nr->histogram.edges);
  EXPECT_EQ(b.models[0].sigma_eps->histogram.edges, b.models[1].sigma_eps->histogram.edges);
  EXPECT_FALSE(b.models[2].nr.has_value());
  EXPECT_FALSE(b.models[2].sigma_eps.has_value());
  for (const auto& m : b.models) EXPECT_EQ(m.predictions.size(), 60u);
  double mse = 0.0;
  for (std::size_t i = 0; i < 60; ++i) mse += std::pow(y[i] - p3[i].mu, 2);
  EXPECT_NEAR(b.models[2].mse, mse / 60.0, 1e-14);
}

TEST(Report, WrittenFilesAreDeterministic) {
  const auto p = random_posteriors(30, 23);
  const auto y = random_values(30, 24);
  const auto b = metrics::report({{"dgnn", {true, true}, p}}, y);
  const auto root = std::filesystem::temp_directory_path() / "uqbench_test_metrics";
  std::filesystem::remove_all(root);
  const auto f1 = metrics::write_bundle(b, root / "a");
  const auto f2 = metrics::write_bundle(b, root / "b");
  ASSERT_EQ(f1.size(), 4u);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    EXPECT_EQ(f1[i].filename(), f2[i].filename());
    EXPECT_EQ(io::sha256_file(f1[i]), io::sha256_file(f2[i]));
  }
  std::ifstream is(root / "a" / "dgnn_nr.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "bin_left,bin_right,count,density,reference");
}
