#ifndef UQBENCH_METRICS_HPP
#define UQBENCH_METRICS_HPP

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uqbench/errors.hpp"
#include "uqbench/histogram.hpp"
#include "uqbench/posterior.hpp"
#include "uqbench/uq.hpp"

namespace uqbench::metrics {

using json = nlohmann::json;

/// Population mean and variance.
inline std::pair<double, double> mean_variance(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / static_cast<double>(v.size())};
}

inline double skewness(std::span<const double> v) {
  const auto [m, var] = mean_variance(v);
  if (!(var > 0.0)) return 0.0;
  double s3 = 0.0;
  for (double x : v) s3 += std::pow(x - m, 3);
  return s3 / static_cast<double>(v.size()) / std::pow(var, 1.5);
}

struct NRReport {
  std::vector<double> z_values;
  double mean = 0.0;
  double variance = 0.0;
  Histogram histogram;
  std::vector<double> reference;  // standard-normal density at bin centers
};

/// z_i = (y_i - mu_i) / sqrt(sigma_eps_i^2 + sigma_n_i^2).
inline NRReport normalized_residuals(std::span<const Posterior> pred, std::span<const double> y,
                                     const std::optional<Binning>& binning = std::nullopt) {
  if (pred.size() != y.size()) throw DimensionMismatch("normalized_residuals targets", pred.size(), y.size());
  if (pred.empty()) throw InvalidArgument("normalized_residuals: empty validation set");
  NRReport r;
  r.z_values.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = pred[i].total_sigma();
    if (!(s > 0.0)) throw ZeroUncertainty("zero predictive uncertainty at validation row " + std::to_string(i));
    r.z_values[i] = (y[i] - pred[i].mu) / s;
  }
  std::tie(r.mean, r.variance) = mean_variance(r.z_values);
  r.histogram = histogram(r.z_values, binning.value_or(shared_binning(r.z_values)));
  r.reference.resize(r.histogram.bins());
  for (std::size_t b = 0; b < r.histogram.bins(); ++b) r.reference[b] = standard_normal_pdf(r.histogram.center(b));
  return r;
}

inline NRReport normalized_residuals(const uq::SurrogateModel& model, const Eigen::MatrixXd& Q, const Eigen::VectorXd& y,
                                     const uq::PredictOptions& opt = {}) {
  const auto pred = model.predict(Q, opt);
  return normalized_residuals(pred, std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

struct UncertaintyReport {
  std::vector<double> sigma_eps_values;
  Histogram histogram;
  std::optional<double> sigma_n;  // mean aleatoric std when modeled
};

inline UncertaintyReport uncertainty_distribution(std::span<const Posterior> pred, bool aleatoric,
                                                  const std::optional<Binning>& binning = std::nullopt) {
  if (pred.empty()) throw InvalidArgument("uncertainty_distribution: empty validation set");
  UncertaintyReport r;
  r.sigma_eps_values.reserve(pred.size());
  double sn = 0.0;
  for (const auto& p : pred) {
    r.sigma_eps_values.push_back(p.sigma_eps);
    sn += p.sigma_n;
  }
  r.histogram = histogram(r.sigma_eps_values, binning.value_or(shared_binning(r.sigma_eps_values)));
  if (aleatoric) r.sigma_n = sn / static_cast<double>(pred.size());
  return r;
}

inline void require_epistemic(const uq::SurrogateModel& model) {
  if (!model.capabilities().epistemic)
    throw NoEpistemicUQ(std::string(uq::to_string(model.kind())) + " does not estimate epistemic uncertainty");
}

inline UncertaintyReport uncertainty_distribution(const uq::SurrogateModel& model, const Eigen::MatrixXd& Q,
                                                  const uq::PredictOptions& opt = {}) {
  require_epistemic(model);
  const auto pred = model.predict(Q, opt);
  return uncertainty_distribution(pred, model.capabilities().aleatoric);
}

/// A GP conditioned on no data only restates its prior; it is refused.
inline UncertaintyReport uncertainty_distribution(const gp::GPPosteriorState& s, const gp::GPHyperparams& hp,
                                                  const Eigen::MatrixXd& Q) {
  if (s.A.rows() == 0) throw NoEpistemicUQ("gp conditioned on no training data has only its prior variance");
  const auto pred = gp::predict_batch(s, hp, Q);
  return uncertainty_distribution(pred, true);
}

using WeightFn = std::function<double(const Eigen::Ref<const Eigen::VectorXd>&)>;

/// w(alpha) * sigma_eps(alpha)^2.
inline double acquisition(const Posterior& p, double weight = 1.0) { return weight * p.sigma_eps * p.sigma_eps; }

inline std::vector<double> acquisition(const uq::SurrogateModel& model, const Eigen::MatrixXd& Q, const WeightFn& w = {},
                                       const uq::PredictOptions& opt = {}) {
  require_epistemic(model);
  const auto pred = model.predict(Q, opt);
  std::vector<double> a(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) a[i] = acquisition(pred[i], w ? w(Q.row(static_cast<Eigen::Index>(i)).transpose()) : 1.0);
  return a;
}

struct ModelReport {
  std::string name;
  uq::Capabilities capabilities;
  std::vector<Posterior> predictions;
  std::optional<NRReport> nr;               // absent when the model reports no uncertainty
  std::optional<UncertaintyReport> sigma_eps;  // absent without epistemic UQ
  double mse = 0.0;
};

/// Comparison bundle over models trained on one split; histograms share bins
/// across models.
struct ReportBundle {
  std::vector<ModelReport> models;
  std::size_t validation_size = 0;
};

struct NamedPredictions {
  std::string name;
  uq::Capabilities capabilities;
  std::vector<Posterior> predictions;
};

inline ReportBundle report(const std::vector<NamedPredictions>& entries, std::span<const double> y) {
  ReportBundle b;
  b.validation_size = y.size();
  std::vector<std::vector<double>> zs, ss;
  for (const auto& e : entries) {
    if (e.predictions.size() != y.size()) throw DimensionMismatch("report predictions for " + e.name, y.size(), e.predictions.size());
    ModelReport m{e.name, e.capabilities, e.predictions, std::nullopt, std::nullopt, 0.0};
    for (std::size_t i = 0; i < y.size(); ++i) m.mse += (y[i] - e.predictions[i].mu) * (y[i] - e.predictions[i].mu);
    m.mse /= static_cast<double>(std::max<std::size_t>(1, y.size()));
    b.models.push_back(std::move(m));
  }
  // Shared binning over models that carry each quantity.
  for (auto& m : b.models) {
    if (m.capabilities.epistemic || m.capabilities.aleatoric) {
      std::vector<double> z(y.size());
      bool ok = true;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double s = m.predictions[i].total_sigma();
        if (!(s > 0.0)) {
          ok = false;
          break;
        }
        z[i] = (y[i] - m.predictions[i].mu) / s;
      }
      if (ok) zs.push_back(std::move(z));
    }
    if (m.capabilities.epistemic) {
      std::vector<double> s;
      for (const auto& p : m.predictions) s.push_back(p.sigma_eps);
      ss.push_back(std::move(s));
    }
  }
  std::optional<Binning> zb, sb;
  if (!zs.empty()) {
    std::vector<std::span<const double>> v(zs.begin(), zs.end());
    zb = shared_binning(v);
  }
  if (!ss.empty()) {
    std::vector<std::span<const double>> v(ss.begin(), ss.end());
    sb = shared_binning(v);
  }
  for (auto& m : b.models) {
    if (m.capabilities.epistemic || m.capabilities.aleatoric) {
      try {
        m.nr = normalized_residuals(m.predictions, y, zb);
      } catch (const ZeroUncertainty&) {
        // reported as absent
      }
    }
    if (m.capabilities.epistemic) m.sigma_eps = uncertainty_distribution(m.predictions, m.capabilities.aleatoric, sb);
  }
  return b;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// bin_left,bin_right,count,density[,reference]
inline std::string histogram_csv(const Histogram& h, const std::vector<double>* reference = nullptr) {
  std::ostringstream os;
  os << "bin_left,bin_right,count,density";
  if (reference) os << ",reference";
  os << "\n";
  for (std::size_t b = 0; b < h.bins(); ++b) {
    os << fmt(h.edges[b]) << ',' << fmt(h.edges[b + 1]) << ',' << h.counts[b] << ',' << fmt(h.density(b));
    if (reference) os << ',' << fmt((*reference)[b]);
    os << "\n";
  }
  return os.str();
}

inline json summary_json(const ModelReport& m) {
  json j = {{"model", m.name},
            {"epistemic", m.capabilities.epistemic},
            {"aleatoric", m.capabilities.aleatoric},
            {"validation_size", m.predictions.size()},
            {"mse", m.mse}};
  if (m.nr) {
    j["nr"] = {{"mean", m.nr->mean}, {"variance", m.nr->variance}, {"count", m.nr->z_values.size()}, {"bins", m.nr->histogram.bins()}};
  } else {
    j["nr"] = nullptr;
  }
  if (m.sigma_eps) {
    const auto [mean, var] = mean_variance(m.sigma_eps->sigma_eps_values);
    j["sigma_eps"] = {{"mean", mean}, {"variance", var}, {"bins", m.sigma_eps->histogram.bins()}};
    j["sigma_n"] = m.sigma_eps->sigma_n ? json(*m.sigma_eps->sigma_n) : json(nullptr);
  } else {
    j["sigma_eps"] = nullptr;
    j["sigma_n"] = nullptr;
  }
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidArgument("cannot open '" + p.string() + "' for writing");
  os << s;
}

/// Writes <dir>/<model>_nr.csv, <dir>/<model>_sigma_eps.csv,
/// <dir>/<model>_predictions.csv and <dir>/summary.json. Returns the files written.
inline std::vector<std::filesystem::path> write_bundle(const ReportBundle& b, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  json summary = {{"validation_size", b.validation_size}, {"models", json::array()}};
  for (const auto& m : b.models) {
    summary["models"].push_back(summary_json(m));
    {
      std::ostringstream os;
      os << "mu,sigma_eps,sigma_n\n";
      for (const auto& p : m.predictions) os << fmt(p.mu) << ',' << fmt(p.sigma_eps) << ',' << fmt(p.sigma_n) << "\n";
      files.push_back(dir / (m.name + "_predictions.csv"));
      write_text(files.back(), os.str());
    }
    if (m.nr) {
      files.push_back(dir / (m.name + "_nr.csv"));
      write_text(files.back(), histogram_csv(m.nr->histogram, &m.nr->reference));
    }
    if (m.sigma_eps) {
      files.push_back(dir / (m.name + "_sigma_eps.csv"));
      write_text(files.back(), histogram_csv(m.sigma_eps->histogram));
    }
  }
  files.push_back(dir / "summary.json");
  write_text(files.back(), summary.dump(2) + "\n");
  return files;
}

}  // namespace uqbench::metrics

#endif  // UQBENCH_METRICS_HPP
