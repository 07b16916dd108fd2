#ifndef UQBENCH_HISTOGRAM_HPP
#define UQBENCH_HISTOGRAM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "uqbench/errors.hpp"

namespace uqbench::metrics {

inline constexpr std::size_t kMinBins = 20;
inline constexpr std::size_t kMaxBins = 200;

struct Histogram {
  std::vector<double> edges;  // bins + 1, strictly increasing
  std::vector<std::size_t> counts;

  std::size_t bins() const noexcept { return counts.size(); }
  double width(std::size_t b) const { return edges[b + 1] - edges[b]; }
  std::size_t total() const noexcept {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  double center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
  /// Normalized so that sum(density * width) == 1.
  double density(std::size_t b) const {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(counts[b]) / (static_cast<double>(n) * width(b));
  }
};

/// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(std::span<const double> s, double q) {
  if (s.empty()) throw InvalidArgument("quantile of empty sample");
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

/// Shared support and bin count for a set of samples: the range covers every
/// sample, width from Freedman-Diaconis on the pooled data, bin count clipped
/// to [kMinBins, kMaxBins].
struct Binning {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = kMinBins;

  std::vector<double> edges() const {
    std::vector<double> e(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    e.back() = hi;
    return e;
  }
};

inline Binning shared_binning(std::span<const std::span<const double>> samples) {
  std::vector<double> pooled;
  for (auto s : samples) pooled.insert(pooled.end(), s.begin(), s.end());
  if (pooled.empty()) throw InvalidArgument("histogram of empty sample");
  for (double v : pooled)
    if (!std::isfinite(v)) throw InvalidArgument("histogram: non-finite value");
  std::sort(pooled.begin(), pooled.end());
  Binning b;
  b.lo = pooled.front();
  b.hi = pooled.back();
  if (!(b.hi > b.lo)) {
    // Degenerate sample: a unit-width (or value-scaled) window around it.
    const double half = std::max(0.5, 0.5 * std::abs(b.lo) * 1e-6);
    b.lo -= half;
    b.hi += half;
    b.bins = kMinBins;
    return b;
  }
  const double iqr = quantile_sorted(pooled, 0.75) - quantile_sorted(pooled, 0.25);
  const double w = 2.0 * iqr / std::cbrt(static_cast<double>(pooled.size()));
  std::size_t bins = kMinBins;
  if (w > 0.0) {
    const double raw = std::ceil((b.hi - b.lo) / w);
    bins = raw >= static_cast<double>(kMaxBins) ? kMaxBins : static_cast<std::size_t>(std::max(raw, 1.0));
  }
  b.bins = std::clamp(bins, kMinBins, kMaxBins);
  return b;
}

inline Binning shared_binning(std::span<const double> a) {
  const std::span<const double> one[] = {a};
  return shared_binning(one);
}

inline Histogram histogram(std::span<const double> values, const Binning& b) {
  Histogram h;
  h.edges = b.edges();
  h.counts.assign(b.bins, 0);
  const double span = b.hi - b.lo;
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("histogram: non-finite value");
    if (v < b.lo || v > b.hi) throw InvalidArgument("histogram: value outside the binning support");
    auto k = static_cast<std::size_t>(std::floor((v - b.lo) / span * static_cast<double>(b.bins)));
    k = std::min(k, b.bins - 1);
    // Floating-point edge placement can disagree with the division by one bin.
    while (k > 0 && v < h.edges[k]) --k;
    while (k + 1 < b.bins && v >= h.edges[k + 1]) ++k;
    ++h.counts[k];
  }
  return h;
}

inline Histogram histogram(std::span<const double> values) { return histogram(values, shared_binning(values)); }

inline double standard_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Integral over the shared support of |log p_a - log p_b|, with both
/// densities floored at 1 / (10 n binwidth).
inline double log_pdf_difference(std::span<const double> a, std::span<const double> b) {
  const std::span<const double> both[] = {a, b};
  const auto bin = shared_binning(both);
  const auto ha = histogram(a, bin);
  const auto hb = histogram(b, bin);
  double acc = 0.0;
  for (std::size_t k = 0; k < bin.bins; ++k) {
    const double w = ha.width(k);
    const double fa = 1.0 / (10.0 * static_cast<double>(a.size()) * w);
    const double fb = 1.0 / (10.0 * static_cast<double>(b.size()) * w);
    const double pa = std::max(ha.density(k), fa);
    const double pb = std::max(hb.density(k), fb);
    acc += std::abs(std::log(pa) - std::log(pb)) * w;
  }
  return acc;
}

}  // namespace uqbench::metrics

#endif  // UQBENCH_HISTOGRAM_HPP
