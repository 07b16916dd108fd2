#ifndef UQBENCH_POSTERIOR_HPP
#define UQBENCH_POSTERIOR_HPP

#include <cmath>

namespace uqbench {

/// Predictive distribution at one query: mean, epistemic std, aleatoric std.
struct Posterior {
  double mu = 0.0;
  double sigma_eps = 0.0;
  double sigma_n = 0.0;

  double total_variance() const noexcept { return sigma_eps * sigma_eps + sigma_n * sigma_n; }
  double total_sigma() const noexcept { return std::sqrt(total_variance()); }
};

}  // namespace uqbench

#endif  // UQBENCH_POSTERIOR_HPP
