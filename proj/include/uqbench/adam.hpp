#ifndef UQBENCH_ADAM_HPP
#define UQBENCH_ADAM_HPP

#include <Eigen/Dense>

#include <cmath>

namespace uqbench {

/// Adam over a flat parameter vector.
class Adam {
 public:
  struct Config {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam() = default;
  Adam(Eigen::Index size, Config cfg) : cfg_(cfg), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  /// Bias-corrected update direction for `grad`, already scaled by `lr`.
  Eigen::VectorXd delta(const Eigen::VectorXd& grad, double lr) {
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    return -lr * (m_ / c1).array() / ((v_ / c2).array().sqrt() + cfg_.epsilon);
  }

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) { params += delta(grad, cfg_.learning_rate); }

  const Config& config() const noexcept { return cfg_; }
  long iterations() const noexcept { return t_; }

 private:
  Config cfg_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace uqbench

#endif  // UQBENCH_ADAM_HPP
