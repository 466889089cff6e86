#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "ahue/error.hpp"

namespace ahue {

// lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi t / t_max)) / 2.
inline double cosine_annealed_lr(double lr_max, double lr_min, int epoch, int t_max) {
  if (t_max <= 0) raise(Errc::config_error, "annealing period must be positive");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / t_max;
  return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(phase));
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::size_t parameter_count, const AdamConfig& cfg = {})
      : cfg_(cfg), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  double learning_rate() const { return cfg_.learning_rate; }

  // Writes the parameter delta for this step into `delta`.
  void step(std::span<const double> grads, std::span<double> delta) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      delta[i] = -cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace ahue
