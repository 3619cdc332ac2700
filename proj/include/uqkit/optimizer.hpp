#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace uq {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(int dim, AdamConfig cfg = {}) : cfg_(cfg), m_(dim, 0.0), v_(dim, 0.0) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

  void step(std::span<double> theta, std::span<const double> grad) {
    if (theta.size() != m_.size() || grad.size() != m_.size())
      throw std::invalid_argument("Adam::step: dimension mismatch");
    ++t_;
    const double b1c = 1.0 - std::pow(cfg_.beta1, t_);
    const double b2c = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t k = 0; k < m_.size(); ++k) {
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * grad[k];
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
      theta[k] -= cfg_.lr * (m_[k] / b1c) / (std::sqrt(v_[k] / b2c) + cfg_.eps);
    }
  }

  void reset() {
    t_ = 0;
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

inline void sgd_step(std::span<double> theta, std::span<const double> grad, double lr) {
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * grad[k];
}

struct CyclicalSchedule {
  double eps_init = 1e-2;
  double eps_final = 1e-4;
  int steps_total = 20000;
  int t_cycles = 20;
  int t_used = 20;

  void validate() const {
    if (!(eps_init >= eps_final && eps_final > 0.0))
      throw std::invalid_argument("cyclical schedule needs eps_init >= eps_final > 0");
    if (t_used > t_cycles || t_used < 1)
      throw std::invalid_argument("cyclical schedule needs 1 <= t_used <= t_cycles");
    if (steps_total % t_cycles != 0)
      throw std::invalid_argument("steps_total must be divisible by t_cycles");
  }

  int cycle_length() const { return steps_total / t_cycles; }
};

// Half-cosine decay from eps_init to eps_final within each cycle; restarts at
// cycle boundaries.
inline double cosine_lr(int step, const CyclicalSchedule& s) {
  if (step < 0 || step >= s.steps_total)
    throw std::invalid_argument("cosine_lr: step outside schedule");
  const int c = s.cycle_length();
  const int pos = step % c;
  const double phase = (c == 1) ? 0.0 : static_cast<double>(pos) / (c - 1);
  return s.eps_final + (s.eps_init - s.eps_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace uq
