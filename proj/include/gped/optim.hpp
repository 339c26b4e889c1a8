#pragma once

#include <cstddef>
#include <vector>

namespace gped {

// Adam in descent convention: params -= lr * m_hat / (sqrt(v_hat) + eps).
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<double> m, v;

  void reset(std::size_t size);
};

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr);

// Piecewise step-size schedules shared by the sampler and the student
// optimizer. `t` is 1-based.
struct StepSchedule {
  enum class Kind { Constant, PolynomialDecay, Halving };
  Kind kind = Kind::Constant;
  double base = 0.0;
  // polynomial decay: base / (1 + t / scale)^power
  double power = 0.0;
  double scale = 1.0;
  // halving: rate halves after every `interval` steps
  std::size_t interval = 0;

  double at(std::size_t t) const;

  static StepSchedule constant(double rate);
  static StepSchedule polynomial(double base, double power, double scale);
  static StepSchedule halving(double base, std::size_t interval);
};

}  // namespace gped
