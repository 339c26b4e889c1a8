#include "gped/optim.hpp"

#include <cmath>

#include "gped/errors.hpp"

namespace gped {

void AdamState::reset(std::size_t size) {
  step = 0;
  m.assign(size, 0.0);
  v.assign(size, 0.0);
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr) {
  require(params.size() == grad.size(), ErrorKind::Dimension,
          "adam gradient size does not match parameters");
  if (state.m.size() != params.size()) state.reset(params.size());
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

double StepSchedule::at(std::size_t t) const {
  require(t >= 1, ErrorKind::Range, "schedules are 1-based");
  switch (kind) {
    case Kind::Constant:
      return base;
    case Kind::PolynomialDecay:
      return base / std::pow(1.0 + static_cast<double>(t) / scale, power);
    case Kind::Halving: {
      if (interval == 0) return base;
      const std::size_t halvings = (t - 1) / interval;
      return base * std::pow(0.5, static_cast<double>(halvings));
    }
  }
  return base;
}

StepSchedule StepSchedule::constant(double rate) {
  StepSchedule s;
  s.kind = Kind::Constant;
  s.base = rate;
  return s;
}

StepSchedule StepSchedule::polynomial(double base, double power, double scale) {
  require(scale > 0.0, ErrorKind::Range, "polynomial decay needs a positive scale");
  StepSchedule s;
  s.kind = Kind::PolynomialDecay;
  s.base = base;
  s.power = power;
  s.scale = scale;
  return s;
}

StepSchedule StepSchedule::halving(double base, std::size_t interval) {
  StepSchedule s;
  s.kind = Kind::Halving;
  s.base = base;
  s.interval = interval;
  return s;
}

}  // namespace gped
