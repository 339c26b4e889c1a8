#include "gped/special.hpp"

#include <cmath>
#include <numbers>

#include "gped/errors.hpp"

namespace gped {

namespace {

constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
};

double lanczos_core(double x) {
  // valid for x >= 0.5
  const double z = x - 1.0;
  double series = kLanczos[0];
  for (int i = 1; i < 9; ++i) series += kLanczos[i] / (z + i);
  const double t = z + kLanczosG + 0.5;
  constexpr double half_log_two_pi = 0.91893853320467274178;
  return half_log_two_pi + (z + 0.5) * std::log(t) - t + std::log(series);
}

}  // namespace

double log_gamma(double x) {
  require(x > 0.0, ErrorKind::Range, "log_gamma domain is x > 0");
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x < 0.5) {
    // reflection keeps the Lanczos core in its accurate range
    const double s = std::sin(std::numbers::pi * x);
    return std::log(std::numbers::pi / s) - lanczos_core(1.0 - x);
  }
  return lanczos_core(x);
}

double digamma(double x) {
  require(x > 0.0, ErrorKind::Range, "digamma domain is x > 0");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // asymptotic series through 1/x^14; error < 1e-15 for x >= 10
  double series = std::log(x) - 0.5 * inv;
  series -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
            inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 -
            inv2 * (1.0 / 12.0)))))));
  return acc + series;
}

}  // namespace gped
