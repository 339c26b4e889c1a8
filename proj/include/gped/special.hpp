#pragma once

namespace gped {

// log Gamma for x > 0 (Lanczos, g = 7). Returns exactly 0.0 at x = 1 and
// x = 2 so identities built on flat Dirichlet parameters hold without
// tolerance. Raises a range error for x <= 0.
double log_gamma(double x);

// digamma for x > 0: upward recurrence into the asymptotic regime, then the
// Bernoulli series. Raises a range error for x <= 0.
double digamma(double x);

}  // namespace gped
