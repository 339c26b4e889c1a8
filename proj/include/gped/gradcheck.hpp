#pragma once

#include <functional>
#include <vector>

#include "gped/network.hpp"

namespace gped {

// Central finite differences of a scalar function, step scaled by the
// coordinate's magnitude.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double h = 1e-6);

// max_i |a_i - b_i| / max(floor, |a_i|, |b_i|)
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                     double floor = 1e-3);

// Smallest distance to a non-differentiable point met by this forward pass:
// relu-family preactivation magnitudes and max-pool first-versus-second gaps.
// Finite-difference probes are only meaningful when the margin comfortably
// exceeds the probe step, so randomized gradient checks skip configurations
// where this is tiny. In train mode the dropout stream is reseeded from
// `dropout_seed` for every internal pass.
double kink_margin(const Model& m, const Tensor& batch, bool train = false,
                   std::uint64_t dropout_seed = 0);

}  // namespace gped
