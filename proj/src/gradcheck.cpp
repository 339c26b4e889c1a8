#include "gped/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gped/errors.hpp"

namespace gped {

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double h) {
  std::vector<double> grad(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    const double step = h * std::max(1.0, std::fabs(keep));
    at[i] = keep + step;
    const double hi = f(at);
    at[i] = keep - step;
    const double lo = f(at);
    at[i] = keep;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  require(a.size() == b.size(), ErrorKind::Dimension, "max_rel_error needs equal-length vectors");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({floor, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

double kink_margin(const Model& m, const Tensor& batch, bool train, std::uint64_t dropout_seed) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    const LayerDesc& layer = m.spec.layers[i];
    const bool relu_like = layer.kind == LayerKind::Activation &&
                           (layer.act == Act::Relu || layer.act == Act::ReluClamp);
    const bool pool = layer.kind == LayerKind::MaxPool2D;
    if (!relu_like && !pool) continue;

    // input to layer i: run the prefix network, replaying the dropout
    // stream from the start so masks match the full pass
    Tensor in;
    if (i == 0) {
      in = batch;
    } else {
      Model prefix;
      prefix.spec.input_shape = m.spec.input_shape;
      prefix.spec.layers.assign(m.spec.layers.begin(),
                                m.spec.layers.begin() + static_cast<std::ptrdiff_t>(i));
      prefix.slices = param_layout(prefix.spec);
      std::size_t need = 0;
      for (const ParamSlice& s : prefix.slices) need += s.weight_count + s.bias_count;
      prefix.params.assign(m.params.begin(), m.params.begin() + static_cast<std::ptrdiff_t>(need));
      SeededRng replay(dropout_seed);
      ForwardOptions walk{train, train ? &replay : nullptr};
      in = forward(prefix, batch, walk);
    }

    if (relu_like) {
      for (double v : in.data) margin = std::min(margin, std::fabs(v));
    } else {
      const std::size_t c = in.dim(1), h = in.dim(2), w = in.dim(3), p = layer.pool;
      if (p < 2) continue;
      const std::size_t hp = (h - p) / p + 1, wp = (w - p) / p + 1;
      for (std::size_t n = 0; n < in.dim(0); ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* xc = in.ptr() + (n * c + ch) * h * w;
          for (std::size_t oy = 0; oy < hp; ++oy) {
            for (std::size_t ox = 0; ox < wp; ++ox) {
              double best = -std::numeric_limits<double>::infinity();
              double second = best;
              for (std::size_t dy = 0; dy < p; ++dy) {
                for (std::size_t dx = 0; dx < p; ++dx) {
                  const double v = xc[(oy * p + dy) * w + ox * p + dx];
                  if (v > best) {
                    second = best;
                    best = v;
                  } else if (v > second) {
                    second = v;
                  }
                }
              }
              margin = std::min(margin, best - second);
            }
          }
        }
      }
    }
  }
  return margin;
}

}  // namespace gped
