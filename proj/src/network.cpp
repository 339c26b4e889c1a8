#include "gped/network.hpp"

#include <cmath>
#include <cstring>

#include "gped/errors.hpp"
#include "gped/linalg.hpp"

namespace gped {

bool is_head_activation(Act a) {
  switch (a) {
    case Act::Softmax:
    case Act::LogSoftmax:
    case Act::Exponential:
    case Act::ReluClamp:
    case Act::SoftmaxExp:
      return true;
    case Act::Relu:
      return false;
  }
  return false;
}

const char* act_name(Act a) {
  switch (a) {
    case Act::Relu: return "relu";
    case Act::Softmax: return "softmax";
    case Act::LogSoftmax: return "log_softmax";
    case Act::Exponential: return "exponential";
    case Act::ReluClamp: return "relu_clamp";
    case Act::SoftmaxExp: return "softmax_exp";
  }
  return "unknown";
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::Activation: return "activation";
    case LayerKind::Dropout: return "dropout";
  }
  return "unknown";
}

LayerDesc LayerDesc::dense(std::size_t in, std::size_t out, int site) {
  LayerDesc d;
  d.kind = LayerKind::Dense;
  d.in = in;
  d.out = out;
  d.multiplier_site = site;
  return d;
}

LayerDesc LayerDesc::conv2d(std::size_t in_c, std::size_t out_c, std::size_t kernel,
                            std::size_t stride, int site) {
  LayerDesc d;
  d.kind = LayerKind::Conv2D;
  d.in_channels = in_c;
  d.out_channels = out_c;
  d.kernel = kernel;
  d.stride = stride;
  d.multiplier_site = site;
  return d;
}

LayerDesc LayerDesc::maxpool2d(std::size_t pool) {
  LayerDesc d;
  d.kind = LayerKind::MaxPool2D;
  d.pool = pool;
  return d;
}

LayerDesc LayerDesc::activation(Act a, double temperature) {
  LayerDesc d;
  d.kind = LayerKind::Activation;
  d.act = a;
  d.temperature = temperature;
  return d;
}

LayerDesc LayerDesc::dropout(double rate) {
  LayerDesc d;
  d.kind = LayerKind::Dropout;
  d.rate = rate;
  return d;
}

namespace {

std::string at_layer(std::size_t i) { return " at layer " + std::to_string(i); }

std::vector<std::size_t> shape_after(const std::vector<std::size_t>& cur, const LayerDesc& layer,
                                     std::size_t index) {
  switch (layer.kind) {
    case LayerKind::Dense: {
      const std::size_t flat = shape_size(cur);
      require(layer.in >= 1 && layer.out >= 1, ErrorKind::Dimension,
              "dense layer needs positive widths" + at_layer(index));
      require(layer.in == flat, ErrorKind::Dimension,
              "dense expects " + std::to_string(layer.in) + " inputs but receives " +
                  std::to_string(flat) + at_layer(index));
      return {layer.out};
    }
    case LayerKind::Conv2D: {
      require(cur.size() == 3, ErrorKind::Dimension,
              "conv2d needs (channels, height, width) input" + at_layer(index));
      require(layer.in_channels >= 1 && layer.out_channels >= 1, ErrorKind::Dimension,
              "conv2d needs positive channel counts" + at_layer(index));
      require(layer.kernel >= 1 && layer.stride >= 1, ErrorKind::Dimension,
              "conv2d needs positive kernel and stride" + at_layer(index));
      require(layer.in_channels == cur[0], ErrorKind::Dimension,
              "conv2d expects " + std::to_string(layer.in_channels) + " channels but receives " +
                  std::to_string(cur[0]) + at_layer(index));
      require(cur[1] >= layer.kernel && cur[2] >= layer.kernel, ErrorKind::Dimension,
              "conv2d kernel larger than its input" + at_layer(index));
      const std::size_t hp = (cur[1] - layer.kernel) / layer.stride + 1;
      const std::size_t wp = (cur[2] - layer.kernel) / layer.stride + 1;
      return {layer.out_channels, hp, wp};
    }
    case LayerKind::MaxPool2D: {
      require(cur.size() == 3, ErrorKind::Dimension,
              "maxpool2d needs (channels, height, width) input" + at_layer(index));
      require(layer.pool >= 1, ErrorKind::Dimension,
              "maxpool2d needs a positive window" + at_layer(index));
      require(cur[1] >= layer.pool && cur[2] >= layer.pool, ErrorKind::Dimension,
              "maxpool2d window larger than its input" + at_layer(index));
      return {cur[0], (cur[1] - layer.pool) / layer.pool + 1, (cur[2] - layer.pool) / layer.pool + 1};
    }
    case LayerKind::Activation: {
      require(layer.temperature > 0.0, ErrorKind::Range,
              "activation temperature must be positive" + at_layer(index));
      if (layer.act == Act::Softmax || layer.act == Act::LogSoftmax ||
          layer.act == Act::SoftmaxExp) {
        require(cur.size() == 1, ErrorKind::Dimension,
                std::string(act_name(layer.act)) + " needs flat features" + at_layer(index));
      }
      if (layer.act == Act::SoftmaxExp) {
        require(cur[0] >= 2, ErrorKind::Dimension,
                "softmax_exp needs at least two outputs" + at_layer(index));
      }
      return cur;
    }
    case LayerKind::Dropout: {
      require(layer.rate >= 0.0 && layer.rate < 1.0, ErrorKind::Range,
              "dropout rate must lie in [0, 1)" + at_layer(index));
      return cur;
    }
  }
  raise(ErrorKind::Contract, "unhandled layer kind");
}

}  // namespace

std::size_t NetworkSpec::output_dim() const {
  const auto shapes = layer_shapes(*this);
  return shape_size(shapes.back());
}

std::optional<Act> NetworkSpec::head() const {
  if (layers.empty()) return std::nullopt;
  const LayerDesc& last = layers.back();
  if (last.kind == LayerKind::Activation && is_head_activation(last.act)) return last.act;
  return std::nullopt;
}

std::vector<std::vector<std::size_t>> layer_shapes(const NetworkSpec& spec) {
  require(!spec.input_shape.empty(), ErrorKind::Dimension, "network input shape is empty");
  for (std::size_t d : spec.input_shape) {
    require(d > 0, ErrorKind::Dimension, "network input shape has a zero axis");
  }
  require(spec.input_shape.size() == 1 || spec.input_shape.size() == 3, ErrorKind::Dimension,
          "network input must be flat (D) or image (C, H, W)");
  require(!spec.layers.empty(), ErrorKind::Dimension, "network needs at least one layer");
  std::vector<std::vector<std::size_t>> out;
  out.reserve(spec.layers.size());
  std::vector<std::size_t> cur = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    cur = shape_after(cur, spec.layers[i], i);
    out.push_back(cur);
  }
  return out;
}

void validate_spec(const NetworkSpec& spec) {
  (void)layer_shapes(spec);
  for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
    const LayerDesc& layer = spec.layers[i];
    if (layer.kind == LayerKind::Activation && is_head_activation(layer.act)) {
      raise(ErrorKind::Contract,
            std::string(act_name(layer.act)) + " head before the final layer" + at_layer(i));
    }
  }
}

std::size_t count_params(const NetworkSpec& spec) {
  (void)layer_shapes(spec);
  std::size_t total = 0;
  for (const LayerDesc& layer : spec.layers) {
    if (layer.kind == LayerKind::Dense) {
      total += layer.in * layer.out + layer.out;
    } else if (layer.kind == LayerKind::Conv2D) {
      total += (layer.in_channels * layer.kernel * layer.kernel + 1) * layer.out_channels;
    }
  }
  return total;
}

std::size_t count_flops(const NetworkSpec& spec) {
  const auto shapes = layer_shapes(spec);
  std::size_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& layer = spec.layers[i];
    if (layer.kind == LayerKind::Dense) {
      total += 2 * layer.in * layer.out + layer.out;
    } else if (layer.kind == LayerKind::Conv2D) {
      const std::size_t field = shapes[i][1] * shapes[i][2];
      total += (2 * layer.in_channels * layer.kernel * layer.kernel + 1) *
               layer.out_channels * field;
    }
  }
  return total;
}

std::vector<ParamSlice> param_layout(const NetworkSpec& spec) {
  (void)layer_shapes(spec);
  std::vector<ParamSlice> slices;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& layer = spec.layers[i];
    ParamSlice s;
    s.layer = i;
    if (layer.kind == LayerKind::Dense) {
      s.weight_count = layer.in * layer.out;
      s.bias_count = layer.out;
    } else if (layer.kind == LayerKind::Conv2D) {
      s.weight_count = layer.out_channels * layer.in_channels * layer.kernel * layer.kernel;
      s.bias_count = layer.out_channels;
    } else {
      continue;
    }
    s.weight_offset = offset;
    offset += s.weight_count;
    s.bias_offset = offset;
    offset += s.bias_count;
    slices.push_back(s);
  }
  return slices;
}

Model init_model(const NetworkSpec& spec, SeededRng& rng) {
  validate_spec(spec);
  Model m;
  m.spec = spec;
  m.slices = param_layout(spec);
  std::size_t total = 0;
  for (const ParamSlice& s : m.slices) total += s.weight_count + s.bias_count;
  m.params.assign(total, 0.0);
  for (const ParamSlice& s : m.slices) {
    const LayerDesc& layer = spec.layers[s.layer];
    const std::size_t fan_in = layer.kind == LayerKind::Dense
                                   ? layer.in
                                   : layer.in_channels * layer.kernel * layer.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.weight_count; ++i) {
      m.params[s.weight_offset + i] = rng.uniform(-bound, bound);
    }
    // biases stay zero
  }
  return m;
}

Model model_with_params(const NetworkSpec& spec, std::vector<double> params) {
  validate_spec(spec);
  Model m;
  m.spec = spec;
  m.slices = param_layout(spec);
  std::size_t total = 0;
  for (const ParamSlice& s : m.slices) total += s.weight_count + s.bias_count;
  require(params.size() == total, ErrorKind::Dimension,
          "parameter vector has " + std::to_string(params.size()) + " entries, layout needs " +
              std::to_string(total));
  m.params = std::move(params);
  return m;
}

namespace {

void check_batch(const NetworkSpec& spec, const Tensor& batch) {
  require(batch.rank() == spec.input_shape.size() + 1, ErrorKind::Dimension,
          "batch rank " + std::to_string(batch.rank()) + " does not add an instance axis to input " +
              shape_string(spec.input_shape));
  require(batch.dim(0) >= 1, ErrorKind::Dimension, "batch is empty");
  for (std::size_t a = 0; a < spec.input_shape.size(); ++a) {
    require(batch.dim(a + 1) == spec.input_shape[a], ErrorKind::Dimension,
            "batch shape " + shape_string(batch.shape) + " does not match input " +
                shape_string(spec.input_shape));
  }
}

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   std::size_t batch, std::size_t in, std::size_t out,
                   std::vector<double>& scratch) {
  scratch.resize(in * out);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) scratch[i * out + o] = w[o * in + i];
  }
  matmul_nn(x, scratch.data(), y, batch, out, in);
  for (std::size_t r = 0; r < batch; ++r) {
    double* row = y + r * out;
    for (std::size_t o = 0; o < out; ++o) row[o] += b[o];
  }
}

void conv_forward(const double* x, const double* w, const double* b, double* y,
                  std::size_t batch, std::size_t cin, std::size_t h, std::size_t wd,
                  std::size_t cout, std::size_t k, std::size_t s, std::size_t hp,
                  std::size_t wp) {
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xn = x + n * cin * h * wd;
    double* yn = y + n * cout * hp * wp;
    for (std::size_t co = 0; co < cout; ++co) {
      const double* wc = w + co * cin * k * k;
      double* yc = yn + co * hp * wp;
      for (std::size_t oy = 0; oy < hp; ++oy) {
        for (std::size_t ox = 0; ox < wp; ++ox) {
          double acc = b[co];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xc = xn + ci * h * wd;
            const double* wk = wc + ci * k * k;
            for (std::size_t dy = 0; dy < k; ++dy) {
              const double* xrow = xc + (oy * s + dy) * wd + ox * s;
              const double* wrow = wk + dy * k;
              for (std::size_t dx = 0; dx < k; ++dx) acc += xrow[dx] * wrow[dx];
            }
          }
          yc[oy * wp + ox] = acc;
        }
      }
    }
  }
}

void conv_backward(const double* x, const double* w, const double* gy, double* gx, double* gw,
                   double* gb, std::size_t batch, std::size_t cin, std::size_t h, std::size_t wd,
                   std::size_t cout, std::size_t k, std::size_t s, std::size_t hp,
                   std::size_t wp) {
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xn = x + n * cin * h * wd;
    const double* gyn = gy + n * cout * hp * wp;
    double* gxn = gx + n * cin * h * wd;
    for (std::size_t co = 0; co < cout; ++co) {
      const double* wc = w + co * cin * k * k;
      double* gwc = gw + co * cin * k * k;
      const double* gyc = gyn + co * hp * wp;
      for (std::size_t oy = 0; oy < hp; ++oy) {
        for (std::size_t ox = 0; ox < wp; ++ox) {
          const double g = gyc[oy * wp + ox];
          if (g == 0.0) continue;
          gb[co] += g;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xc = xn + ci * h * wd;
            double* gxc = gxn + ci * h * wd;
            const double* wk = wc + ci * k * k;
            double* gwk = gwc + ci * k * k;
            for (std::size_t dy = 0; dy < k; ++dy) {
              const std::size_t row = (oy * s + dy) * wd + ox * s;
              for (std::size_t dx = 0; dx < k; ++dx) {
                gxc[row + dx] += g * wk[dy * k + dx];
                gwk[dy * k + dx] += g * xc[row + dx];
              }
            }
          }
        }
      }
    }
  }
}

void pool_forward(const double* x, double* y, std::size_t* argmax, std::size_t batch,
                  std::size_t c, std::size_t h, std::size_t wd, std::size_t p, std::size_t hp,
                  std::size_t wp) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* xc = x + (n * c + ch) * h * wd;
      const std::size_t base = (n * c + ch) * h * wd;
      double* yc = y + (n * c + ch) * hp * wp;
      std::size_t* ac = argmax + (n * c + ch) * hp * wp;
      for (std::size_t oy = 0; oy < hp; ++oy) {
        for (std::size_t ox = 0; ox < wp; ++ox) {
          double best = xc[oy * p * wd + ox * p];
          std::size_t best_at = oy * p * wd + ox * p;
          for (std::size_t dy = 0; dy < p; ++dy) {
            for (std::size_t dx = 0; dx < p; ++dx) {
              const std::size_t at = (oy * p + dy) * wd + ox * p + dx;
              if (xc[at] > best) {
                best = xc[at];
                best_at = at;
              }
            }
          }
          yc[oy * wp + ox] = best;
          ac[oy * wp + ox] = base + best_at;
        }
      }
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void log_softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(xr[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
  }
}

void activation_forward(Act act, double temperature, const Tensor& x, Tensor& y) {
  switch (act) {
    case Act::Relu:
    case Act::ReluClamp:
      for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
      return;
    case Act::Exponential:
      for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::exp(x.data[i] / temperature);
      return;
    case Act::Softmax:
      softmax_rows(x.ptr(), y.ptr(), x.dim(0), x.dim(1));
      return;
    case Act::LogSoftmax:
      log_softmax_rows(x.ptr(), y.ptr(), x.dim(0), x.dim(1));
      return;
    case Act::SoftmaxExp: {
      const std::size_t rows = x.dim(0), cols = x.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.ptr() + r * cols;
        double* yr = y.ptr() + r * cols;
        double mx = xr[0];
        for (std::size_t j = 1; j + 1 < cols; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j + 1 < cols; ++j) {
          yr[j] = std::exp(xr[j] - mx);
          sum += yr[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j + 1 < cols; ++j) yr[j] *= inv;
        yr[cols - 1] = std::exp(xr[cols - 1] / temperature);
      }
      return;
    }
  }
  raise(ErrorKind::Contract, "unhandled activation");
}

void activation_backward(Act act, double temperature, const Tensor& x, const Tensor& y,
                         const Tensor& gy, Tensor& gx) {
  switch (act) {
    case Act::Relu:
    case Act::ReluClamp:
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x.data[i] > 0.0) gx.data[i] += gy.data[i];
      }
      return;
    case Act::Exponential:
      for (std::size_t i = 0; i < x.size(); ++i) {
        gx.data[i] += gy.data[i] * y.data[i] / temperature;
      }
      return;
    case Act::Softmax: {
      const std::size_t rows = y.dim(0), cols = y.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.ptr() + r * cols;
        const double* gr = gy.ptr() + r * cols;
        double* gxr = gx.ptr() + r * cols;
        double inner = 0.0;
        for (std::size_t j = 0; j < cols; ++j) inner += gr[j] * yr[j];
        for (std::size_t j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - inner);
      }
      return;
    }
    case Act::LogSoftmax: {
      const std::size_t rows = y.dim(0), cols = y.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.ptr() + r * cols;
        const double* gr = gy.ptr() + r * cols;
        double* gxr = gx.ptr() + r * cols;
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += gr[j];
        for (std::size_t j = 0; j < cols; ++j) gxr[j] += gr[j] - std::exp(yr[j]) * total;
      }
      return;
    }
    case Act::SoftmaxExp: {
      const std::size_t rows = y.dim(0), cols = y.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = y.ptr() + r * cols;
        const double* gr = gy.ptr() + r * cols;
        double* gxr = gx.ptr() + r * cols;
        double inner = 0.0;
        for (std::size_t j = 0; j + 1 < cols; ++j) inner += gr[j] * yr[j];
        for (std::size_t j = 0; j + 1 < cols; ++j) gxr[j] += yr[j] * (gr[j] - inner);
        gxr[cols - 1] += gr[cols - 1] * yr[cols - 1] / temperature;
      }
      return;
    }
  }
  raise(ErrorKind::Contract, "unhandled activation");
}

std::vector<std::size_t> with_batch(std::size_t batch, const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> s;
  s.reserve(shape.size() + 1);
  s.push_back(batch);
  for (std::size_t d : shape) s.push_back(d);
  return s;
}

}  // namespace

Tensor forward(const Model& m, const Tensor& batch, const ForwardOptions& opt) {
  check_batch(m.spec, batch);
  const auto shapes = layer_shapes(m.spec);
  const std::size_t n = batch.dim(0);
  Tensor cur = batch;
  std::vector<double> scratch;
  std::size_t slice_at = 0;
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    const LayerDesc& layer = m.spec.layers[i];
    switch (layer.kind) {
      case LayerKind::Dense: {
        const ParamSlice& s = m.slices[slice_at++];
        Tensor out(with_batch(n, shapes[i]));
        dense_forward(cur.ptr(), m.params.data() + s.weight_offset,
                      m.params.data() + s.bias_offset, out.ptr(), n, layer.in, layer.out, scratch);
        cur = std::move(out);
        break;
      }
      case LayerKind::Conv2D: {
        const ParamSlice& s = m.slices[slice_at++];
        Tensor out(with_batch(n, shapes[i]));
        conv_forward(cur.ptr(), m.params.data() + s.weight_offset,
                     m.params.data() + s.bias_offset, out.ptr(), n, cur.dim(1), cur.dim(2),
                     cur.dim(3), layer.out_channels, layer.kernel, layer.stride, shapes[i][1],
                     shapes[i][2]);
        cur = std::move(out);
        break;
      }
      case LayerKind::MaxPool2D: {
        Tensor out(with_batch(n, shapes[i]));
        std::vector<std::size_t> argmax(out.size());
        pool_forward(cur.ptr(), out.ptr(), argmax.data(), n, cur.dim(1), cur.dim(2), cur.dim(3),
                     layer.pool, shapes[i][1], shapes[i][2]);
        cur = std::move(out);
        break;
      }
      case LayerKind::Activation: {
        Tensor out(cur.shape);
        activation_forward(layer.act, layer.temperature, cur, out);
        cur = std::move(out);
        break;
      }
      case LayerKind::Dropout: {
        if (!opt.train || layer.rate == 0.0) break;  // evaluation mode: identity
        require(opt.rng != nullptr, ErrorKind::Contract,
                "training forward through dropout needs an rng");
        Tensor out(cur.shape);
        const double keep_scale = 1.0 / (1.0 - layer.rate);
        for (std::size_t e = 0; e < cur.size(); ++e) {
          out.data[e] = opt.rng->uniform() < layer.rate ? 0.0 : cur.data[e] * keep_scale;
        }
        cur = std::move(out);
        break;
      }
    }
  }
  return cur;
}

int forward_tape(const Model& m, const Tensor& batch, Tape& tape, const ForwardOptions& opt) {
  check_batch(m.spec, batch);
  const auto shapes = layer_shapes(m.spec);
  const std::size_t n = batch.dim(0);
  tape.param_grad.assign(m.params.size(), 0.0);
  int cur = tape.push(batch);
  std::vector<double> scratch;
  std::size_t slice_at = 0;
  const double* params = m.params.data();
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    const LayerDesc& layer = m.spec.layers[i];
    switch (layer.kind) {
      case LayerKind::Dense: {
        const ParamSlice& s = m.slices[slice_at++];
        const double* w = params + s.weight_offset;
        const double* b = params + s.bias_offset;
        Tensor out(with_batch(n, shapes[i]));
        dense_forward(tape.value(cur).ptr(), w, b, out.ptr(), n, layer.in, layer.out, scratch);
        const std::size_t in = layer.in, outw = layer.out;
        const std::size_t w_off = s.weight_offset, b_off = s.bias_offset;
        cur = tape.push(std::move(out), {cur, -1}, [w, in, outw, w_off, b_off](Tape& tp, TapeNode& self) {
          const Tensor& x = tp.value(self.args[0]);
          const std::size_t rows = self.value.dim(0);
          Tensor& gx = tp.grad(self.args[0]);
          matmul_nn(self.grad.ptr(), w, gx.ptr(), rows, in, outw, true);
          matmul_tn(self.grad.ptr(), x.ptr(), tp.param_grad.data() + w_off, outw, in, rows, true);
          double* gb = tp.param_grad.data() + b_off;
          for (std::size_t r = 0; r < rows; ++r) {
            const double* grow = self.grad.ptr() + r * outw;
            for (std::size_t o = 0; o < outw; ++o) gb[o] += grow[o];
          }
        });
        break;
      }
      case LayerKind::Conv2D: {
        const ParamSlice& s = m.slices[slice_at++];
        const double* w = params + s.weight_offset;
        const double* b = params + s.bias_offset;
        const Tensor& x = tape.value(cur);
        Tensor out(with_batch(n, shapes[i]));
        conv_forward(x.ptr(), w, b, out.ptr(), n, x.dim(1), x.dim(2), x.dim(3),
                     layer.out_channels, layer.kernel, layer.stride, shapes[i][1], shapes[i][2]);
        const std::size_t w_off = s.weight_offset, b_off = s.bias_offset;
        const std::size_t kk = layer.kernel, st = layer.stride, co = layer.out_channels;
        cur = tape.push(std::move(out), {cur, -1}, [w, w_off, b_off, kk, st, co](Tape& tp, TapeNode& self) {
          const Tensor& x = tp.value(self.args[0]);
          Tensor& gx = tp.grad(self.args[0]);
          conv_backward(x.ptr(), w, self.grad.ptr(), gx.ptr(), tp.param_grad.data() + w_off,
                        tp.param_grad.data() + b_off, x.dim(0), x.dim(1), x.dim(2), x.dim(3), co,
                        kk, st, self.value.dim(2), self.value.dim(3));
        });
        break;
      }
      case LayerKind::MaxPool2D: {
        const Tensor& x = tape.value(cur);
        Tensor out(with_batch(n, shapes[i]));
        std::vector<std::size_t> argmax(out.size());
        pool_forward(x.ptr(), out.ptr(), argmax.data(), n, x.dim(1), x.dim(2), x.dim(3),
                     layer.pool, shapes[i][1], shapes[i][2]);
        int id = tape.push(std::move(out), {cur, -1}, [](Tape& tp, TapeNode& self) {
          Tensor& gx = tp.grad(self.args[0]);
          for (std::size_t e = 0; e < self.value.size(); ++e) {
            gx.data[self.aux_idx[e]] += self.grad.data[e];
          }
        });
        tape.nodes[static_cast<std::size_t>(id)].aux_idx = std::move(argmax);
        cur = id;
        break;
      }
      case LayerKind::Activation: {
        const Tensor& x = tape.value(cur);
        Tensor out(x.shape);
        activation_forward(layer.act, layer.temperature, x, out);
        const Act act = layer.act;
        const double temp = layer.temperature;
        cur = tape.push(std::move(out), {cur, -1}, [act, temp](Tape& tp, TapeNode& self) {
          const Tensor& x = tp.value(self.args[0]);
          Tensor& gx = tp.grad(self.args[0]);
          activation_backward(act, temp, x, self.value, self.grad, gx);
        });
        break;
      }
      case LayerKind::Dropout: {
        if (!opt.train || layer.rate == 0.0) break;
        require(opt.rng != nullptr, ErrorKind::Contract,
                "training forward through dropout needs an rng");
        const Tensor& x = tape.value(cur);
        Tensor out(x.shape);
        std::vector<double> mask(x.size());
        const double keep_scale = 1.0 / (1.0 - layer.rate);
        for (std::size_t e = 0; e < x.size(); ++e) {
          mask[e] = opt.rng->uniform() < layer.rate ? 0.0 : keep_scale;
          out.data[e] = x.data[e] * mask[e];
        }
        int id = tape.push(std::move(out), {cur, -1}, [](Tape& tp, TapeNode& self) {
          Tensor& gx = tp.grad(self.args[0]);
          for (std::size_t e = 0; e < self.value.size(); ++e) {
            gx.data[e] += self.grad.data[e] * self.aux_real[e];
          }
        });
        tape.nodes[static_cast<std::size_t>(id)].aux_real = std::move(mask);
        cur = id;
        break;
      }
    }
  }
  return cur;
}

NetworkSpec fc_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                    std::size_t out_dim, Act head_act, double dropout_rate,
                    double head_temperature) {
  NetworkSpec spec;
  spec.input_shape = {input_dim};
  std::size_t prev = input_dim;
  for (std::size_t h : hidden) {
    spec.layers.push_back(LayerDesc::dense(prev, h));
    spec.layers.push_back(LayerDesc::activation(Act::Relu));
    if (dropout_rate > 0.0) spec.layers.push_back(LayerDesc::dropout(dropout_rate));
    prev = h;
  }
  spec.layers.push_back(LayerDesc::dense(prev, out_dim));
  spec.layers.push_back(LayerDesc::activation(head_act, head_temperature));
  validate_spec(spec);
  return spec;
}

NetworkSpec conv_spec(std::vector<std::size_t> input_chw,
                      const std::vector<std::pair<std::size_t, std::size_t>>& conv_channels_kernel,
                      std::size_t pool, const std::vector<std::size_t>& fc_hidden,
                      std::size_t out_dim, Act head_act, double dropout_rate,
                      double head_temperature) {
  NetworkSpec spec;
  spec.input_shape = std::move(input_chw);
  std::vector<std::size_t> cur = spec.input_shape;
  for (const auto& [channels, kernel] : conv_channels_kernel) {
    spec.layers.push_back(LayerDesc::conv2d(cur[0], channels, kernel));
    cur = shape_after(cur, spec.layers.back(), spec.layers.size() - 1);
    spec.layers.push_back(LayerDesc::activation(Act::Relu));
    spec.layers.push_back(LayerDesc::maxpool2d(pool));
    cur = shape_after(cur, spec.layers.back(), spec.layers.size() - 1);
  }
  std::size_t prev = shape_size(cur);
  for (std::size_t h : fc_hidden) {
    spec.layers.push_back(LayerDesc::dense(prev, h));
    spec.layers.push_back(LayerDesc::activation(Act::Relu));
    if (dropout_rate > 0.0) spec.layers.push_back(LayerDesc::dropout(dropout_rate));
    prev = h;
  }
  spec.layers.push_back(LayerDesc::dense(prev, out_dim));
  spec.layers.push_back(LayerDesc::activation(head_act, head_temperature));
  validate_spec(spec);
  return spec;
}

}  // namespace gped
