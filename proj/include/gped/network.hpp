#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gped/autodiff.hpp"
#include "gped/rng.hpp"
#include "gped/tensor.hpp"

namespace gped {

enum class LayerKind { Dense, Conv2D, MaxPool2D, Activation, Dropout };

enum class Act {
  Relu,         // hidden nonlinearity
  Softmax,      // probability head, rows sum to 1
  LogSoftmax,   // probability head in log space
  Exponential,  // positive head exp(z / temperature)
  ReluClamp,    // nonnegative linear head max(z, 0)
  SoftmaxExp,   // joint head: softmax over first C columns, exp on the last
};

bool is_head_activation(Act a);
const char* act_name(Act a);
const char* layer_kind_name(LayerKind k);

struct LayerDesc {
  LayerKind kind = LayerKind::Dense;

  std::size_t in = 0, out = 0;  // dense

  // conv2d, valid padding
  std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1;

  std::size_t pool = 0;  // maxpool2d window == stride

  Act act = Act::Relu;        // activation
  double temperature = 1.0;   // exponential / joint heads

  double rate = 0.0;  // dropout probability

  // architecture-search site this layer's width binds to (0 = fixed width)
  int multiplier_site = 0;

  static LayerDesc dense(std::size_t in, std::size_t out, int site = 0);
  static LayerDesc conv2d(std::size_t in_c, std::size_t out_c, std::size_t kernel,
                          std::size_t stride = 1, int site = 0);
  static LayerDesc maxpool2d(std::size_t pool);
  static LayerDesc activation(Act a, double temperature = 1.0);
  static LayerDesc dropout(double rate);
};

struct NetworkSpec {
  std::vector<std::size_t> input_shape;  // {D} for flat input, {C, H, W} for images
  std::vector<LayerDesc> layers;

  std::size_t output_dim() const;
  std::optional<Act> head() const;
};

// Output shape of every layer (batch axis excluded), validating adjacency.
// Dense layers flatten whatever precedes them.
std::vector<std::vector<std::size_t>> layer_shapes(const NetworkSpec& spec);
void validate_spec(const NetworkSpec& spec);

// Conventions: dense = 2*in*out + out FLOPs, in*out + out params;
// conv2d = (2*in_c*k^2 + 1) * out_c*H'*W' FLOPs, (in_c*k^2 + 1)*out_c params;
// pooling, activations and dropout count as free.
std::size_t count_params(const NetworkSpec& spec);
std::size_t count_flops(const NetworkSpec& spec);

struct ParamSlice {
  std::size_t layer = 0;  // index into spec.layers
  std::size_t weight_offset = 0, weight_count = 0;
  std::size_t bias_offset = 0, bias_count = 0;
};

// Flat layout: per parametered layer, weights then biases, in layer order.
// Dense weights are [out x in] row-major (a row is one unit's incoming
// weights); conv weights are [out_c x in_c x k x k] (one out-channel's
// incoming block is contiguous).
std::vector<ParamSlice> param_layout(const NetworkSpec& spec);

struct Model {
  NetworkSpec spec;
  std::vector<double> params;
  std::vector<ParamSlice> slices;
};

// Kaiming-uniform fan-in init, bound sqrt(6 / fan_in); biases zero.
Model init_model(const NetworkSpec& spec, SeededRng& rng);
Model model_with_params(const NetworkSpec& spec, std::vector<double> params);

struct ForwardOptions {
  bool train = false;        // dropout active only when true
  SeededRng* rng = nullptr;  // required when train hits a dropout layer
};

// Plain evaluation pass.
Tensor forward(const Model& m, const Tensor& batch, const ForwardOptions& opt = {});

// Recording pass: pushes the batch as node 0 and one node per layer; returns
// the output node id. tape.param_grad is sized to m.params and zeroed.
int forward_tape(const Model& m, const Tensor& batch, Tape& tape, const ForwardOptions& opt = {});

// fixture builders
NetworkSpec fc_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                    std::size_t out_dim, Act head_act, double dropout_rate = 0.0,
                    double head_temperature = 1.0);
NetworkSpec conv_spec(std::vector<std::size_t> input_chw,
                      const std::vector<std::pair<std::size_t, std::size_t>>& conv_channels_kernel,
                      std::size_t pool, const std::vector<std::size_t>& fc_hidden,
                      std::size_t out_dim, Act head_act, double dropout_rate = 0.0,
                      double head_temperature = 1.0);

}  // namespace gped
