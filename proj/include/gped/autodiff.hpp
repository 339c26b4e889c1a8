#pragma once

#include <array>
#include <functional>
#include <vector>

#include "gped/tensor.hpp"

namespace gped {

struct Tape;

struct TapeNode {
  Tensor value;
  Tensor grad;  // allocated on first touch during backward
  std::array<int, 2> args{-1, -1};
  std::function<void(Tape&, TapeNode&)> pull;  // empty for leaves
  std::vector<std::size_t> aux_idx;            // e.g. pool argmax positions
  std::vector<double> aux_real;                // e.g. dropout mask
};

// Reverse-mode tape over whole tensors. Layer and loss implementations push
// nodes whose `pull` closure routes the node's gradient into its arguments
// and, for parametered layers, into `param_grad`.
struct Tape {
  std::vector<TapeNode> nodes;
  std::vector<double> param_grad;  // aligned with the model's flat parameters

  int push(Tensor value, std::array<int, 2> args = {-1, -1},
           std::function<void(Tape&, TapeNode&)> pull = {});
  Tensor& value(int id) { return nodes[static_cast<std::size_t>(id)].value; }
  const Tensor& value(int id) const { return nodes[static_cast<std::size_t>(id)].value; }

  // gradient buffer for a node, zero-initialized on first access
  Tensor& grad(int id);
};

// Seeds d(root)/d(root) = seed and sweeps the tape in reverse creation order.
void backward(Tape& tape, int root, const Tensor& seed);
// Convenience for scalar roots: seed = [1].
void backward_scalar(Tape& tape, int root);

// ---- loss / reduction nodes (all return scalar nodes of shape {1}) ----

// sum_{i,c} -target[i,c] * ln(max(pred[i,c], floor))
int cross_entropy_node(Tape& tape, int pred, const Tensor& targets, double floor = 1e-12);

// sum_{i,c} |pred[i,c] - target[i,c]|   (subgradient 0 at exact ties)
int l1_node(Tape& tape, int pred, const Tensor& targets);

// sum_i ln(max(pred[i, labels[i]], floor))
int label_log_likelihood_node(Tape& tape, int pred, const std::vector<int>& labels,
                              double floor = 1e-12);

// sum_i -( lnG(a0_i) - sum_c lnG(a_ic) + sum_c (a_ic - 1) * mean_log_probs[i,c] ),
// a0_i = sum_c a_ic. Backward uses digamma.
int dirichlet_nll_node(Tape& tape, int alpha, const Tensor& mean_log_probs);

// columns [c0, c1) of a 2-D node
int slice_cols_node(Tape& tape, int src, std::size_t c0, std::size_t c1);

// a + w * b for scalar nodes
int add_scaled_node(Tape& tape, int a, int b, double w);

// ---- plain value twins used by finite-difference oracles and evaluation ----

double cross_entropy_value(const Tensor& pred, const Tensor& targets, double floor = 1e-12);
double l1_value(const Tensor& pred, const Tensor& targets);
double label_log_likelihood_value(const Tensor& pred, const std::vector<int>& labels,
                                  double floor = 1e-12);
double dirichlet_nll_value(const Tensor& alpha, const Tensor& mean_log_probs);

}  // namespace gped
