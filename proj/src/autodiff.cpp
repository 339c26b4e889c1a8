#include "gped/autodiff.hpp"

#include <cmath>

#include "gped/errors.hpp"
#include "gped/special.hpp"

namespace gped {

int Tape::push(Tensor value, std::array<int, 2> args, std::function<void(Tape&, TapeNode&)> pull) {
  TapeNode node;
  node.value = std::move(value);
  node.args = args;
  node.pull = std::move(pull);
  nodes.push_back(std::move(node));
  return static_cast<int>(nodes.size()) - 1;
}

Tensor& Tape::grad(int id) {
  TapeNode& node = nodes[static_cast<std::size_t>(id)];
  if (node.grad.size() == 0) node.grad = Tensor(node.value.shape);
  return node.grad;
}

void backward(Tape& tape, int root, const Tensor& seed) {
  require(root >= 0 && root < static_cast<int>(tape.nodes.size()), ErrorKind::Range,
          "backward root out of tape");
  require(seed.same_shape(tape.value(root)), ErrorKind::Dimension,
          "backward seed shape " + shape_string(seed.shape) + " != node shape " +
              shape_string(tape.value(root).shape));
  tape.grad(root) = seed;
  for (int id = root; id >= 0; --id) {
    TapeNode& node = tape.nodes[static_cast<std::size_t>(id)];
    if (node.grad.size() == 0 || !node.pull) continue;
    node.pull(tape, node);
  }
}

void backward_scalar(Tape& tape, int root) {
  require(tape.value(root).size() == 1, ErrorKind::Dimension, "backward_scalar on non-scalar node");
  backward(tape, root, Tensor({1}, 1.0));
}

namespace {

void check_2d_match(const Tensor& pred, const Tensor& targets, const char* who) {
  require(pred.rank() == 2, ErrorKind::Dimension, std::string(who) + " expects a 2-D prediction");
  require(pred.same_shape(targets), ErrorKind::Dimension,
          std::string(who) + " prediction " + shape_string(pred.shape) + " vs targets " +
              shape_string(targets.shape));
}

}  // namespace

double cross_entropy_value(const Tensor& pred, const Tensor& targets, double floor) {
  check_2d_match(pred, targets, "cross_entropy");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc -= targets.data[i] * std::log(std::max(pred.data[i], floor));
  }
  return acc;
}

int cross_entropy_node(Tape& tape, int pred, const Tensor& targets, double floor) {
  const Tensor& p = tape.value(pred);
  Tensor out({1}, cross_entropy_value(p, targets, floor));
  Tensor t = targets;
  return tape.push(std::move(out), {pred, -1}, [t, floor](Tape& tp, TapeNode& self) {
    const double up = self.grad.data[0];
    const Tensor& p = tp.value(self.args[0]);
    Tensor& g = tp.grad(self.args[0]);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p.data[i] > floor) g.data[i] -= up * t.data[i] / p.data[i];
    }
  });
}

double l1_value(const Tensor& pred, const Tensor& targets) {
  check_2d_match(pred, targets, "l1");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred.data[i] - targets.data[i]);
  return acc;
}

int l1_node(Tape& tape, int pred, const Tensor& targets) {
  const Tensor& p = tape.value(pred);
  Tensor out({1}, l1_value(p, targets));
  Tensor t = targets;
  return tape.push(std::move(out), {pred, -1}, [t](Tape& tp, TapeNode& self) {
    const double up = self.grad.data[0];
    const Tensor& p = tp.value(self.args[0]);
    Tensor& g = tp.grad(self.args[0]);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p.data[i] - t.data[i];
      if (d > 0.0) {
        g.data[i] += up;
      } else if (d < 0.0) {
        g.data[i] -= up;
      }
    }
  });
}

double label_log_likelihood_value(const Tensor& pred, const std::vector<int>& labels,
                                  double floor) {
  require(pred.rank() == 2, ErrorKind::Dimension, "label_log_likelihood expects 2-D predictions");
  require(pred.dim(0) == labels.size(), ErrorKind::Dimension,
          "label_log_likelihood got " + std::to_string(labels.size()) + " labels for " +
              std::to_string(pred.dim(0)) + " rows");
  const std::size_t c = pred.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c, ErrorKind::Range,
            "label " + std::to_string(labels[i]) + " outside " + std::to_string(c) + " classes");
    acc += std::log(std::max(pred.at2(i, static_cast<std::size_t>(labels[i])), floor));
  }
  return acc;
}

int label_log_likelihood_node(Tape& tape, int pred, const std::vector<int>& labels, double floor) {
  const Tensor& p = tape.value(pred);
  Tensor out({1}, label_log_likelihood_value(p, labels, floor));
  std::vector<int> y = labels;
  return tape.push(std::move(out), {pred, -1}, [y, floor](Tape& tp, TapeNode& self) {
    const double up = self.grad.data[0];
    const Tensor& p = tp.value(self.args[0]);
    Tensor& g = tp.grad(self.args[0]);
    const std::size_t c = p.dim(1);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t j = i * c + static_cast<std::size_t>(y[i]);
      if (p.data[j] > floor) g.data[j] += up / p.data[j];
    }
  });
}

double dirichlet_nll_value(const Tensor& alpha, const Tensor& mean_log_probs) {
  check_2d_match(alpha, mean_log_probs, "dirichlet_nll");
  const std::size_t n = alpha.dim(0), c = alpha.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a0 = 0.0, inner = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double a = alpha.at2(i, j);
      require(std::isfinite(a) && a > 0.0, ErrorKind::Numeric,
              "dirichlet concentration must be finite and positive");
      a0 += a;
      inner += -log_gamma(a) + (a - 1.0) * mean_log_probs.at2(i, j);
    }
    acc -= log_gamma(a0) + inner;
  }
  return acc;
}

int dirichlet_nll_node(Tape& tape, int alpha, const Tensor& mean_log_probs) {
  const Tensor& a = tape.value(alpha);
  Tensor out({1}, dirichlet_nll_value(a, mean_log_probs));
  Tensor lbar = mean_log_probs;
  return tape.push(std::move(out), {alpha, -1}, [lbar](Tape& tp, TapeNode& self) {
    const double up = self.grad.data[0];
    const Tensor& a = tp.value(self.args[0]);
    Tensor& g = tp.grad(self.args[0]);
    const std::size_t n = a.dim(0), c = a.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      double a0 = 0.0;
      for (std::size_t j = 0; j < c; ++j) a0 += a.at2(i, j);
      const double psi0 = digamma(a0);
      for (std::size_t j = 0; j < c; ++j) {
        g.at2(i, j) -= up * (psi0 - digamma(a.at2(i, j)) + lbar.at2(i, j));
      }
    }
  });
}

int slice_cols_node(Tape& tape, int src, std::size_t c0, std::size_t c1) {
  const Tensor& s = tape.value(src);
  require(s.rank() == 2, ErrorKind::Dimension, "slice_cols expects a 2-D node");
  require(c0 < c1 && c1 <= s.dim(1), ErrorKind::Range, "slice_cols bounds out of range");
  const std::size_t n = s.dim(0), k = c1 - c0;
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.at2(i, j) = s.at2(i, c0 + j);
  }
  return tape.push(std::move(out), {src, -1}, [c0, k](Tape& tp, TapeNode& self) {
    Tensor& g = tp.grad(self.args[0]);
    const std::size_t n = self.value.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) g.at2(i, c0 + j) += self.grad.at2(i, j);
    }
  });
}

int add_scaled_node(Tape& tape, int a, int b, double w) {
  require(tape.value(a).size() == 1 && tape.value(b).size() == 1, ErrorKind::Dimension,
          "add_scaled combines scalar nodes");
  Tensor out({1}, tape.value(a).data[0] + w * tape.value(b).data[0]);
  return tape.push(std::move(out), {a, b}, [w](Tape& tp, TapeNode& self) {
    tp.grad(self.args[0]).data[0] += self.grad.data[0];
    tp.grad(self.args[1]).data[0] += w * self.grad.data[0];
  });
}

}  // namespace gped
