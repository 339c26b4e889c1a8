#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gped/dataset.hpp"
#include "gped/network.hpp"
#include "gped/optim.hpp"
#include "gped/rng.hpp"

namespace gped {

// Spherical Gaussian prior on the flat parameter vector:
// grad log p(theta) = -precision * (theta - mean).
struct GaussianPrior {
  double mean = 0.0;
  double precision = 10.0;
};

struct SgldConfig {
  std::size_t total_steps = 0;  // T
  std::size_t burn_in = 0;      // B
  std::size_t thinning = 1;     // H
  std::size_t batch_size = 1;   // M
  StepSchedule step_size;       // eta_t
  bool inject_noise = true;     // false reduces the transition to plain SGD
};

// Retention predicate for 1-based step t: past burn-in and on the thinning
// grid. B == T keeps nothing; H == 1, B == 0 keeps every step.
bool retained(std::size_t t, std::size_t burn_in, std::size_t thinning);

struct SamplerState {
  std::vector<double> theta;
  std::size_t t = 0;  // completed transitions
  SeededRng rng;      // consumed as: minibatch indices, then noise draws
};

// Minibatch log-likelihood gradient of the target: fills `grad` (sized like
// theta) with sum_{i in batch} grad_theta log p(y_i | x_i, theta).
using LogLikGrad = std::function<void(const std::vector<double>& theta,
                                      const std::vector<std::size_t>& batch,
                                      std::vector<double>& grad)>;

// One transition:
//   theta += (eta/2) * (grad log prior + (N/M) * minibatch grad) + z,
//   z ~ N(0, eta I) when inject_noise.
// `grad` must already hold the minibatch log-likelihood gradient.
void sgld_step(SamplerState& state, const GaussianPrior& prior, std::size_t data_size,
               std::size_t batch_size, const std::vector<double>& grad, double eta,
               bool inject_noise);

using SampleSink = std::function<void(std::size_t t, const std::vector<double>& theta)>;

// Full chain over an abstract likelihood. Each step draws a fresh uniform
// minibatch without replacement from [0, data_size), then advances theta;
// retained states are handed to the sink after the transition.
void run_chain(SamplerState& state, std::size_t data_size, const LogLikGrad& log_lik,
               const GaussianPrior& prior, const SgldConfig& config, const SampleSink& sink);

// Classification adapter: log p(y | x, theta) through the model's
// probability head. The returned closure writes theta into the model before
// each evaluation; the model must outlive it.
LogLikGrad classification_log_lik(Model& model, const Dataset& data);

// Chain over a classification model; on return model.params holds the final
// state of the chain.
void run_model_chain(Model& model, const Dataset& data, const GaussianPrior& prior,
                     const SgldConfig& config, std::uint64_t seed, const SampleSink& sink);

}  // namespace gped
