#include "gped/sgld.hpp"

#include <algorithm>
#include <cmath>

#include "gped/errors.hpp"

namespace gped {

bool retained(std::size_t t, std::size_t burn_in, std::size_t thinning) {
  require(thinning >= 1, ErrorKind::Contract, "thinning interval must be >= 1");
  require(t >= 1, ErrorKind::Contract, "retention is defined for 1-based steps");
  return t > burn_in && t % thinning == 0;
}

void sgld_step(SamplerState& state, const GaussianPrior& prior, std::size_t data_size,
               std::size_t batch_size, const std::vector<double>& grad, double eta,
               bool inject_noise) {
  require(grad.size() == state.theta.size(), ErrorKind::Dimension,
          "likelihood gradient size does not match the sampler state");
  require(eta > 0.0, ErrorKind::Range, "step size must be positive");
  require(batch_size >= 1 && batch_size <= data_size, ErrorKind::Range,
          "batch size must lie in [1, data size]");
  require(prior.precision >= 0.0, ErrorKind::Range, "prior precision must be nonnegative");

  const double half_eta = 0.5 * eta;
  const double scale = static_cast<double>(data_size) / static_cast<double>(batch_size);
  const double noise_sd = std::sqrt(eta);
  const bool flat_prior = prior.precision == 0.0;
  std::vector<double>& theta = state.theta;

  for (std::size_t j = 0; j < theta.size(); ++j) {
    // flat prior keeps the drift literally equal to the rescaled ascent step,
    // so the noise-free transition coincides with plain SGD term by term
    const double drift =
        flat_prior ? half_eta * (scale * grad[j])
                   : half_eta * (scale * grad[j] - prior.precision * (theta[j] - prior.mean));
    theta[j] += drift;
    if (inject_noise) theta[j] += noise_sd * state.rng.normal();
  }
  state.t += 1;
}

void run_chain(SamplerState& state, std::size_t data_size, const LogLikGrad& log_lik,
               const GaussianPrior& prior, const SgldConfig& config, const SampleSink& sink) {
  require(data_size >= 1, ErrorKind::Contract, "chain needs a nonempty data set");
  require(config.batch_size >= 1 && config.batch_size <= data_size, ErrorKind::Range,
          "batch size must lie in [1, data size]");
  require(config.thinning >= 1, ErrorKind::Contract, "thinning interval must be >= 1");
  require(!state.theta.empty(), ErrorKind::Contract, "sampler state holds no parameters");
  require(static_cast<bool>(log_lik), ErrorKind::Contract, "missing log-likelihood gradient");

  std::vector<double> grad(state.theta.size(), 0.0);
  while (state.t < config.total_steps) {
    const std::size_t t = state.t + 1;
    // rng order per transition is pinned: minibatch first, then noise
    const std::vector<std::size_t> batch =
        minibatch_indices(state.rng, data_size, config.batch_size);
    log_lik(state.theta, batch, grad);
    sgld_step(state, prior, data_size, config.batch_size, grad, config.step_size.at(t),
              config.inject_noise);
    if (sink && retained(t, config.burn_in, config.thinning)) sink(t, state.theta);
  }
}

LogLikGrad classification_log_lik(Model& model, const Dataset& data) {
  require(data.labeled(), ErrorKind::Contract, "classification chain needs labels");
  require(model.spec.head() == Act::Softmax, ErrorKind::Contract,
          "classification chain requires a softmax probability head");
  const std::vector<std::size_t>& fshape = model.spec.input_shape;
  require(data.features.rank() == fshape.size() + 1, ErrorKind::Dimension,
          "feature rank does not match the model input");
  for (std::size_t a = 0; a < fshape.size(); ++a)
    require(data.features.dim(a + 1) == fshape[a], ErrorKind::Dimension,
            "feature shape does not match the model input");

  return [&model, &data](const std::vector<double>& theta,
                         const std::vector<std::size_t>& batch, std::vector<double>& grad) {
    require(theta.size() == model.params.size(), ErrorKind::Dimension,
            "sampler state does not match the model parameter count");
    std::copy(theta.begin(), theta.end(), model.params.begin());
    Tensor x = gather_rows(data.features, batch);
    std::vector<int> y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) y[i] = data.labels[batch[i]];
    Tape tape;
    const int out = forward_tape(model, x, tape);
    backward_scalar(tape, label_log_likelihood_node(tape, out, y));
    grad = tape.param_grad;
  };
}

void run_model_chain(Model& model, const Dataset& data, const GaussianPrior& prior,
                     const SgldConfig& config, std::uint64_t seed, const SampleSink& sink) {
  SamplerState state;
  state.theta = model.params;
  state.rng = SeededRng(seed);
  run_chain(state, data.size(), classification_log_lik(model, data), prior, config, sink);
  model.params = state.theta;
}

}  // namespace gped
