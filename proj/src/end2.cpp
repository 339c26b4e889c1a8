#include "gped/end2.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gped/autodiff.hpp"
#include "gped/errors.hpp"
#include "gped/metrics.hpp"
#include "gped/sgld.hpp"
#include "gped/special.hpp"

namespace gped {

DirichletStats dirichlet_statistics(const std::vector<double>& alpha) {
  require(!alpha.empty(), ErrorKind::Dimension,
          "dirichlet statistics need at least one concentration");
  double a0 = 0.0;
  for (double a : alpha) {
    require(std::isfinite(a) && a > 0.0, ErrorKind::Numeric,
            "dirichlet concentration must be finite and positive");
    a0 += a;
  }
  require(std::isfinite(a0), ErrorKind::Numeric, "dirichlet concentration sum overflowed");

  DirichletStats stats;
  stats.predictive.resize(alpha.size());
  const double psi_total = digamma(a0 + 1.0);
  for (std::size_t c = 0; c < alpha.size(); ++c) {
    const double p = alpha[c] / a0;
    stats.predictive[c] = p;
    stats.expected_data += p * (psi_total - digamma(alpha[c] + 1.0));
  }
  stats.total = entropy_nats(stats.predictive);
  return stats;
}

void end2_distill_step(Model& student, const Tensor& features, const Tensor& log_prob_targets,
                       double data_scale, double lambda, const Regularizer& regularizer,
                       AdamState& adam, double lr, SeededRng* dropout_rng) {
  Tape tape;
  ForwardOptions fwd;
  fwd.train = true;
  fwd.rng = dropout_rng;
  const int out = forward_tape(student, features, tape, fwd);
  backward_scalar(tape, dirichlet_nll_node(tape, out, log_prob_targets));

  std::vector<double>& grad = tape.param_grad;
  if (data_scale != 1.0) {
    for (double& v : grad) v *= data_scale;
  }
  if (lambda > 0.0) {
    require(static_cast<bool>(regularizer), ErrorKind::Contract,
            "a positive regularizer strength needs a regularizer");
    std::vector<double> sub;
    regularizer(student.params, sub);
    require(sub.size() == grad.size(), ErrorKind::Dimension,
            "regularizer subgradient size mismatch");
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += lambda * sub[j];
  }
  adam_step(student.params, grad, adam, lr);
}

namespace {

void require_feature_shape(const Dataset& d, const std::vector<std::size_t>& input_shape,
                           const char* what) {
  require(d.features.rank() == input_shape.size() + 1, ErrorKind::Dimension,
          std::string(what) + " feature rank does not match the model input");
  for (std::size_t a = 0; a < input_shape.size(); ++a) {
    require(d.features.dim(a + 1) == input_shape[a], ErrorKind::Dimension,
            std::string(what) + " feature shape does not match the model input");
  }
}

Tensor predictive_rows(const Tensor& alpha) {
  const std::size_t n = alpha.dim(0), c = alpha.dim(1);
  Tensor pred({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double a0 = 0.0;
    for (std::size_t j = 0; j < c; ++j) a0 += alpha.at2(i, j);
    for (std::size_t j = 0; j < c; ++j) pred.at2(i, j) = alpha.at2(i, j) / a0;
  }
  return pred;
}

HistoryRow end2_probe_row(std::size_t sgld_iter, std::size_t distill_iter, const Model& student,
                          const Dataset& probe, const EnsembleAccumulator& ref) {
  const std::size_t n = probe.size();
  const Tensor alpha = forward(student, probe.features);

  HistoryRow row;
  row.sgld_iter = sgld_iter;
  row.distill_iter = distill_iter;
  row.probe_loss = dirichlet_nll_value(alpha, ref.mean_log_probs) / static_cast<double>(n);

  const Tensor pred = predictive_rows(alpha);
  if (probe.labeled()) {
    row.probe_metric = accuracy(pred, probe.labels);
  } else {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      acc += std::abs(pred.data[i] - ref.mean_probs.data[i]);
    }
    row.probe_metric = acc / static_cast<double>(pred.size());
  }
  return row;
}

}  // namespace

GpedResult run_end2(const NetworkSpec& teacher_spec, const NetworkSpec& student_spec,
                    const Dataset& train, const Dataset& transfer, const DistillConfig& config,
                    const GpedSeeds& seeds, const GpedOptions& opt) {
  validate_dataset(train);
  validate_dataset(transfer);
  require(train.labeled(), ErrorKind::Contract, "distillation needs a labeled training set");
  const std::size_t classes = static_cast<std::size_t>(train.num_classes);
  require(classes >= 2, ErrorKind::Contract, "distillation needs at least two classes");
  validate_config(config, train.size(), transfer.size());
  validate_spec(teacher_spec);
  validate_spec(student_spec);
  require(teacher_spec.head() == Act::Softmax, ErrorKind::Contract,
          "the teacher needs a softmax probability head");
  require(teacher_spec.output_dim() == classes, ErrorKind::Dimension,
          "teacher output width does not match the class count");
  require(student_spec.head() == Act::Exponential, ErrorKind::Contract,
          "a concentration student needs an exponential head");
  require(student_spec.output_dim() == classes, ErrorKind::Dimension,
          "student concentration width does not match the class count");
  require(teacher_spec.input_shape == student_spec.input_shape, ErrorKind::Dimension,
          "teacher and student must share one input feature space");
  require_feature_shape(train, teacher_spec.input_shape, "training");
  require_feature_shape(transfer, teacher_spec.input_shape, "transfer");
  if (config.lambda > 0.0) {
    require(static_cast<bool>(opt.regularizer), ErrorKind::Contract,
            "a positive regularizer strength needs a regularizer");
  }
  if (opt.probe) {
    validate_dataset(*opt.probe);
    require_feature_shape(*opt.probe, teacher_spec.input_shape, "probe");
  }

  GpedResult res;
  SeededRng teacher_init(derive_seed(seeds.teacher, "init"));
  res.teacher = init_model(teacher_spec, teacher_init);
  SeededRng student_init(derive_seed(seeds.student, "init"));
  res.student = init_model(student_spec, student_init);
  SeededRng student_stream(derive_seed(seeds.student, "stream"));
  SeededRng noise_rng(derive_seed(seeds.data, "transfer-noise"));

  res.table = ExpectationTable(transfer.size(), classes);
  AdamState adam;
  adam.reset(res.student.params.size());

  EnsembleAccumulator probe_ref;
  if (opt.probe) probe_ref = EnsembleAccumulator(opt.probe->size(), classes);

  const double data_scale =
      config.normalize_student_grad
          ? 1.0 / static_cast<double>(config.student_batch)
          : static_cast<double>(transfer.size()) / static_cast<double>(config.student_batch);

  SgldConfig chain_cfg;
  chain_cfg.total_steps = config.total_steps;
  chain_cfg.burn_in = config.burn_in;
  chain_cfg.thinning = config.thinning;
  chain_cfg.batch_size = config.teacher_batch;
  chain_cfg.step_size = config.teacher_rate;
  chain_cfg.inject_noise = config.teacher_noise;

  LogLikGrad lik = classification_log_lik(res.teacher, train);
  SamplerState chain;
  chain.theta = res.teacher.params;
  chain.rng = SeededRng(derive_seed(seeds.teacher, "chain"));

  std::vector<double> lp(classes);
  run_chain(chain, train.size(), lik, config.teacher_prior, chain_cfg,
            [&](std::size_t t, const std::vector<double>& theta) {
              std::copy(theta.begin(), theta.end(), res.teacher.params.begin());
              if (opt.teacher_sink) opt.teacher_sink(t, theta);
              res.distill_steps += 1;
              const std::size_t s = res.distill_steps;

              const auto idx =
                  minibatch_indices(student_stream, transfer.size(), config.student_batch);
              Tensor xb = gather_rows(transfer.features, idx);
              if (config.input_noise_sigma > 0.0) {
                for (double& v : xb.data) v += noise_rng.normal(0.0, config.input_noise_sigma);
              }

              const Tensor teacher_probs = forward(res.teacher, xb);
              for (std::size_t j = 0; j < idx.size(); ++j) {
                const double* p = teacher_probs.ptr() + j * classes;
                for (std::size_t c = 0; c < classes; ++c) {
                  lp[c] = std::log(std::max(p[c], 1e-12));
                }
                res.table.update(config.estimator, idx[j], lp.data());
              }
              Tensor targets({idx.size(), classes});
              for (std::size_t j = 0; j < idx.size(); ++j) {
                std::copy(res.table.row(idx[j]), res.table.row(idx[j]) + classes,
                          targets.ptr() + j * classes);
              }

              end2_distill_step(res.student, xb, targets, data_scale, config.lambda,
                                opt.regularizer, adam, config.student_rate.at(s),
                                &student_stream);
              if (opt.student_sink) opt.student_sink(s, res.student);

              if (opt.probe) {
                probe_ref.add(forward(res.teacher, opt.probe->features));
                if (s % config.probe_every == 0) {
                  res.history.push_back(end2_probe_row(t, s, res.student, *opt.probe, probe_ref));
                }
              }
            });

  std::copy(chain.theta.begin(), chain.theta.end(), res.teacher.params.begin());
  return res;
}

}  // namespace gped
