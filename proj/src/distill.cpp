#include "gped/distill.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gped/errors.hpp"
#include "gped/metrics.hpp"

namespace gped {

const char* target_name(ExpectationTarget t) {
  switch (t) {
    case ExpectationTarget::PredictiveDistribution:
      return "predictive_distribution";
    case ExpectationTarget::ExpectedEntropy:
      return "expected_entropy";
    case ExpectationTarget::MarginalVariance:
      return "marginal_variance";
    case ExpectationTarget::JointPredictiveEntropy:
      return "joint_predictive_entropy";
  }
  return "unknown";
}

std::size_t target_dim(ExpectationTarget t, std::size_t classes) {
  switch (t) {
    case ExpectationTarget::PredictiveDistribution:
    case ExpectationTarget::MarginalVariance:
      return classes;
    case ExpectationTarget::ExpectedEntropy:
      return 1;
    case ExpectationTarget::JointPredictiveEntropy:
      return classes + 1;
  }
  return 0;
}

Act target_head(ExpectationTarget t) {
  switch (t) {
    case ExpectationTarget::PredictiveDistribution:
      return Act::Softmax;
    case ExpectationTarget::ExpectedEntropy:
      return Act::Exponential;
    case ExpectationTarget::MarginalVariance:
      return Act::ReluClamp;
    case ExpectationTarget::JointPredictiveEntropy:
      return Act::SoftmaxExp;
  }
  return Act::Softmax;
}

const char* estimator_name(Estimator e) { return e == Estimator::Us ? "us" : "uo"; }

const char* loss_name(StudentLoss l) {
  return l == StudentLoss::CrossEntropy ? "cross_entropy" : "l1";
}

void g_eval(ExpectationTarget t, const double* probs, std::size_t classes, double* out) {
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    require(probs[c] >= 0.0, ErrorKind::Contract, "expectation integrand fed a negative probability");
    sum += probs[c];
  }
  require(std::abs(sum - 1.0) <= 1e-6, ErrorKind::Contract,
          "expectation integrand fed an unnormalized distribution");
  switch (t) {
    case ExpectationTarget::PredictiveDistribution:
      std::copy(probs, probs + classes, out);
      return;
    case ExpectationTarget::ExpectedEntropy:
      out[0] = entropy_nats(probs, classes);
      return;
    case ExpectationTarget::MarginalVariance:
      for (std::size_t c = 0; c < classes; ++c) out[c] = probs[c] * (1.0 - probs[c]);
      return;
    case ExpectationTarget::JointPredictiveEntropy:
      std::copy(probs, probs + classes, out);
      out[classes] = entropy_nats(probs, classes);
      return;
  }
}

std::vector<double> g_eval(ExpectationTarget t, const std::vector<double>& probs) {
  std::vector<double> out(target_dim(t, probs.size()));
  g_eval(t, probs.data(), probs.size(), out.data());
  return out;
}

ExpectationTable::ExpectationTable(std::size_t instances, std::size_t dim)
    : g_hat({instances, dim}), counts(instances, 0) {
  require(instances >= 1 && dim >= 1, ErrorKind::Contract,
          "expectation table needs instances and a target width");
}

void ExpectationTable::update_us(std::size_t i, const double* g) {
  require(i < instances(), ErrorKind::Range, "expectation table index out of range");
  std::copy(g, g + dim(), row(i));
  counts[i] += 1;
}

void ExpectationTable::update_uo(std::size_t i, const double* g) {
  require(i < instances(), ErrorKind::Range, "expectation table index out of range");
  const double m = static_cast<double>(counts[i]);
  double* r = row(i);
  for (std::size_t j = 0; j < dim(); ++j) r[j] = (m * r[j] + g[j]) / (m + 1.0);
  counts[i] += 1;
}

void ExpectationTable::update(Estimator e, std::size_t i, const double* g) {
  if (e == Estimator::Us) {
    update_us(i, g);
  } else {
    update_uo(i, g);
  }
}

void validate_config(const DistillConfig& c, std::size_t train_size, std::size_t transfer_size) {
  require(c.total_steps > c.burn_in, ErrorKind::Config,
          "burn-in must be smaller than the chain length");
  require(c.thinning >= 1, ErrorKind::Config, "thinning interval must be >= 1");
  require(c.teacher_batch >= 1 && c.teacher_batch <= train_size, ErrorKind::Config,
          "teacher batch size must lie in [1, train size]");
  require(c.student_batch >= 1 && c.student_batch <= transfer_size, ErrorKind::Config,
          "student batch size must lie in [1, transfer size]");
  require(c.lambda >= 0.0, ErrorKind::Config, "regularizer strength must be nonnegative");
  require(c.input_noise_sigma >= 0.0, ErrorKind::Config, "input noise sigma must be nonnegative");
  require(c.joint_entropy_weight >= 0.0, ErrorKind::Config,
          "joint entropy weight must be nonnegative");
  require(c.probe_every >= 1, ErrorKind::Config, "probe cadence must be >= 1");
}

namespace {

// splits a (n, C+1) tensor into its distribution and trailing scalar columns
void split_joint(const Tensor& joint, Tensor& dist, Tensor& scalar) {
  const std::size_t n = joint.dim(0), width = joint.dim(1);
  dist = Tensor({n, width - 1});
  scalar = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = joint.ptr() + i * width;
    std::copy(src, src + width - 1, dist.ptr() + i * (width - 1));
    scalar.ptr()[i] = src[width - 1];
  }
}

}  // namespace

int distill_loss_node(Tape& tape, int pred, const Tensor& targets, ExpectationTarget target,
                      StudentLoss loss, double joint_entropy_weight) {
  const Tensor& p = tape.value(pred);
  require(p.same_shape(targets), ErrorKind::Dimension,
          "student outputs and target rows differ in shape");
  if (target == ExpectationTarget::JointPredictiveEntropy) {
    const std::size_t classes = p.dim(1) - 1;
    Tensor dist_t, ent_t;
    split_joint(targets, dist_t, ent_t);
    const int dist = slice_cols_node(tape, pred, 0, classes);
    const int ent = slice_cols_node(tape, pred, classes, classes + 1);
    const int ce = cross_entropy_node(tape, dist, dist_t);
    const int l1 = l1_node(tape, ent, ent_t);
    return add_scaled_node(tape, ce, l1, joint_entropy_weight);
  }
  if (loss == StudentLoss::CrossEntropy) {
    require(target == ExpectationTarget::PredictiveDistribution, ErrorKind::Contract,
            "cross-entropy loss needs distribution targets");
    return cross_entropy_node(tape, pred, targets);
  }
  return l1_node(tape, pred, targets);
}

double distill_loss_value(const Tensor& pred, const Tensor& targets, ExpectationTarget target,
                          StudentLoss loss, double joint_entropy_weight) {
  require(pred.same_shape(targets), ErrorKind::Dimension,
          "student outputs and target rows differ in shape");
  if (target == ExpectationTarget::JointPredictiveEntropy) {
    Tensor dist_p, ent_p, dist_t, ent_t;
    split_joint(pred, dist_p, ent_p);
    split_joint(targets, dist_t, ent_t);
    return cross_entropy_value(dist_p, dist_t) + joint_entropy_weight * l1_value(ent_p, ent_t);
  }
  if (loss == StudentLoss::CrossEntropy) {
    require(target == ExpectationTarget::PredictiveDistribution, ErrorKind::Contract,
            "cross-entropy loss needs distribution targets");
    return cross_entropy_value(pred, targets);
  }
  return l1_value(pred, targets);
}

void student_step(Model& student, const Tensor& features, const Tensor& targets,
                  ExpectationTarget target, StudentLoss loss, double joint_entropy_weight,
                  double data_scale, double lambda, const Regularizer& regularizer,
                  AdamState& adam, double lr, SeededRng* dropout_rng) {
  Tape tape;
  ForwardOptions fo;
  fo.train = true;
  fo.rng = dropout_rng;
  const int out = forward_tape(student, features, tape, fo);
  backward_scalar(tape, distill_loss_node(tape, out, targets, target, loss, joint_entropy_weight));

  std::vector<double>& grad = tape.param_grad;
  if (data_scale != 1.0) {
    for (double& v : grad) v *= data_scale;
  }
  if (lambda > 0.0) {
    require(static_cast<bool>(regularizer), ErrorKind::Contract,
            "a positive regularizer strength needs a regularizer");
    std::vector<double> sub;
    const double value = regularizer(student.params, sub);
    (void)value;
    require(sub.size() == grad.size(), ErrorKind::Dimension,
            "regularizer subgradient size mismatch");
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += lambda * sub[j];
  }
  adam_step(student.params, grad, adam, lr);
}

EnsembleAccumulator::EnsembleAccumulator(std::size_t n, std::size_t classes)
    : mean_probs({n, classes}),
      mean_sq_probs({n, classes}),
      mean_log_probs({n, classes}),
      mean_entropy(n, 0.0) {}

void EnsembleAccumulator::add(const Tensor& probs) {
  require(probs.rank() == 2 && probs.dim(0) == size() && probs.dim(1) == classes(),
          ErrorKind::Dimension, "ensemble statistics fed a mismatched probability block");
  const double m = static_cast<double>(samples);
  const double inv = 1.0 / (m + 1.0);
  const std::size_t c = classes();
  for (std::size_t i = 0; i < size(); ++i) {
    const double* p = probs.ptr() + i * c;
    double* mp = mean_probs.ptr() + i * c;
    double* ms = mean_sq_probs.ptr() + i * c;
    double* ml = mean_log_probs.ptr() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      mp[j] = (m * mp[j] + p[j]) * inv;
      ms[j] = (m * ms[j] + p[j] * p[j]) * inv;
      ml[j] = (m * ml[j] + std::log(std::max(p[j], 1e-12))) * inv;
    }
    mean_entropy[i] = (m * mean_entropy[i] + entropy_nats(p, c)) * inv;
  }
  samples += 1;
}

std::vector<double> EnsembleAccumulator::target_reference(ExpectationTarget t,
                                                          std::size_t i) const {
  require(samples >= 1, ErrorKind::Contract, "ensemble statistics hold no samples yet");
  require(i < size(), ErrorKind::Range, "ensemble statistics index out of range");
  const std::size_t c = classes();
  const double* mp = mean_probs.ptr() + i * c;
  const double* ms = mean_sq_probs.ptr() + i * c;
  switch (t) {
    case ExpectationTarget::PredictiveDistribution:
      return std::vector<double>(mp, mp + c);
    case ExpectationTarget::ExpectedEntropy:
      return {mean_entropy[i]};
    case ExpectationTarget::MarginalVariance: {
      std::vector<double> out(c);
      for (std::size_t j = 0; j < c; ++j) out[j] = mp[j] - ms[j];
      return out;
    }
    case ExpectationTarget::JointPredictiveEntropy: {
      std::vector<double> out(mp, mp + c);
      out.push_back(mean_entropy[i]);
      return out;
    }
  }
  return {};
}

double clip_entropy(double h, std::size_t classes) {
  const double hi = std::log(static_cast<double>(classes)) + 0.1;
  return std::min(std::max(h, 0.0), hi);
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

HistoryRow probe_row(std::size_t sgld_iter, std::size_t distill_iter, const Model& student,
                     const Dataset& probe, const EnsembleAccumulator& ref,
                     ExpectationTarget target, const DistillConfig& config) {
  const std::size_t n = probe.size();
  const std::size_t classes = ref.classes();
  const std::size_t dim = target_dim(target, classes);

  Tensor out = forward(student, probe.features);
  if (target == ExpectationTarget::ExpectedEntropy) {
    for (std::size_t i = 0; i < n; ++i) out.at2(i, 0) = clip_entropy(out.at2(i, 0), classes);
  } else if (target == ExpectationTarget::JointPredictiveEntropy) {
    for (std::size_t i = 0; i < n; ++i)
      out.at2(i, classes) = clip_entropy(out.at2(i, classes), classes);
  }

  Tensor refs({n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = ref.target_reference(target, i);
    std::copy(r.begin(), r.end(), refs.ptr() + i * dim);
  }

  HistoryRow row;
  row.sgld_iter = sgld_iter;
  row.distill_iter = distill_iter;
  row.probe_loss = distill_loss_value(out, refs, target, config.loss,
                                      config.joint_entropy_weight) /
                   static_cast<double>(n);

  const bool has_distribution = target == ExpectationTarget::PredictiveDistribution ||
                                target == ExpectationTarget::JointPredictiveEntropy;
  if (has_distribution && probe.labeled()) {
    Tensor dist = out;
    if (target == ExpectationTarget::JointPredictiveEntropy) {
      Tensor scalar;
      split_joint(out, dist, scalar);
    }
    row.probe_metric = accuracy(dist, probe.labels);
  } else {
    double mae = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      mae += std::abs(out.data[i] - refs.data[i]);
    row.probe_metric = mae / static_cast<double>(out.size());
  }
  return row;
}

}  // namespace

GpedResult run_gped(const NetworkSpec& teacher_spec, const NetworkSpec& student_spec,
                    const Dataset& train, const Dataset& transfer, ExpectationTarget target,
                    const DistillConfig& config, const GpedSeeds& seeds, const GpedOptions& opt) {
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
  require(student_spec.head() == target_head(target), ErrorKind::Contract,
          std::string("student head must be ") + act_name(target_head(target)) +
              " for target " + target_name(target));
  require(student_spec.output_dim() == target_dim(target, classes), ErrorKind::Dimension,
          "student output width does not match the target");
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

  res.table = ExpectationTable(transfer.size(), target_dim(target, classes));
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

  std::vector<double> g(res.table.dim());
  run_chain(chain, train.size(), lik, config.teacher_prior, chain_cfg,
            [&](std::size_t t, const std::vector<double>& theta) {
              std::copy(theta.begin(), theta.end(), res.teacher.params.begin());
              if (opt.teacher_sink) opt.teacher_sink(t, theta);
              res.distill_steps += 1;
              const std::size_t s = res.distill_steps;

              // transfer minibatch, then dropout draws inside the update
              const auto idx =
                  minibatch_indices(student_stream, transfer.size(), config.student_batch);
              Tensor xb = gather_rows(transfer.features, idx);
              if (config.input_noise_sigma > 0.0) {
                for (double& v : xb.data) v += noise_rng.normal(0.0, config.input_noise_sigma);
              }

              const Tensor teacher_probs = forward(res.teacher, xb);
              for (std::size_t j = 0; j < idx.size(); ++j) {
                g_eval(target, teacher_probs.ptr() + j * classes, classes, g.data());
                res.table.update(config.estimator, idx[j], g.data());
              }
              Tensor targets({idx.size(), res.table.dim()});
              for (std::size_t j = 0; j < idx.size(); ++j) {
                std::copy(res.table.row(idx[j]), res.table.row(idx[j]) + res.table.dim(),
                          targets.ptr() + j * res.table.dim());
              }

              student_step(res.student, xb, targets, target, config.loss,
                           config.joint_entropy_weight, data_scale, config.lambda,
                           opt.regularizer, adam, config.student_rate.at(s), &student_stream);
              if (opt.student_sink) opt.student_sink(s, res.student);

              if (opt.probe) {
                probe_ref.add(forward(res.teacher, opt.probe->features));
                if (s % config.probe_every == 0) {
                  res.history.push_back(
                      probe_row(t, s, res.student, *opt.probe, probe_ref, target, config));
                }
              }
            });

  std::copy(chain.theta.begin(), chain.theta.end(), res.teacher.params.begin());
  return res;
}

}  // namespace gped
