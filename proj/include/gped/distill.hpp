#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gped/autodiff.hpp"
#include "gped/dataset.hpp"
#include "gped/network.hpp"
#include "gped/optim.hpp"
#include "gped/rng.hpp"
#include "gped/sgld.hpp"
#include "gped/tensor.hpp"

namespace gped {

// Posterior expectation being distilled. The student's output dimension and
// head activation are fixed by the choice: the class distribution itself
// (softmax, C outputs), its entropy (positive exponential head, 1 output),
// the per-class marginal variance p(1-p) (nonnegative clamp head, C outputs),
// or distribution and entropy jointly (softmax over the first C columns plus
// an exponential last column).
enum class ExpectationTarget {
  PredictiveDistribution,
  ExpectedEntropy,
  MarginalVariance,
  JointPredictiveEntropy,
};

const char* target_name(ExpectationTarget t);
std::size_t target_dim(ExpectationTarget t, std::size_t classes);
Act target_head(ExpectationTarget t);

// Evaluates the expectation integrand on one teacher probability row.
// `probs` must sum to 1 within 1e-6. `out` has target_dim entries.
void g_eval(ExpectationTarget t, const double* probs, std::size_t classes, double* out);
std::vector<double> g_eval(ExpectationTarget t, const std::vector<double>& probs);

enum class Estimator { Us, Uo };
enum class StudentLoss { CrossEntropy, L1 };

const char* estimator_name(Estimator e);
const char* loss_name(StudentLoss l);

// Per-instance running estimates of the expectation target over retained
// teacher samples: value rows start at zero with zero visit counts. Us keeps
// only the newest sample; Uo keeps the exact running mean of all samples
// presented for that instance.
struct ExpectationTable {
  Tensor g_hat;                     // (instances, dim)
  std::vector<std::size_t> counts;  // visits per instance

  ExpectationTable() = default;
  ExpectationTable(std::size_t instances, std::size_t dim);

  std::size_t instances() const { return counts.size(); }
  std::size_t dim() const { return g_hat.rank() == 2 ? g_hat.dim(1) : 0; }
  double* row(std::size_t i) { return g_hat.ptr() + i * dim(); }
  const double* row(std::size_t i) const { return g_hat.ptr() + i * dim(); }

  void update_us(std::size_t i, const double* g);
  void update_uo(std::size_t i, const double* g);
  void update(Estimator e, std::size_t i, const double* g);
};

struct DistillConfig {
  std::size_t total_steps = 0;     // teacher chain length T
  std::size_t burn_in = 0;         // B
  std::size_t thinning = 1;        // H: distill on every H-th post-burn-in sample
  std::size_t teacher_batch = 32;  // M
  std::size_t student_batch = 32;  // M'

  StepSchedule teacher_rate;  // eta_t, indexed by chain step
  StepSchedule student_rate;  // alpha_s, indexed by distillation step
  GaussianPrior teacher_prior;

  Estimator estimator = Estimator::Uo;
  StudentLoss loss = StudentLoss::CrossEntropy;
  double lambda = 0.0;                  // regularizer strength on the student
  bool normalize_student_grad = false;  // scale data term by 1/M' instead of N'/M'
  double input_noise_sigma = 0.0;       // additive noise on transfer batches
  double joint_entropy_weight = 1.0;    // entropy-column weight of the joint loss
  std::size_t probe_every = 1;          // history row cadence in distillation steps
  bool teacher_noise = true;            // disable only to reduce the chain to SGD
};

void validate_config(const DistillConfig& c, std::size_t train_size, std::size_t transfer_size);

struct GpedSeeds {
  std::uint64_t teacher = 1;
  std::uint64_t student = 2;
  std::uint64_t data = 3;
};

struct HistoryRow {
  std::size_t sgld_iter = 0;
  std::size_t distill_iter = 0;
  double probe_loss = 0.0;
  double probe_metric = 0.0;
};

// Fills `subgrad` (resized to params) and returns the penalty value.
using Regularizer =
    std::function<double(const std::vector<double>& params, std::vector<double>& subgrad)>;

struct GpedOptions {
  const Dataset* probe = nullptr;  // held-out probe set; labels optional
  SampleSink teacher_sink;         // receives every retained teacher state
  std::function<void(std::size_t distill_iter, const Model& student)> student_sink;
  Regularizer regularizer;  // required when config.lambda > 0
};

struct GpedResult {
  Model student;
  Model teacher;  // final chain state
  ExpectationTable table;
  std::vector<HistoryRow> history;
  std::size_t distill_steps = 0;
};

// Loss between student outputs and target rows: cross-entropy for
// distribution rows, L1 for scalar rows, and for the joint target
// cross-entropy on the first C columns plus weight * L1 on the last.
int distill_loss_node(Tape& tape, int pred, const Tensor& targets, ExpectationTarget target,
                      StudentLoss loss, double joint_entropy_weight);
double distill_loss_value(const Tensor& pred, const Tensor& targets, ExpectationTarget target,
                          StudentLoss loss, double joint_entropy_weight);

// One optimizer update: forward in train mode, loss gradient scaled by
// data_scale, plus lambda * regularizer subgradient, applied through Adam.
void student_step(Model& student, const Tensor& features, const Tensor& targets,
                  ExpectationTarget target, StudentLoss loss, double joint_entropy_weight,
                  double data_scale, double lambda, const Regularizer& regularizer,
                  AdamState& adam, double lr, SeededRng* dropout_rng);

// Exact running means of ensemble statistics on a fixed feature set; enough
// to reconstruct the reference value of every expectation target.
struct EnsembleAccumulator {
  Tensor mean_probs;      // (n, C)
  Tensor mean_sq_probs;   // (n, C)
  Tensor mean_log_probs;  // (n, C), probabilities floored at 1e-12
  std::vector<double> mean_entropy;  // (n)
  std::size_t samples = 0;

  EnsembleAccumulator() = default;
  EnsembleAccumulator(std::size_t n, std::size_t classes);

  std::size_t size() const { return mean_entropy.size(); }
  std::size_t classes() const { return mean_probs.rank() == 2 ? mean_probs.dim(1) : 0; }

  // folds in one ensemble member's probabilities, shape (n, C)
  void add(const Tensor& probs);

  // reference row for an expectation target (marginal variance combines the
  // first and second moments)
  std::vector<double> target_reference(ExpectationTarget t, std::size_t i) const;
};

// evaluation-time clamp for entropy predictions
double clip_entropy(double h, std::size_t classes);

// Interleaved teacher sampling and online student distillation. Per chain
// transition the teacher advances one SGLD step on `train`; on every retained
// step the engine draws a transfer minibatch, refreshes the expectation table
// on it with the configured estimator, and takes one student update against
// the refreshed rows. The rng discipline is pinned: the teacher stream drives
// init and chain; the student stream draws transfer indices first, then
// dropout masks; transfer input noise has its own stream.
GpedResult run_gped(const NetworkSpec& teacher_spec, const NetworkSpec& student_spec,
                    const Dataset& train, const Dataset& transfer, ExpectationTarget target,
                    const DistillConfig& config, const GpedSeeds& seeds,
                    const GpedOptions& opt = {});

}  // namespace gped
