#pragma once

#include <vector>

#include "gped/dataset.hpp"
#include "gped/distill.hpp"
#include "gped/network.hpp"
#include "gped/optim.hpp"
#include "gped/rng.hpp"
#include "gped/tensor.hpp"

namespace gped {

// Summary statistics of a Dirichlet over the probability simplex, read off a
// concentration-valued student head.
struct DirichletStats {
  std::vector<double> predictive;  // mean distribution alpha / alpha0
  double expected_data = 0.0;      // mean entropy of a distribution drawn from the Dirichlet
  double total = 0.0;              // entropy of the mean distribution

  double knowledge() const { return total - expected_data; }
};

// predictive_c = alpha_c / alpha0
// expected_data = sum_c (alpha_c / alpha0) (psi(alpha0 + 1) - psi(alpha_c + 1))
// total = entropy of the predictive mean
DirichletStats dirichlet_statistics(const std::vector<double>& alpha);

// One optimizer update of a concentration student: Dirichlet negative
// log-likelihood of the target log-probability rows under the student's
// concentrations, scaled by data_scale, plus an optional structured penalty.
void end2_distill_step(Model& student, const Tensor& features, const Tensor& log_prob_targets,
                       double data_scale, double lambda, const Regularizer& regularizer,
                       AdamState& adam, double lr, SeededRng* dropout_rng);

// Distribution distillation baseline: the same online schedule, seed
// derivation, and transfer stream as run_gped — the teacher trajectory is
// bit-identical under equal seeds — but the student emits Dirichlet
// concentrations through an exponential head with a temperature and trains on
// the Dirichlet negative log-likelihood of the ensemble's categorical
// outputs. The estimator table holds running means of log-probabilities (the
// loss is linear in log pi, so averaging logs is the valid online form); it
// is the one table in the library holding logs rather than plain expectations.
GpedResult run_end2(const NetworkSpec& teacher_spec, const NetworkSpec& student_spec,
                    const Dataset& train, const Dataset& transfer, const DistillConfig& config,
                    const GpedSeeds& seeds, const GpedOptions& opt = {});

}  // namespace gped
