#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gped/dataset.hpp"
#include "gped/distill.hpp"
#include "gped/errors.hpp"
#include "gped/network.hpp"

namespace gped {

enum class GroupKind { FcUnit, ConvOutChannel };

// One prunable group: the contiguous incoming-weight block of a single FC
// unit or conv output channel. The unit's bias sits outside the group but is
// tracked so pruning can fold it away.
struct ParamGroup {
  GroupKind kind = GroupKind::FcUnit;
  std::size_t layer = 0;       // index into spec.layers
  std::size_t unit = 0;        // output unit / channel within that layer
  std::size_t offset = 0;      // start of the weight block in the flat vector
  std::size_t count = 0;       // weights in the block
  std::size_t bias_index = 0;  // flat index of the unit's bias

  friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

struct GroupPartition {
  std::vector<ParamGroup> groups;

  friend bool operator==(const GroupPartition&, const GroupPartition&) = default;
};

// One group per FC unit row and per conv output-channel block, skipping the
// final parametered layer (class outputs are never pruned) and all biases.
GroupPartition build_groups(const NetworkSpec& spec);

struct PruneConfig {
  double lambda = 0.0;            // structured penalty strength
  double epsilon = 1e-3;          // magnitude threshold for removal
  bool scaled = false;            // multiply each group term by sqrt(group size)
  std::size_t fine_tune_epochs = 0;
};

// Sum of group l2 norms (optionally scaled by sqrt of the group size), with
// the subgradient written into subgrad (sized and zeroed here). Groups with
// norm below 1e-12 contribute a zero subgradient.
double group_reg(const std::vector<double>& params, const GroupPartition& partition, bool scaled,
                 std::vector<double>& subgrad);

// Adapter binding a partition to the distillation engine's regularizer hook.
Regularizer group_regularizer(GroupPartition partition, bool scaled);

struct LayerPruneRecord {
  std::size_t layer = 0;                  // spec layer index
  std::vector<std::size_t> removed_units; // unit ids in the original model
  double dropped_bias_magnitude = 0.0;    // sum of |bias| over removed units
};

struct PruneReport {
  std::vector<LayerPruneRecord> layers;
  std::size_t removed_groups = 0;
  std::size_t params_before = 0, params_after = 0;
  std::size_t flops_before = 0, flops_after = 0;
};

class PruneError : public Error {
 public:
  PruneError(std::string message, PruneReport partial)
      : Error(ErrorKind::Prune, std::move(message)), report_(std::move(partial)) {}

  const PruneReport& report() const noexcept { return report_; }

 private:
  PruneReport report_;
};

struct PruneOutcome {
  Model model;
  PruneReport report;
};

// Removes every group whose weights all sit below epsilon in magnitude,
// deleting the unit row (or channel block), its bias, and the matching input
// columns of the next parametered layer. A removed unit still contributes the
// constant act(bias) downstream, so that constant — relu(bias) under a ReLU,
// the raw bias when nothing intervenes — is folded into the next layer's
// biases first, making the surgery exactly output-preserving in eval mode.
// Repeats until no group qualifies, so the result is a fixpoint and pruning
// is idempotent. Emptying a layer raises PruneError carrying the partial
// report.
PruneOutcome prune(const Model& m, const GroupPartition& partition, double epsilon);

struct FineTuneConfig {
  std::size_t epochs = 1;
  std::size_t batch = 32;
  double learning_rate = 1e-4;
  ExpectationTarget target = ExpectationTarget::PredictiveDistribution;
  StudentLoss loss = StudentLoss::CrossEntropy;
  double joint_entropy_weight = 1.0;
  bool normalize_grad = false;  // scale by 1/batch instead of visited/batch
};

// Post-prune restart learning rate: 1e-3 when the network has conv layers,
// 1e-4 for pure FC stacks.
double default_restart_lr(const NetworkSpec& spec);

// Continues student training against the frozen expectation table: each epoch
// walks the visited table rows (counts > 0) in a seeded shuffle, one
// optimizer update per minibatch, fresh Adam state, no structured penalty.
Model fine_tune(Model student, const Dataset& transfer, const ExpectationTable& table,
                const FineTuneConfig& cfg, std::uint64_t seed);

}  // namespace gped
