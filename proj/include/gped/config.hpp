#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gped/distill.hpp"
#include "gped/network.hpp"
#include "gped/toml.hpp"

namespace gped {

// Run configuration resolved from a TOML file. Every field has a default, so
// a resolved config is always fully specified and the manifest records all of
// it. Validation returns the complete violation list instead of stopping at
// the first problem.

struct DatasetBlock {
  std::string source = "gaussian_mixture";  // gaussian_mixture | synthetic_digits | idx
  // gaussian_mixture
  std::size_t classes = 3;
  std::size_t dim = 2;
  std::size_t per_class = 200;
  double radius = 3.0;
  double sigma = 0.6;
  // synthetic_digits
  std::size_t digits_n = 2000;
  double digits_noise = 0.15;
  // idx file pairs
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  std::size_t subsample = 0;   // labeled cases kept for the teacher (0 = all)
  std::size_t mask_side = 0;   // zeroed square side per image (0 = off)
  std::size_t test_n = 600;    // synthetic held-out draw
  std::vector<std::string> ood = {"uniform", "gaussian"};
};

struct TeacherBlock {
  std::vector<std::size_t> hidden = {400, 400};  // fc widths
  std::vector<std::size_t> conv_channels;        // nonempty switches to conv
  std::vector<std::size_t> conv_kernels;
  std::size_t pool = 2;
  std::vector<std::size_t> conv_hidden;          // fc tail after the conv stack
};

struct SgldBlock {
  std::size_t total_iters = 1000000;
  std::size_t batch = 100;
  double eta = 4e-6;
  double prior_precision = 10.0;
};

struct DistillBlock {
  ExpectationTarget target = ExpectationTarget::PredictiveDistribution;
  Estimator estimator = Estimator::Uo;
  StudentLoss loss = StudentLoss::CrossEntropy;
  std::size_t burn_in = 1000;
  std::size_t thinning = 100;
  std::size_t student_batch = 100;
  double student_lr = 1e-3;
  std::size_t lr_halving_interval = 0;  // 0 keeps the rate constant
  double dropout = 0.5;                 // resolves to 0 when pruning is enabled
  std::vector<std::size_t> hidden;      // student widths; empty copies the teacher
  double input_noise = 0.0;
  double joint_weight = 1.0;
  bool normalize_grad = false;
  std::size_t probe_every = 100;
  double lambda = 0.0;
};

struct PruneBlock {
  bool enabled = false;
  std::vector<double> lambda_grid = {1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
  double epsilon = 1e-3;
  bool scaled = false;
  std::size_t fine_tune_epochs = 600;
};

struct SearchBlock {
  bool enabled = false;
  std::vector<double> k1_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> k2_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
};

struct EvalBlock {
  std::size_t trials = 500;
  std::size_t sample = 100;
  std::size_t k = 20;
};

struct End2Block {
  bool enabled = false;
  double temperature = 2.5;
};

struct ExperimentConfig {
  DatasetBlock dataset;
  TeacherBlock teacher;
  SgldBlock sgld;
  DistillBlock distill;
  PruneBlock prune;
  SearchBlock search;
  EvalBlock eval;
  End2Block end2;
  std::uint64_t seed = 42;
  std::string out_dir = "out";
  std::string run_id = "run";
};

struct ResolvedConfig {
  ExperimentConfig config;
  std::vector<std::string> errors;  // type problems and unknown keys
};

// Fills defaults and reports unknown keys / wrong value kinds without
// throwing, so every problem in the file is listed at once.
ResolvedConfig resolve_config(const TomlTable& table);

// Cross-field rules (each violation as "path: rule"), including referenced
// file existence.
std::vector<std::string> config_errors(const ExperimentConfig& cfg);

// Architecture realizations. The student template marks multiplier sites
// (first block site 1, rest site 2) when search is enabled.
NetworkSpec teacher_spec(const ExperimentConfig& cfg);
NetworkSpec student_spec(const ExperimentConfig& cfg);
NetworkSpec end2_student_spec(const ExperimentConfig& cfg);

// Engine config assembled from the blocks.
DistillConfig distill_config(const ExperimentConfig& cfg);

// Fully-resolved manifest document (sorted keys, round-trip-exact numbers)
// and its FNV-1a fingerprint. The fingerprint covers this document, which
// never embeds the hash itself.
std::string manifest_json(const ExperimentConfig& cfg);
std::string manifest_fingerprint(const ExperimentConfig& cfg);

}  // namespace gped
