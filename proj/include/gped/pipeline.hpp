#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gped/config.hpp"
#include "gped/dataset.hpp"
#include "gped/distill.hpp"
#include "gped/metrics.hpp"
#include "gped/network.hpp"

namespace gped {

// Deterministic data realization of a config: every set is a pure function of
// the config and its derived seeds.
struct PipelineData {
  Dataset train;              // labeled teacher set, subsampled/masked per config
  Dataset transfer;           // unlabeled student stream over the train inputs
  Dataset test;               // labeled held-out set
  std::vector<Dataset> ood;   // unlabeled sets shaped like the test features
};

PipelineData build_data(const ExperimentConfig& cfg);

// Per-instance uncertainty estimates from one subject (distilled heads,
// Dirichlet student, or the teacher ensemble). Empty members mark quantities
// the subject cannot produce.
struct UncertaintyScores {
  Tensor probs;                       // (n, C) predictive distribution
  std::vector<double> total;          // entropy of the predictive
  std::vector<double> expected_data;  // expected data uncertainty
  // disagreement = total - expected_data; may dip below zero for separately
  // distilled heads, so scoring clips it while the raw value is logged
  std::vector<double> knowledge_raw() const;
};

UncertaintyScores ensemble_scores(const EnsembleAccumulator& acc);
UncertaintyScores student_scores(const Model& m, const Tensor& features,
                                 ExpectationTarget target, std::size_t classes);
UncertaintyScores dirichlet_scores(const Model& m, const Tensor& features);

struct OodReport {
  std::string name;
  bool has_total = false;
  bool has_knowledge = false;
  double auroc_total = 0.0;
  double auroc_knowledge = 0.0;
};

struct MetricReport {
  bool has_distribution = false;   // nll and accuracy are valid
  bool has_expected_data = false;  // entropy_mae is valid
  bool has_knowledge = false;      // subject produces both uncertainty kinds
  double nll = 0.0;
  double accuracy = 0.0;
  double entropy_mae = 0.0;        // vs the ensemble's expected data uncertainty
  double min_knowledge_raw = 0.0;  // smallest unclipped disagreement seen
  std::vector<OodReport> ood;
  bool has_ranking = false;
  RankingSummary ndcg_total;
  RankingSummary ndcg_knowledge;
  std::size_t flops = 0;
  std::size_t params = 0;
};

// Computes everything the subject's scores support: NLL/accuracy against
// labels, entropy MAE against the reference expectation, per-set OOD AUROC
// (entropy scores, and disagreement scores clipped at zero), and the
// repeated-subsample ndcg ranking with the reference as relevance.
MetricReport evaluate_scores(const UncertaintyScores& subject, const std::vector<int>& labels,
                             const UncertaintyScores& reference,
                             const std::vector<std::pair<std::string, UncertaintyScores>>& ood,
                             const RankingConfig& ranking, std::size_t flops,
                             std::size_t params);

struct PipelineOptions {
  std::string stage = "all";  // sample | distill | prune | search | eval | all
  std::size_t workers = 1;
  bool no_timestamp = false;
};

// Runs the requested stage(s), writing artifacts under
// <out_dir>/<run_id>/{manifest.json, models/, history.csv, metrics.json,
// frontier.csv, plots/, prune_report.json}. Every artifact embeds the
// manifest fingerprint. A stage failure leaves a FAILED marker naming the
// stage and rethrows. Returns the run directory.
std::string run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt);

}  // namespace gped
