#pragma once

#include <cstdint>
#include <vector>

#include "gped/rng.hpp"
#include "gped/tensor.hpp"

namespace gped {

// Shannon entropy in nats with the 0 * ln 0 = 0 convention.
double entropy_nats(const double* p, std::size_t n);
double entropy_nats(const std::vector<double>& p);

// Uncertainty decomposition of an ensemble's distributions for one instance:
// total = entropy of the mean distribution, expected_data = mean of member
// entropies, knowledge = their difference (never materialized separately).
struct UncertaintyReport {
  double total = 0.0;
  double expected_data = 0.0;
  double knowledge() const { return total - expected_data; }
};

// member_probs has shape (members, classes); every row must be a valid
// distribution within 1e-6.
UncertaintyReport decompose(const Tensor& member_probs);

// Mean negative log-probability of the true class, probabilities floored at
// 1e-12. predictions shape (n, classes); rows must sum to 1 within 1e-6.
double nll(const Tensor& predictions, const std::vector<int>& labels);

// Argmax match rate; ties resolve to the lowest class index.
double accuracy(const Tensor& predictions, const std::vector<int>& labels);

double entropy_mae(const std::vector<double>& predicted, const std::vector<double>& reference);

// Rank-based AUROC of out_scores against in_scores (higher score = more
// out-of-distribution), ties counted 1/2. Computed from exact integer pair
// counts, so auroc(a, b) + auroc(b, a) == 1 exactly.
double auroc(const std::vector<double>& in_scores, const std::vector<double>& out_scores);

// Normalized discounted cumulative gain at rank k: items ranked by `scores`
// descending (ties keep input order), gain = relevance, discount log2(i + 1).
// The ideal ranking sorts by relevance itself; an all-zero relevance vector
// yields 1.0 by convention.
double ndcg_at_k(const std::vector<double>& scores, const std::vector<double>& relevance,
                 std::size_t k);

// Repeated-subsample ranking protocol: each trial scores a random subset of
// `sample` instances and computes ndcg@k; reports mean and standard deviation
// over `trials`.
struct RankingConfig {
  std::size_t trials = 500;
  std::size_t sample = 100;
  std::size_t k = 20;
  std::uint64_t seed = 0;
};

struct RankingSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

RankingSummary ndcg_protocol(const std::vector<double>& scores,
                             const std::vector<double>& relevance, const RankingConfig& config);

}  // namespace gped
