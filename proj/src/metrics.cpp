#include "gped/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gped/errors.hpp"

namespace gped {

namespace {

constexpr double kLogFloor = 1e-12;

void require_distribution(const double* p, std::size_t n, const char* what) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require(p[i] >= 0.0, ErrorKind::Contract,
            std::string(what) + " holds a negative probability");
    sum += p[i];
  }
  require(std::abs(sum - 1.0) <= 1e-6, ErrorKind::Contract,
          std::string(what) + " is not normalized");
}

}  // namespace

double entropy_nats(const double* p, std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

double entropy_nats(const std::vector<double>& p) { return entropy_nats(p.data(), p.size()); }

UncertaintyReport decompose(const Tensor& member_probs) {
  require(member_probs.rank() == 2, ErrorKind::Dimension,
          "decompose expects (members, classes) probabilities");
  const std::size_t members = member_probs.dim(0), classes = member_probs.dim(1);
  require(members >= 1, ErrorKind::Contract, "decompose needs at least one member");

  std::vector<double> mean(classes, 0.0);
  double expected = 0.0;
  for (std::size_t s = 0; s < members; ++s) {
    const double* row = member_probs.ptr() + s * classes;
    require_distribution(row, classes, "ensemble member");
    expected += entropy_nats(row, classes);
    for (std::size_t c = 0; c < classes; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(members);

  UncertaintyReport r;
  r.total = entropy_nats(mean.data(), classes);
  r.expected_data = expected / static_cast<double>(members);
  return r;
}

double nll(const Tensor& predictions, const std::vector<int>& labels) {
  require(predictions.rank() == 2, ErrorKind::Dimension, "nll expects (n, classes) predictions");
  const std::size_t n = predictions.dim(0), classes = predictions.dim(1);
  require(labels.size() == n, ErrorKind::Dimension, "nll label count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = predictions.ptr() + i * classes;
    require_distribution(row, classes, "prediction");
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorKind::Range,
            "nll label outside the class range");
    sum -= std::log(std::max(row[static_cast<std::size_t>(y)], kLogFloor));
  }
  return sum / static_cast<double>(n);
}

double accuracy(const Tensor& predictions, const std::vector<int>& labels) {
  require(predictions.rank() == 2, ErrorKind::Dimension,
          "accuracy expects (n, classes) predictions");
  const std::size_t n = predictions.dim(0), classes = predictions.dim(1);
  require(labels.size() == n, ErrorKind::Dimension, "accuracy label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = predictions.ptr() + i * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;  // strict: ties keep the lowest index
    }
    if (static_cast<int>(best) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double entropy_mae(const std::vector<double>& predicted, const std::vector<double>& reference) {
  require(predicted.size() == reference.size(), ErrorKind::Dimension,
          "entropy_mae length mismatch");
  require(!predicted.empty(), ErrorKind::Contract, "entropy_mae needs at least one value");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted[i] - reference[i]);
  return sum / static_cast<double>(predicted.size());
}

double auroc(const std::vector<double>& in_scores, const std::vector<double>& out_scores) {
  require(!in_scores.empty() && !out_scores.empty(), ErrorKind::Contract,
          "auroc needs both score sets nonempty");
  std::vector<double> in_sorted = in_scores;
  std::sort(in_sorted.begin(), in_sorted.end());

  // twice the pair score: 2 per out > in pair, 1 per tie, summed exactly
  std::uint64_t s2 = 0;
  for (double o : out_scores) {
    const auto lo = std::lower_bound(in_sorted.begin(), in_sorted.end(), o);
    const auto hi = std::upper_bound(lo, in_sorted.end(), o);
    const std::uint64_t below = static_cast<std::uint64_t>(lo - in_sorted.begin());
    const std::uint64_t equal = static_cast<std::uint64_t>(hi - lo);
    s2 += 2 * below + equal;
  }
  const std::uint64_t nm =
      static_cast<std::uint64_t>(in_scores.size()) * static_cast<std::uint64_t>(out_scores.size());
  // symmetric conversion: complementary halves give exactly complementary values
  return s2 <= nm ? static_cast<double>(s2) / (2.0 * static_cast<double>(nm))
                  : 1.0 - static_cast<double>(2 * nm - s2) / (2.0 * static_cast<double>(nm));
}

double ndcg_at_k(const std::vector<double>& scores, const std::vector<double>& relevance,
                 std::size_t k) {
  require(scores.size() == relevance.size(), ErrorKind::Dimension,
          "ndcg score/relevance length mismatch");
  require(k >= 1 && k <= scores.size(), ErrorKind::Range,
          "ndcg rank cutoff outside [1, item count]");
  for (double r : relevance)
    require(r >= 0.0, ErrorKind::Range, "ndcg relevance must be nonnegative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<double> ideal = relevance;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double discount = std::log2(static_cast<double>(i) + 2.0);
    dcg += relevance[order[i]] / discount;
    idcg += ideal[i] / discount;
  }
  return idcg == 0.0 ? 1.0 : dcg / idcg;
}

RankingSummary ndcg_protocol(const std::vector<double>& scores,
                             const std::vector<double>& relevance, const RankingConfig& config) {
  require(scores.size() == relevance.size(), ErrorKind::Dimension,
          "ranking protocol length mismatch");
  require(config.sample >= config.k && config.sample <= scores.size(), ErrorKind::Range,
          "ranking protocol sample size outside [k, item count]");
  require(config.trials >= 1, ErrorKind::Range, "ranking protocol needs at least one trial");

  SeededRng rng(config.seed);
  std::vector<double> trial_scores(config.sample), trial_rel(config.sample);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 0; t < config.trials; ++t) {
    const auto idx = rng.sample_without_replacement(scores.size(), config.sample);
    for (std::size_t j = 0; j < config.sample; ++j) {
      trial_scores[j] = scores[idx[j]];
      trial_rel[j] = relevance[idx[j]];
    }
    const double v = ndcg_at_k(trial_scores, trial_rel, config.k);
    sum += v;
    sum_sq += v * v;
  }
  RankingSummary s;
  s.mean = sum / static_cast<double>(config.trials);
  const double var = sum_sq / static_cast<double>(config.trials) - s.mean * s.mean;
  s.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
  return s;
}

}  // namespace gped
