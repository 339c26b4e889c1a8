#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gped/errors.hpp"
#include "gped/metrics.hpp"
#include "gped/rng.hpp"
#include "gped/tensor.hpp"

using namespace gped;

namespace {

std::vector<double> random_distribution(SeededRng& rng, std::size_t classes) {
  std::vector<double> p(classes);
  double sum = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform());  // exponential draws give a Dirichlet(1) sample
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

// brute-force pairwise AUROC used as the oracle: counts wins and ties in exact
// integer arithmetic, then applies the mirror-symmetric conversion so that the
// complement identity holds bit for bit
double auroc_pairwise(const std::vector<double>& in, const std::vector<double>& out) {
  std::uint64_t twice = 0;
  for (double o : out) {
    for (double i : in) {
      if (o > i) {
        twice += 2;
      } else if (o == i) {
        twice += 1;
      }
    }
  }
  const std::uint64_t nm =
      static_cast<std::uint64_t>(in.size()) * static_cast<std::uint64_t>(out.size());
  if (twice <= nm) return static_cast<double>(twice) / (2.0 * static_cast<double>(nm));
  return 1.0 - static_cast<double>(2 * nm - twice) / (2.0 * static_cast<double>(nm));
}

// direct-formula nDCG oracle with an independent sort
double ndcg_direct(const std::vector<double>& scores, const std::vector<double>& rel,
                   std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> ideal = rel;
  std::sort(ideal.rbegin(), ideal.rend());
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    dcg += rel[order[i]] / std::log2(i + 2.0);
    idcg += ideal[i] / std::log2(i + 2.0);
  }
  return idcg == 0.0 ? 1.0 : dcg / idcg;
}

}  // namespace

TEST_CASE("entropy in nats with the zero convention") {
  const std::vector<double> uniform(10, 0.1);
  CHECK(entropy_nats(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  const std::vector<double> onehot{0.0, 1.0, 0.0};
  CHECK(entropy_nats(onehot) == 0.0);
  const std::vector<double> half{0.5, 0.5, 0.0};
  CHECK(entropy_nats(half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("uncertainty decomposition separates disagreement from data noise") {
  const Tensor disagree = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const UncertaintyReport a = decompose(disagree);
  CHECK(a.total == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(a.expected_data == 0.0);
  CHECK(a.knowledge() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const Tensor same = Tensor::from_values({3, 2}, {0.3, 0.7, 0.3, 0.7, 0.3, 0.7});
  const UncertaintyReport b = decompose(same);
  CHECK(b.knowledge() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(b.expected_data).epsilon(1e-12));

  SeededRng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t members = 1 + rng.uniform_index(6);
    const std::size_t classes = 2 + rng.uniform_index(5);
    Tensor ens({members, classes});
    for (std::size_t s = 0; s < members; ++s) {
      const auto p = random_distribution(rng, classes);
      std::copy(p.begin(), p.end(), ens.ptr() + s * classes);
    }
    const UncertaintyReport r = decompose(ens);
    CHECK(r.knowledge() >= -1e-9);  // concavity of entropy
    CHECK(r.total <= std::log(static_cast<double>(classes)) + 1e-9);
    CHECK(r.expected_data >= 0.0);
  }

  CHECK_THROWS_AS(decompose(Tensor::from_values({1, 2}, {0.9, 0.3})), const Error&);
  CHECK_THROWS_AS(decompose(Tensor({0, 2})), const Error&);
}

TEST_CASE("nll floors probabilities and averages over instances") {
  Tensor uniform({4, 10}, 0.1);
  const std::vector<int> labels{0, 3, 9, 5};
  CHECK(nll(uniform, labels) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  const Tensor perfect = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
  CHECK(nll(perfect, {0, 1}) == 0.0);
  // the floor keeps a certain-but-wrong prediction finite
  CHECK(nll(perfect, {1, 0}) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  CHECK_THROWS_AS(nll(uniform, {0, 1, 2}), const Error&);
  CHECK_THROWS_AS(nll(uniform, std::vector<int>{0, 3, 9, 10}), const Error&);
}

TEST_CASE("accuracy breaks ties toward the lowest class index") {
  const Tensor pred = Tensor::from_values({3, 3},
                                          {0.4, 0.4, 0.2,   // tie between 0 and 1
                                           0.1, 0.2, 0.7,   // clear 2
                                           0.3, 0.3, 0.4}); // clear 2
  CHECK(accuracy(pred, {0, 2, 2}) == doctest::Approx(1.0));
  CHECK(accuracy(pred, {1, 2, 2}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("entropy mae") {
  CHECK(entropy_mae({0.5, 1.5}, {0.5, 1.5}) == 0.0);
  CHECK(entropy_mae({0.6, 1.6}, {0.5, 1.5}) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(entropy_mae({1.0}, {1.0, 2.0}), const Error&);
  CHECK_THROWS_AS(entropy_mae({}, {}), const Error&);
}

TEST_CASE("auroc equals pairwise counting and is exactly complementary") {
  CHECK(auroc({0.1, 0.2}, {0.8, 0.9}) == 1.0);
  CHECK(auroc({0.8, 0.9}, {0.1, 0.2}) == 0.0);
  CHECK(auroc({0.5, 0.5, 0.5}, {0.5, 0.5}) == 0.5);

  SeededRng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(200);
    const std::size_t m = 1 + rng.uniform_index(200);
    std::vector<double> in(n), out(m);
    // coarse grid scores force plenty of exact ties
    for (double& v : in) v = static_cast<double>(rng.uniform_index(12)) / 4.0;
    for (double& v : out) v = static_cast<double>(rng.uniform_index(12)) / 4.0 + 0.25;
    const double fast = auroc(in, out);
    CHECK(fast == auroc_pairwise(in, out));
    CHECK(fast + auroc(out, in) == 1.0);  // exact, not approximate
  }

  CHECK_THROWS_AS(auroc({}, {1.0}), const Error&);
  CHECK_THROWS_AS(auroc({1.0}, {}), const Error&);
}

TEST_CASE("ndcg agrees with the direct formula and respects rank conventions") {
  // student ranking identical to the reference ranking
  CHECK(ndcg_at_k({0.9, 0.5, 0.1}, {3.0, 2.0, 1.0}, 3) == doctest::Approx(1.0).epsilon(1e-15));
  // k=1 with the top item carrying maximum relevance
  CHECK(ndcg_at_k({0.9, 0.5, 0.1}, {5.0, 1.0, 4.0}, 1) == doctest::Approx(1.0).epsilon(1e-15));
  // all-zero relevance defined as a perfect score
  CHECK(ndcg_at_k({0.3, 0.2, 0.1}, {0.0, 0.0, 0.0}, 2) == 1.0);

  SeededRng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(40);
    const std::size_t k = 1 + rng.uniform_index(n);
    std::vector<double> scores(n), rel(n);
    for (double& v : scores) v = rng.uniform(-1.0, 1.0);
    for (double& v : rel) v = rng.uniform_index(3) == 0 ? 0.0 : rng.uniform(0.0, 4.0);
    const double got = ndcg_at_k(scores, rel, k);
    CHECK(std::abs(got - ndcg_direct(scores, rel, k)) < 1e-12);

    // argsort invariance: any strictly increasing transform of scores
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(scores[i]) + 3.0;
    CHECK(ndcg_at_k(warped, rel, k) == got);
  }

  CHECK_THROWS_AS(ndcg_at_k({1.0, 2.0}, {1.0, 2.0}, 3), const Error&);
  CHECK_THROWS_AS(ndcg_at_k({1.0, 2.0}, {1.0, 2.0}, 0), const Error&);
  CHECK_THROWS_AS(ndcg_at_k({1.0, 2.0}, {1.0, -2.0}, 1), const Error&);
  CHECK_THROWS_AS(ndcg_at_k({1.0}, {1.0, 2.0}, 1), const Error&);
}

TEST_CASE("ranking protocol is deterministic and degenerate on flat relevance") {
  SeededRng rng(5);
  std::vector<double> scores(400), rel(400);
  for (double& v : scores) v = rng.uniform();
  for (double& v : rel) v = rng.uniform();

  RankingConfig cfg;
  cfg.trials = 50;
  cfg.sample = 60;
  cfg.k = 20;
  cfg.seed = 99;
  const RankingSummary a = ndcg_protocol(scores, rel, cfg);
  const RankingSummary b = ndcg_protocol(scores, rel, cfg);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
  CHECK(a.mean > 0.0);
  CHECK(a.mean <= 1.0);
  CHECK(a.stddev >= 0.0);

  // perfectly aligned scores and relevance rank identically in every trial
  const RankingSummary aligned = ndcg_protocol(rel, rel, cfg);
  CHECK(aligned.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(aligned.stddev == doctest::Approx(0.0).epsilon(1e-9));

  cfg.sample = 10;  // below k
  CHECK_THROWS_AS(ndcg_protocol(scores, rel, cfg), const Error&);
  cfg.sample = 500;  // above n
  CHECK_THROWS_AS(ndcg_protocol(scores, rel, cfg), const Error&);
}
