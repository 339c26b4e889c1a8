#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gped/network.hpp"

namespace gped {

// Exhaustive width-multiplier search over a template architecture. Layers
// whose multiplier_site is 1 scale their width (dense out / conv kernels) by
// K1, site 2 by K2, with floor rounding; site 0 stays fixed. Successor input
// widths are rewired to match.
struct SearchSpace {
  NetworkSpec base;
  std::vector<double> k1_grid{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> k2_grid{0.25, 0.5, 1.0, 2.0, 4.0};
};

struct ArchCandidate {
  std::size_t arch_id = 0;  // position in the deduplicated enumeration
  double k1 = 1.0;
  double k2 = 1.0;
  NetworkSpec spec;
};

// K1-major, K2-minor; structural duplicates keep their first occurrence.
// A multiplier that floors any width to zero is a range error naming the
// grid entry.
std::vector<ArchCandidate> enumerate_candidates(const SearchSpace& space);

// Lower metric is always better; callers store negated accuracy-like scores.
struct ParetoPoint {
  std::size_t arch_id = 0;
  double metric = 0.0;
  std::size_t flops = 0;
  std::size_t params = 0;
};

enum class CostAxis { Flops, Params };

// All points not dominated on (metric, chosen cost). Dominance needs <= in
// both coordinates and < in at least one, so exact ties survive. Output is
// sorted by (cost, metric, arch_id) regardless of input order.
std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points, CostAxis axis);

struct SearchRecord {
  ArchCandidate arch;
  bool ok = false;
  std::string error;        // set when the job failed
  double metric = 0.0;      // valid when ok
  std::size_t flops = 0;
  std::size_t params = 0;
  bool on_frontier = false;  // membership in the FLOPs-axis frontier
};

struct SearchResult {
  std::vector<SearchRecord> records;  // enumeration order, one per candidate
  std::vector<ParetoPoint> frontier_flops;
  std::vector<ParetoPoint> frontier_params;
  bool has_best = false;
  std::size_t best = 0;  // index into records: smallest metric, then arch_id
};

// Trains one candidate and returns its lower-is-better metric. Throwing (or
// returning a non-finite value) marks the candidate failed without stopping
// the search.
using SearchJob = std::function<double(const ArchCandidate&)>;

// Runs every candidate through the job (all of them when budget == 0,
// otherwise at most `budget`), collecting costs from count_flops/count_params
// and the frontier on both cost axes.
SearchResult run_search(const SearchSpace& space, const SearchJob& job, std::size_t budget = 0);

}  // namespace gped
