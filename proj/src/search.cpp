#include "gped/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gped/errors.hpp"

namespace gped {

namespace {

bool same_layer(const LayerDesc& a, const LayerDesc& b) {
  return a.kind == b.kind && a.in == b.in && a.out == b.out && a.in_channels == b.in_channels &&
         a.out_channels == b.out_channels && a.kernel == b.kernel && a.stride == b.stride &&
         a.pool == b.pool && a.act == b.act && a.temperature == b.temperature &&
         a.rate == b.rate;
}

bool same_spec(const NetworkSpec& a, const NetworkSpec& b) {
  if (a.input_shape != b.input_shape || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (!same_layer(a.layers[i], b.layers[i])) return false;
  }
  return true;
}

std::size_t scaled_width(std::size_t base, double k, int site, std::size_t layer) {
  const double w = std::floor(static_cast<double>(base) * k);
  if (w < 1.0) {
    std::ostringstream msg;
    msg << "K" << site << "=" << k << " floors layer " << layer << " width " << base
        << " to zero";
    raise(ErrorKind::Range, msg.str());
  }
  return static_cast<std::size_t>(w);
}

// Scale the marked widths, then walk the shape chain so every successor's
// input agrees with what now feeds it.
NetworkSpec instantiate(const NetworkSpec& base, double k1, double k2) {
  NetworkSpec spec = base;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    LayerDesc& d = spec.layers[l];
    if (d.multiplier_site == 0) continue;
    require(d.multiplier_site == 1 || d.multiplier_site == 2, ErrorKind::Config,
            "multiplier site must be 0, 1, or 2");
    require(d.kind == LayerKind::Dense || d.kind == LayerKind::Conv2D, ErrorKind::Config,
            "only dense and conv layers can carry a multiplier site");
    const double k = d.multiplier_site == 1 ? k1 : k2;
    if (d.kind == LayerKind::Dense) {
      d.out = scaled_width(d.out, k, d.multiplier_site, l);
    } else {
      d.out_channels = scaled_width(d.out_channels, k, d.multiplier_site, l);
    }
  }

  std::vector<std::size_t> shape = spec.input_shape;
  for (LayerDesc& d : spec.layers) {
    switch (d.kind) {
      case LayerKind::Dense: {
        std::size_t flat = 1;
        for (std::size_t s : shape) flat *= s;
        d.in = flat;
        shape = {d.out};
        break;
      }
      case LayerKind::Conv2D: {
        require(shape.size() == 3, ErrorKind::Dimension, "conv layer needs a C,H,W input");
        d.in_channels = shape[0];
        shape = {d.out_channels, (shape[1] - d.kernel) / d.stride + 1,
                 (shape[2] - d.kernel) / d.stride + 1};
        break;
      }
      case LayerKind::MaxPool2D:
        shape = {shape[0], shape[1] / d.pool, shape[2] / d.pool};
        break;
      case LayerKind::Activation:
      case LayerKind::Dropout:
        break;
    }
  }
  validate_spec(spec);
  return spec;
}

}  // namespace

std::vector<ArchCandidate> enumerate_candidates(const SearchSpace& space) {
  require(!space.k1_grid.empty() && !space.k2_grid.empty(), ErrorKind::Config,
          "multiplier grids must be nonempty");
  for (double k : space.k1_grid) {
    require(std::isfinite(k) && k > 0.0, ErrorKind::Range, "K1 grid entries must be positive");
  }
  for (double k : space.k2_grid) {
    require(std::isfinite(k) && k > 0.0, ErrorKind::Range, "K2 grid entries must be positive");
  }
  validate_spec(space.base);

  std::vector<ArchCandidate> out;
  for (double k1 : space.k1_grid) {
    for (double k2 : space.k2_grid) {
      NetworkSpec spec = instantiate(space.base, k1, k2);
      const bool dup = std::any_of(out.begin(), out.end(), [&](const ArchCandidate& c) {
        return same_spec(c.spec, spec);
      });
      if (dup) continue;
      ArchCandidate cand;
      cand.arch_id = out.size();
      cand.k1 = k1;
      cand.k2 = k2;
      cand.spec = std::move(spec);
      out.push_back(std::move(cand));
    }
  }
  return out;
}

std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points, CostAxis axis) {
  for (const ParetoPoint& p : points) {
    require(std::isfinite(p.metric), ErrorKind::Range, "frontier points need a finite metric");
  }
  const auto cost = [axis](const ParetoPoint& p) {
    return axis == CostAxis::Flops ? p.flops : p.params;
  };
  std::sort(points.begin(), points.end(), [&](const ParetoPoint& a, const ParetoPoint& b) {
    if (cost(a) != cost(b)) return cost(a) < cost(b);
    if (a.metric != b.metric) return a.metric < b.metric;
    return a.arch_id < b.arch_id;
  });

  std::vector<ParetoPoint> frontier;
  double best_cheaper = std::numeric_limits<double>::infinity();  // over strictly lower costs
  std::size_t i = 0;
  while (i < points.size()) {
    std::size_t j = i;
    while (j < points.size() && cost(points[j]) == cost(points[i])) ++j;
    const double group_min = points[i].metric;  // sorted within the group
    for (std::size_t t = i; t < j; ++t) {
      if (points[t].metric == group_min && group_min < best_cheaper) frontier.push_back(points[t]);
    }
    best_cheaper = std::min(best_cheaper, group_min);
    i = j;
  }
  return frontier;
}

SearchResult run_search(const SearchSpace& space, const SearchJob& job, std::size_t budget) {
  require(static_cast<bool>(job), ErrorKind::Contract, "run_search needs a job callable");
  const std::vector<ArchCandidate> candidates = enumerate_candidates(space);

  SearchResult result;
  result.records.reserve(candidates.size());
  for (const ArchCandidate& cand : candidates) {
    SearchRecord rec;
    rec.arch = cand;
    rec.flops = count_flops(cand.spec);
    rec.params = count_params(cand.spec);
    if (budget != 0 && cand.arch_id >= budget) {
      rec.error = "search budget exhausted";
    } else {
      try {
        const double metric = job(cand);
        if (std::isfinite(metric)) {
          rec.ok = true;
          rec.metric = metric;
        } else {
          rec.error = "job returned a non-finite metric";
        }
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
    }
    result.records.push_back(std::move(rec));
  }

  std::vector<ParetoPoint> pts;
  for (const SearchRecord& rec : result.records) {
    if (!rec.ok) continue;
    pts.push_back({rec.arch.arch_id, rec.metric, rec.flops, rec.params});
    if (!result.has_best || rec.metric < result.records[result.best].metric) {
      result.has_best = true;
      result.best = rec.arch.arch_id;
    }
  }
  result.frontier_flops = pareto_frontier(pts, CostAxis::Flops);
  result.frontier_params = pareto_frontier(pts, CostAxis::Params);
  for (const ParetoPoint& p : result.frontier_flops) {
    result.records[p.arch_id].on_frontier = true;
  }
  return result;
}

}  // namespace gped
