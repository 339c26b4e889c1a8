#include "gped/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>

#include "gped/optim.hpp"
#include "gped/rng.hpp"

namespace gped {

GroupPartition build_groups(const NetworkSpec& spec) {
  validate_spec(spec);
  const auto layout = param_layout(spec);
  require(!layout.empty(), ErrorKind::Contract, "group formation needs a parametered layer");

  GroupPartition part;
  // the last parametered layer holds the class outputs and is never pruned
  for (std::size_t si = 0; si + 1 < layout.size(); ++si) {
    const ParamSlice& s = layout[si];
    const LayerDesc& layer = spec.layers[s.layer];
    if (layer.kind == LayerKind::Dense) {
      for (std::size_t u = 0; u < layer.out; ++u) {
        part.groups.push_back({GroupKind::FcUnit, s.layer, u, s.weight_offset + u * layer.in,
                               layer.in, s.bias_offset + u});
      }
    } else {
      const std::size_t block = layer.in_channels * layer.kernel * layer.kernel;
      for (std::size_t u = 0; u < layer.out_channels; ++u) {
        part.groups.push_back({GroupKind::ConvOutChannel, s.layer, u,
                               s.weight_offset + u * block, block, s.bias_offset + u});
      }
    }
  }
  return part;
}

double group_reg(const std::vector<double>& params, const GroupPartition& partition, bool scaled,
                 std::vector<double>& subgrad) {
  subgrad.assign(params.size(), 0.0);
  double value = 0.0;
  for (const ParamGroup& g : partition.groups) {
    require(g.offset + g.count <= params.size(), ErrorKind::Range,
            "group extends past the parameter vector");
    double sq = 0.0;
    for (std::size_t i = 0; i < g.count; ++i) {
      const double w = params[g.offset + i];
      sq += w * w;
    }
    const double norm = std::sqrt(sq);
    const double factor = scaled ? std::sqrt(static_cast<double>(g.count)) : 1.0;
    value += factor * norm;
    if (norm >= 1e-12) {
      const double inv = factor / norm;
      for (std::size_t i = 0; i < g.count; ++i) {
        subgrad[g.offset + i] = inv * params[g.offset + i];
      }
    }
  }
  return value;
}

Regularizer group_regularizer(GroupPartition partition, bool scaled) {
  return [partition = std::move(partition), scaled](const std::vector<double>& params,
                                                    std::vector<double>& sub) {
    return group_reg(params, partition, scaled, sub);
  };
}

namespace {

// a removed unit's constant output, pushed through whatever sits between two
// parametered layers: relu rectifies it, pooling and eval-mode dropout pass
// constants through untouched
double fold_constant(double c, const NetworkSpec& spec, std::size_t from_layer,
                     std::size_t to_layer) {
  for (std::size_t i = from_layer + 1; i < to_layer; ++i) {
    const LayerDesc& layer = spec.layers[i];
    if (layer.kind == LayerKind::Activation) {
      require(layer.act == Act::Relu, ErrorKind::Prune,
              "cannot fold a removed unit through a head activation");
      c = std::max(c, 0.0);
    }
  }
  return c;
}

std::vector<std::size_t> kept_ids(std::size_t width, const std::vector<std::size_t>& removed) {
  std::vector<std::size_t> kept;
  kept.reserve(width - removed.size());
  std::size_t r = 0;
  for (std::size_t u = 0; u < width; ++u) {
    if (r < removed.size() && removed[r] == u) {
      ++r;
    } else {
      kept.push_back(u);
    }
  }
  return kept;
}

std::size_t layer_width(const LayerDesc& layer) {
  return layer.kind == LayerKind::Dense ? layer.out : layer.out_channels;
}

// one surgery pass: removals hold sorted current unit ids per spec layer
void apply_round(Model& cur, const std::map<std::size_t, std::vector<std::size_t>>& removals,
                 std::vector<std::vector<std::size_t>>& ids,
                 std::vector<std::vector<std::size_t>>& removed_orig,
                 std::vector<double>& dropped_bias) {
  const NetworkSpec spec = cur.spec;
  const auto layout = param_layout(spec);
  const auto shapes = layer_shapes(spec);

  std::vector<std::size_t> plist;
  plist.reserve(layout.size());
  for (const ParamSlice& s : layout) plist.push_back(s.layer);

  // new architecture: narrower pruned layers, matching successor inputs
  NetworkSpec next = spec;
  for (const auto& [l, units] : removals) {
    LayerDesc& layer = next.layers[l];
    if (layer.kind == LayerKind::Dense) {
      layer.out -= units.size();
    } else {
      layer.out_channels -= units.size();
    }
  }
  for (std::size_t pi = 0; pi + 1 < plist.size(); ++pi) {
    const auto it = removals.find(plist[pi]);
    if (it == removals.end()) continue;
    const std::size_t k = it->second.size();
    LayerDesc& succ = next.layers[plist[pi + 1]];
    if (succ.kind == LayerKind::Conv2D) {
      succ.in_channels -= k;
    } else if (spec.layers[plist[pi]].kind == LayerKind::Conv2D) {
      const auto& entering = shapes[plist[pi + 1] - 1];  // {channels, h, w} into the dense layer
      succ.in -= k * entering[1] * entering[2];
    } else {
      succ.in -= k;
    }
  }
  validate_spec(next);
  const auto new_layout = param_layout(next);

  // working bias copies, folded left to right so same-round cascades see the
  // constants their predecessors already absorbed
  std::vector<std::vector<double>> bias(plist.size());
  for (std::size_t pi = 0; pi < plist.size(); ++pi) {
    const ParamSlice& s = layout[pi];
    bias[pi].assign(cur.params.begin() + static_cast<std::ptrdiff_t>(s.bias_offset),
                    cur.params.begin() + static_cast<std::ptrdiff_t>(s.bias_offset + s.bias_count));
  }
  for (std::size_t pi = 0; pi + 1 < plist.size(); ++pi) {
    const auto it = removals.find(plist[pi]);
    if (it == removals.end()) continue;
    const ParamSlice& sn = layout[pi + 1];
    const LayerDesc& succ = spec.layers[plist[pi + 1]];
    const double* w = cur.params.data() + sn.weight_offset;
    for (const std::size_t u : it->second) {
      const double c = fold_constant(bias[pi][u], spec, plist[pi], plist[pi + 1]);
      if (c == 0.0) continue;
      if (succ.kind == LayerKind::Conv2D) {
        const std::size_t kk = succ.kernel * succ.kernel;
        for (std::size_t o = 0; o < succ.out_channels; ++o) {
          double s = 0.0;
          const double* block = w + (o * succ.in_channels + u) * kk;
          for (std::size_t j = 0; j < kk; ++j) s += block[j];
          bias[pi + 1][o] += c * s;
        }
      } else if (spec.layers[plist[pi]].kind == LayerKind::Conv2D) {
        const auto& entering = shapes[plist[pi + 1] - 1];
        const std::size_t hw = entering[1] * entering[2];
        for (std::size_t o = 0; o < succ.out; ++o) {
          double s = 0.0;
          const double* row = w + o * succ.in + u * hw;
          for (std::size_t j = 0; j < hw; ++j) s += row[j];
          bias[pi + 1][o] += c * s;
        }
      } else {
        for (std::size_t o = 0; o < succ.out; ++o) {
          bias[pi + 1][o] += c * w[o * succ.in + u];
        }
      }
    }
  }

  // assemble the compact parameter vector
  std::vector<double> np(count_params(next), 0.0);
  const std::vector<std::size_t> no_removals;
  for (std::size_t pi = 0; pi < plist.size(); ++pi) {
    const std::size_t l = plist[pi];
    const ParamSlice& so = layout[pi];
    const ParamSlice& sn = new_layout[pi];
    const LayerDesc& old_layer = spec.layers[l];

    const auto rit = removals.find(l);
    const auto& removed = rit == removals.end() ? no_removals : rit->second;
    const auto kept_out = kept_ids(layer_width(old_layer), removed);

    const std::vector<std::size_t>* pred_removed = &no_removals;
    const LayerDesc* pred_layer = nullptr;
    if (pi > 0) {
      pred_layer = &spec.layers[plist[pi - 1]];
      const auto pit = removals.find(plist[pi - 1]);
      if (pit != removals.end()) pred_removed = &pit->second;
    }

    const double* ow = cur.params.data() + so.weight_offset;
    double* nw = np.data() + sn.weight_offset;

    if (old_layer.kind == LayerKind::Dense) {
      std::vector<std::size_t> cols;
      if (pred_removed->empty()) {
        cols.resize(old_layer.in);
        std::iota(cols.begin(), cols.end(), std::size_t{0});
      } else if (pred_layer->kind == LayerKind::Conv2D) {
        const auto& entering = shapes[l - 1];
        const std::size_t hw = entering[1] * entering[2];
        const auto kept_ch = kept_ids(layer_width(*pred_layer), *pred_removed);
        cols.reserve(kept_ch.size() * hw);
        for (const std::size_t c : kept_ch) {
          for (std::size_t j = 0; j < hw; ++j) cols.push_back(c * hw + j);
        }
      } else {
        cols = kept_ids(layer_width(*pred_layer), *pred_removed);
      }
      const std::size_t new_in = next.layers[l].in;
      for (std::size_t nu = 0; nu < kept_out.size(); ++nu) {
        const double* src = ow + kept_out[nu] * old_layer.in;
        double* dst = nw + nu * new_in;
        for (std::size_t ni = 0; ni < cols.size(); ++ni) dst[ni] = src[cols[ni]];
      }
    } else {
      const auto kept_in = pred_removed->empty()
                               ? kept_ids(old_layer.in_channels, no_removals)
                               : kept_ids(layer_width(*pred_layer), *pred_removed);
      const std::size_t kk = old_layer.kernel * old_layer.kernel;
      const std::size_t new_inc = next.layers[l].in_channels;
      for (std::size_t nu = 0; nu < kept_out.size(); ++nu) {
        for (std::size_t nc = 0; nc < kept_in.size(); ++nc) {
          const double* src = ow + (kept_out[nu] * old_layer.in_channels + kept_in[nc]) * kk;
          double* dst = nw + (nu * new_inc + nc) * kk;
          std::copy(src, src + kk, dst);
        }
      }
    }

    double* nb = np.data() + sn.bias_offset;
    for (std::size_t nu = 0; nu < kept_out.size(); ++nu) nb[nu] = bias[pi][kept_out[nu]];

    // bookkeeping: original ids and the constants this round discarded
    for (const std::size_t u : removed) {
      removed_orig[l].push_back(ids[l][u]);
      dropped_bias[l] += std::abs(bias[pi][u]);
    }
    if (!removed.empty()) {
      std::vector<std::size_t> kept_orig;
      kept_orig.reserve(kept_out.size());
      for (const std::size_t u : kept_out) kept_orig.push_back(ids[l][u]);
      ids[l] = std::move(kept_orig);
    }
  }

  cur = model_with_params(next, std::move(np));
}

PruneReport assemble_report(const Model& original, const Model& current,
                            const std::vector<std::vector<std::size_t>>& removed_orig,
                            const std::vector<double>& dropped_bias) {
  PruneReport report;
  report.params_before = count_params(original.spec);
  report.flops_before = count_flops(original.spec);
  report.params_after = count_params(current.spec);
  report.flops_after = count_flops(current.spec);
  for (std::size_t l = 0; l < removed_orig.size(); ++l) {
    if (removed_orig[l].empty()) continue;
    LayerPruneRecord rec;
    rec.layer = l;
    rec.removed_units = removed_orig[l];
    std::sort(rec.removed_units.begin(), rec.removed_units.end());
    rec.dropped_bias_magnitude = dropped_bias[l];
    report.removed_groups += rec.removed_units.size();
    report.layers.push_back(std::move(rec));
  }
  return report;
}

}  // namespace

PruneOutcome prune(const Model& m, const GroupPartition& partition, double epsilon) {
  require(epsilon > 0.0, ErrorKind::Range, "prune threshold must be positive");
  require(m.params.size() == count_params(m.spec), ErrorKind::Dimension,
          "model parameter vector does not match its architecture");
  require(partition == build_groups(m.spec), ErrorKind::Contract,
          "partition was not built from this model's architecture");

  Model cur = m;
  std::vector<std::vector<std::size_t>> ids(m.spec.layers.size());
  for (const ParamSlice& s : param_layout(m.spec)) {
    ids[s.layer].resize(layer_width(m.spec.layers[s.layer]));
    std::iota(ids[s.layer].begin(), ids[s.layer].end(), std::size_t{0});
  }
  std::vector<std::vector<std::size_t>> removed_orig(m.spec.layers.size());
  std::vector<double> dropped_bias(m.spec.layers.size(), 0.0);

  for (;;) {
    const GroupPartition groups = build_groups(cur.spec);
    std::map<std::size_t, std::vector<std::size_t>> removals;
    for (const ParamGroup& g : groups.groups) {
      double peak = 0.0;
      for (std::size_t i = 0; i < g.count; ++i) {
        peak = std::max(peak, std::abs(cur.params[g.offset + i]));
      }
      if (peak < epsilon) removals[g.layer].push_back(g.unit);
    }
    if (removals.empty()) break;

    for (const auto& [l, units] : removals) {
      if (units.size() == layer_width(cur.spec.layers[l])) {
        throw PruneError("pruning would remove every unit of layer " + std::to_string(l) + " (" +
                             layer_kind_name(cur.spec.layers[l].kind) + ")",
                         assemble_report(m, cur, removed_orig, dropped_bias));
      }
    }
    apply_round(cur, removals, ids, removed_orig, dropped_bias);
  }

  PruneReport report = assemble_report(m, cur, removed_orig, dropped_bias);
  return {std::move(cur), std::move(report)};
}

double default_restart_lr(const NetworkSpec& spec) {
  for (const LayerDesc& layer : spec.layers) {
    if (layer.kind == LayerKind::Conv2D) return 1e-3;
  }
  return 1e-4;
}

Model fine_tune(Model student, const Dataset& transfer, const ExpectationTable& table,
                const FineTuneConfig& cfg, std::uint64_t seed) {
  validate_dataset(transfer);
  require(table.instances() == transfer.size(), ErrorKind::Dimension,
          "expectation table does not cover the transfer set");
  require(student.spec.output_dim() == table.dim(), ErrorKind::Dimension,
          "student output width does not match the table");
  require(student.spec.head() == target_head(cfg.target), ErrorKind::Contract,
          std::string("student head must be ") + act_name(target_head(cfg.target)) +
              " for target " + target_name(cfg.target));
  require(cfg.batch >= 1, ErrorKind::Config, "fine-tune batch must be at least 1");
  require(cfg.learning_rate > 0.0, ErrorKind::Config, "fine-tune learning rate must be positive");
  if (cfg.epochs == 0) return student;

  std::vector<std::size_t> visited;
  for (std::size_t i = 0; i < table.instances(); ++i) {
    if (table.counts[i] > 0) visited.push_back(i);
  }
  require(!visited.empty(), ErrorKind::Contract, "fine-tuning needs a visited table row");

  SeededRng rng(derive_seed(seed, "fine-tune"));
  AdamState adam;
  adam.reset(student.params.size());
  const std::size_t dim = table.dim();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = rng.sample_without_replacement(visited.size(), visited.size());
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch) {
      const std::size_t stop = std::min(start + cfg.batch, perm.size());
      std::vector<std::size_t> idx;
      idx.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k) idx.push_back(visited[perm[k]]);

      const Tensor xb = gather_rows(transfer.features, idx);
      Tensor targets({idx.size(), dim});
      for (std::size_t j = 0; j < idx.size(); ++j) {
        std::copy(table.row(idx[j]), table.row(idx[j]) + dim, targets.ptr() + j * dim);
      }
      const double scale =
          cfg.normalize_grad
              ? 1.0 / static_cast<double>(idx.size())
              : static_cast<double>(visited.size()) / static_cast<double>(idx.size());
      student_step(student, xb, targets, cfg.target, cfg.loss, cfg.joint_entropy_weight, scale,
                   0.0, {}, adam, cfg.learning_rate, &rng);
    }
  }
  return student;
}

}  // namespace gped
