#include "gped/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <thread>

#include "gped/artifacts.hpp"
#include "gped/end2.hpp"
#include "gped/errors.hpp"
#include "gped/pruning.hpp"
#include "gped/search.hpp"
#include "gped/serialize.hpp"
#include "gped/sgld.hpp"
#include "gped/textio.hpp"

namespace gped {

namespace {

using nlohmann::json;

Dataset synthetic_ood(const Tensor& reference, const std::string& kind, const std::string& name,
                      std::uint64_t seed) {
  require(reference.rank() >= 2 && reference.dim(0) >= 1, ErrorKind::Contract,
          "out-of-distribution synthesis needs a nonempty reference set");
  const std::size_t n = reference.dim(0);
  const std::size_t width = reference.size() / n;

  // feature-wise envelope of the reference set
  std::vector<double> lo(width, std::numeric_limits<double>::infinity());
  std::vector<double> hi(width, -std::numeric_limits<double>::infinity());
  std::vector<double> mean(width, 0.0), sq(width, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = reference.ptr() + i * width;
    for (std::size_t j = 0; j < width; ++j) {
      lo[j] = std::min(lo[j], row[j]);
      hi[j] = std::max(hi[j], row[j]);
      mean[j] += row[j];
      sq[j] += row[j] * row[j];
    }
  }
  for (std::size_t j = 0; j < width; ++j) {
    mean[j] /= static_cast<double>(n);
    const double var = std::max(sq[j] / static_cast<double>(n) - mean[j] * mean[j], 0.0);
    sq[j] = std::sqrt(var);  // reuse as stddev
  }

  Dataset out;
  out.name = name;
  out.features = Tensor(reference.shape);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.features.ptr() + i * width;
    for (std::size_t j = 0; j < width; ++j) {
      if (kind == "uniform") {
        row[j] = rng.uniform(lo[j], hi[j] > lo[j] ? hi[j] : lo[j] + 1e-12);
      } else {
        row[j] = mean[j] + std::max(sq[j], 1e-8) * rng.normal();
      }
    }
  }
  return out;
}

std::size_t spec_classes(const ExperimentConfig& cfg) {
  return teacher_spec(cfg).output_dim();
}

// ---------------------------------------------------------------------------
// ensemble reference: replays the exact teacher chain the engines run (same
// seed labels, same transition order) while accumulating predictions on the
// fixed evaluation sets

struct EnsembleReference {
  Model teacher;
  EnsembleAccumulator test;
  EnsembleAccumulator transfer;
  std::vector<EnsembleAccumulator> ood;
  std::size_t samples = 0;
};

EnsembleReference ensemble_reference(const ExperimentConfig& cfg, const PipelineData& data) {
  const NetworkSpec tspec = teacher_spec(cfg);
  const std::size_t classes = tspec.output_dim();
  const std::uint64_t teacher_seed = derive_seed(cfg.seed, "teacher");

  EnsembleReference ref;
  SeededRng init(derive_seed(teacher_seed, "init"));
  ref.teacher = init_model(tspec, init);
  ref.test = EnsembleAccumulator(data.test.size(), classes);
  ref.transfer = EnsembleAccumulator(data.transfer.size(), classes);
  for (const Dataset& o : data.ood) ref.ood.emplace_back(o.size(), classes);

  const DistillConfig dc = distill_config(cfg);
  SgldConfig chain_cfg;
  chain_cfg.total_steps = dc.total_steps;
  chain_cfg.burn_in = dc.burn_in;
  chain_cfg.thinning = dc.thinning;
  chain_cfg.batch_size = dc.teacher_batch;
  chain_cfg.step_size = dc.teacher_rate;
  chain_cfg.inject_noise = dc.teacher_noise;

  LogLikGrad lik = classification_log_lik(ref.teacher, data.train);
  SamplerState chain;
  chain.theta = ref.teacher.params;
  chain.rng = SeededRng(derive_seed(teacher_seed, "chain"));

  run_chain(chain, data.train.size(), lik, dc.teacher_prior, chain_cfg,
            [&](std::size_t, const std::vector<double>& theta) {
              std::copy(theta.begin(), theta.end(), ref.teacher.params.begin());
              ref.test.add(forward(ref.teacher, data.test.features));
              ref.transfer.add(forward(ref.teacher, data.transfer.features));
              for (std::size_t i = 0; i < data.ood.size(); ++i) {
                ref.ood[i].add(forward(ref.teacher, data.ood[i].features));
              }
              ++ref.samples;
            });
  std::copy(chain.theta.begin(), chain.theta.end(), ref.teacher.params.begin());
  return ref;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t count = std::min(workers, n);
  pool.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

std::vector<double> clipped_at_zero(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i], 0.0);
  return out;
}

// lower-is-better fit of a distilled student on the test set: NLL for
// distribution heads, reference MAE for the scalar heads
double headline_metric(const ExperimentConfig& cfg, const Model& student,
                       const PipelineData& data, const EnsembleReference* ref) {
  const std::size_t classes = spec_classes(cfg);
  const ExpectationTarget target = cfg.distill.target;
  if (target == ExpectationTarget::PredictiveDistribution ||
      target == ExpectationTarget::JointPredictiveEntropy) {
    const UncertaintyScores s = student_scores(student, data.test.features, target, classes);
    return nll(s.probs, data.test.labels);
  }
  require(ref != nullptr, ErrorKind::Contract, "scalar targets need the ensemble reference");
  const Tensor out = forward(student, data.test.features);
  double mae = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const std::vector<double> want = ref->test.target_reference(target, i);
    for (std::size_t c = 0; c < want.size(); ++c) {
      double got = out.ptr()[i * want.size() + c];
      if (target == ExpectationTarget::ExpectedEntropy) got = clip_entropy(got, classes);
      mae += std::abs(got - want[c]);
      ++cells;
    }
  }
  return mae / static_cast<double>(cells);
}

json report_json(const MetricReport& r) {
  json j;
  j["flops"] = r.flops;
  j["params"] = r.params;
  if (r.has_distribution) {
    j["nll"] = r.nll;
    j["accuracy"] = r.accuracy;
  }
  if (r.has_expected_data) j["entropy_mae"] = r.entropy_mae;
  if (r.has_knowledge) j["min_knowledge_raw"] = r.min_knowledge_raw;
  j["ood"] = json::array();
  for (const OodReport& o : r.ood) {
    json jo;
    jo["name"] = o.name;
    if (o.has_total) jo["auroc_total"] = o.auroc_total;
    if (o.has_knowledge) jo["auroc_knowledge"] = o.auroc_knowledge;
    j["ood"].push_back(jo);
  }
  if (r.has_ranking) {
    j["ndcg_total"] = {{"mean", r.ndcg_total.mean}, {"stddev", r.ndcg_total.stddev}};
    if (r.has_knowledge) {
      j["ndcg_knowledge"] = {{"mean", r.ndcg_knowledge.mean},
                             {"stddev", r.ndcg_knowledge.stddev}};
    }
  }
  return j;
}

json table_json(const ExpectationTable& table) {
  json rows = json::array();
  for (std::size_t i = 0; i < table.instances(); ++i) {
    json row = json::array();
    for (std::size_t c = 0; c < table.dim(); ++c) row.push_back(table.row(i)[c]);
    rows.push_back(std::move(row));
  }
  json j;
  j["dim"] = table.dim();
  j["counts"] = table.counts;
  j["rows"] = std::move(rows);
  return j;
}

std::string iso_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct StageContext {
  const ExperimentConfig& cfg;
  const PipelineOptions& opt;
  const std::string run_dir;
  const std::string hash;
  PipelineData data;
  std::optional<EnsembleReference> reference_cache;

  const EnsembleReference& reference() {
    if (!reference_cache) reference_cache = ensemble_reference(cfg, data);
    return *reference_cache;
  }

  GpedSeeds seeds() const {
    return GpedSeeds{derive_seed(cfg.seed, "teacher"), derive_seed(cfg.seed, "student"),
                     derive_seed(cfg.seed, "data")};
  }

  std::string path(const std::string& rel) const { return run_dir + "/" + rel; }
};

void stage_sample(StageContext& ctx) {
  const EnsembleReference& ref = ctx.reference();
  save_model(ref.teacher, ctx.path("models/teacher.json"));

  const UncertaintyScores test = ensemble_scores(ref.test);
  json j;
  j["manifest_hash"] = ctx.hash;
  j["samples"] = ref.samples;
  j["test"] = {{"total", test.total}, {"expected_data", test.expected_data}};
  j["transfer"] = {{"expected_data", ensemble_scores(ref.transfer).expected_data}};
  j["ood"] = json::array();
  for (std::size_t i = 0; i < ctx.data.ood.size(); ++i) {
    const UncertaintyScores s = ensemble_scores(ref.ood[i]);
    j["ood"].push_back({{"name", ctx.data.ood[i].name},
                        {"total", s.total},
                        {"expected_data", s.expected_data}});
  }
  write_text_file(ctx.path("ensemble.json"), j.dump(2) + "\n");
}

void stage_distill(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const NetworkSpec sspec = student_spec(cfg);

  GpedOptions go;
  go.probe = &ctx.data.test;
  if (cfg.distill.lambda > 0.0) {
    go.regularizer = group_regularizer(build_groups(sspec), cfg.prune.scaled);
  }
  const GpedResult res =
      run_gped(teacher_spec(cfg), sspec, ctx.data.train, ctx.data.transfer, cfg.distill.target,
               distill_config(cfg), ctx.seeds(), go);
  save_model(res.student, ctx.path("models/student.json"));
  write_text_file(ctx.path("history.csv"), history_csv(res.history, ctx.hash));

  json tj = table_json(res.table);
  tj["manifest_hash"] = ctx.hash;
  write_text_file(ctx.path("models/table.json"), tj.dump(2) + "\n");

  if (cfg.end2.enabled) {
    const GpedResult res2 =
        run_end2(teacher_spec(cfg), end2_student_spec(cfg), ctx.data.train, ctx.data.transfer,
                 distill_config(cfg), ctx.seeds(), GpedOptions{&ctx.data.test, {}, {}, {}});
    save_model(res2.student, ctx.path("models/student_end2.json"));
    write_text_file(ctx.path("history_end2.csv"), history_csv(res2.history, ctx.hash));
  }
}

void stage_prune(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  require(cfg.prune.enabled, ErrorKind::Config, "the prune stage needs prune.enabled = true");
  const NetworkSpec sspec = student_spec(cfg);
  const GroupPartition partition = build_groups(sspec);
  const bool scalar_target = cfg.distill.target == ExpectationTarget::ExpectedEntropy ||
                             cfg.distill.target == ExpectationTarget::MarginalVariance;
  const EnsembleReference* ref = scalar_target ? &ctx.reference() : nullptr;

  struct Entry {
    bool ok = false;
    std::string error;
    double lambda = 0.0;
    PruneReport report;
    bool has_report = false;
    double metric_after = 0.0;
  };
  std::vector<Entry> entries(cfg.prune.lambda_grid.size());

  parallel_for(entries.size(), ctx.opt.workers, [&](std::size_t i) {
    Entry& e = entries[i];
    e.lambda = cfg.prune.lambda_grid[i];
    try {
      DistillConfig dc = distill_config(cfg);
      dc.lambda = e.lambda;
      GpedOptions go;
      go.regularizer = group_regularizer(partition, cfg.prune.scaled);
      const GpedResult res = run_gped(teacher_spec(cfg), sspec, ctx.data.train,
                                      ctx.data.transfer, cfg.distill.target, dc, ctx.seeds(), go);
      const PruneOutcome outcome = prune(res.student, partition, cfg.prune.epsilon);
      e.report = outcome.report;
      e.has_report = true;

      Model tuned = outcome.model;
      if (cfg.prune.fine_tune_epochs > 0) {
        FineTuneConfig ft;
        ft.epochs = cfg.prune.fine_tune_epochs;
        ft.batch = cfg.distill.student_batch;
        ft.learning_rate = default_restart_lr(tuned.spec);
        ft.target = cfg.distill.target;
        ft.loss = cfg.distill.loss;
        ft.joint_entropy_weight = cfg.distill.joint_weight;
        ft.normalize_grad = cfg.distill.normalize_grad;
        tuned = fine_tune(tuned, ctx.data.transfer, res.table, ft,
                          derive_seed(derive_seed(cfg.seed, "student"), "fine-tune"));
      }
      e.metric_after = headline_metric(cfg, tuned, ctx.data, ref);
      save_model(tuned, ctx.path("models/student_pruned_" + std::to_string(i) + ".json"));
      e.ok = true;
    } catch (const PruneError& pe) {
      e.error = pe.what();
      e.report = pe.report();
      e.has_report = true;
    } catch (const std::exception& ex) {
      e.error = ex.what();
    }
  });

  json j;
  j["manifest_hash"] = ctx.hash;
  j["entries"] = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    json je;
    je["lambda"] = e.lambda;
    je["ok"] = e.ok;
    if (!e.error.empty()) je["error"] = e.error;
    if (e.has_report) {
      je["removed_groups"] = e.report.removed_groups;
      je["params_before"] = e.report.params_before;
      je["params_after"] = e.report.params_after;
      je["flops_before"] = e.report.flops_before;
      je["flops_after"] = e.report.flops_after;
      je["layers"] = json::array();
      for (const LayerPruneRecord& rec : e.report.layers) {
        je["layers"].push_back({{"layer", rec.layer},
                                {"removed_units", rec.removed_units},
                                {"dropped_bias_magnitude", rec.dropped_bias_magnitude}});
      }
    }
    if (e.ok) {
      je["metric_after"] = e.metric_after;
      je["model"] = "models/student_pruned_" + std::to_string(i) + ".json";
    }
    j["entries"].push_back(std::move(je));
  }
  write_text_file(ctx.path("prune_report.json"), j.dump(2) + "\n");
}

void stage_search(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  require(cfg.search.enabled, ErrorKind::Config, "the search stage needs search.enabled = true");

  SearchSpace space;
  space.base = student_spec(cfg);
  space.k1_grid = cfg.search.k1_grid;
  space.k2_grid = cfg.search.k2_grid;

  const bool scalar_target = cfg.distill.target == ExpectationTarget::ExpectedEntropy ||
                             cfg.distill.target == ExpectationTarget::MarginalVariance;
  const EnsembleReference* ref = scalar_target ? &ctx.reference() : nullptr;

  const auto train_candidate = [&](const ArchCandidate& cand) {
    DistillConfig dc = distill_config(cfg);
    GpedOptions go;
    if (cfg.distill.lambda > 0.0) {
      go.regularizer = group_regularizer(build_groups(cand.spec), cfg.prune.scaled);
    }
    GpedSeeds seeds = ctx.seeds();
    seeds.student = derive_seed(seeds.student, "arch-" + std::to_string(cand.arch_id));
    return run_gped(teacher_spec(cfg), cand.spec, ctx.data.train, ctx.data.transfer,
                    cfg.distill.target, dc, seeds, go);
  };

  // train in parallel, then let the sequential merge consume the cache so the
  // frontier assembly has a single code path
  const std::vector<ArchCandidate> candidates = enumerate_candidates(space);
  std::vector<double> cached(candidates.size(), 0.0);
  std::vector<std::string> failed(candidates.size());
  parallel_for(candidates.size(), ctx.opt.workers, [&](std::size_t i) {
    try {
      const GpedResult res = train_candidate(candidates[i]);
      cached[i] = headline_metric(cfg, res.student, ctx.data, ref);
    } catch (const std::exception& ex) {
      failed[i] = ex.what();
    }
  });

  const SearchResult result = run_search(space, [&](const ArchCandidate& cand) {
    if (!failed[cand.arch_id].empty()) throw Error(ErrorKind::Numeric, failed[cand.arch_id]);
    return cached[cand.arch_id];
  });

  write_text_file(ctx.path("frontier.csv"), frontier_csv(result, ctx.hash));
  write_text_file(ctx.path("plots/frontier.svg"),
                  frontier_svg(result, ctx.hash, ctx.opt.no_timestamp ? "" : iso_utc_now()));
  if (result.has_best) {
    const GpedResult best = train_candidate(result.records[result.best].arch);
    save_model(best.student, ctx.path("models/student_best.json"));
  }
}

void stage_eval(StageContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const EnsembleReference& ref = ctx.reference();
  const std::size_t classes = spec_classes(cfg);

  RankingConfig rc;
  rc.trials = cfg.eval.trials;
  rc.sample = std::min(cfg.eval.sample, ctx.data.test.size());
  rc.k = std::min(cfg.eval.k, rc.sample);
  rc.seed = derive_seed(cfg.seed, "eval");

  const UncertaintyScores reference_test = ensemble_scores(ref.test);

  const auto evaluate_subject =
      [&](const UncertaintyScores& test_scores,
          const std::vector<std::pair<std::string, UncertaintyScores>>& ood_scores,
          std::size_t flops, std::size_t params) {
        return evaluate_scores(test_scores, ctx.data.test.labels, reference_test, ood_scores,
                               rc, flops, params);
      };

  json j;
  j["manifest_hash"] = ctx.hash;
  j["samples"] = ref.samples;

  {
    std::vector<std::pair<std::string, UncertaintyScores>> oods;
    for (std::size_t i = 0; i < ctx.data.ood.size(); ++i) {
      oods.emplace_back(ctx.data.ood[i].name, ensemble_scores(ref.ood[i]));
    }
    const NetworkSpec tspec = teacher_spec(cfg);
    // the ensemble stores and evaluates every retained sample
    const MetricReport teacher_report =
        evaluate_subject(reference_test, oods, count_flops(tspec) * ref.samples,
                         count_params(tspec) * ref.samples);
    j["teacher"] = report_json(teacher_report);
  }

  const auto student_subject = [&](const Model& m, bool dirichlet) {
    UncertaintyScores test_scores =
        dirichlet ? dirichlet_scores(m, ctx.data.test.features)
                  : student_scores(m, ctx.data.test.features, cfg.distill.target, classes);
    std::vector<std::pair<std::string, UncertaintyScores>> oods;
    for (const Dataset& o : ctx.data.ood) {
      oods.emplace_back(o.name, dirichlet
                                    ? dirichlet_scores(m, o.features)
                                    : student_scores(m, o.features, cfg.distill.target, classes));
    }
    return evaluate_subject(test_scores, oods, count_flops(m.spec), count_params(m.spec));
  };

  const std::string student_path = ctx.path("models/student.json");
  require(std::filesystem::exists(student_path), ErrorKind::Contract,
          "missing models/student.json; run the distill stage first");
  j["student"] = report_json(student_subject(load_model(student_path), false));

  const std::string end2_path = ctx.path("models/student_end2.json");
  if (std::filesystem::exists(end2_path)) {
    j["student_end2"] = report_json(student_subject(load_model(end2_path), true));
  }

  json pruned = json::array();
  for (std::size_t i = 0; i < cfg.prune.lambda_grid.size(); ++i) {
    const std::string path = ctx.path("models/student_pruned_" + std::to_string(i) + ".json");
    if (!std::filesystem::exists(path)) continue;
    json entry = report_json(student_subject(load_model(path), false));
    entry["lambda"] = cfg.prune.lambda_grid[i];
    pruned.push_back(std::move(entry));
  }
  if (!pruned.empty()) j["student_pruned"] = std::move(pruned);

  const std::string best_path = ctx.path("models/student_best.json");
  if (std::filesystem::exists(best_path)) {
    j["student_best"] = report_json(student_subject(load_model(best_path), false));
  }

  write_text_file(ctx.path("metrics.json"), j.dump(2) + "\n");
}

}  // namespace

PipelineData build_data(const ExperimentConfig& cfg) {
  const DatasetBlock& d = cfg.dataset;
  const std::uint64_t sd = derive_seed(cfg.seed, "data");
  PipelineData out;

  if (d.source == "gaussian_mixture") {
    out.train = gaussian_mixture(d.classes, d.dim, d.per_class, d.radius, d.sigma,
                                 derive_seed(sd, "train"));
    const std::size_t per_class_test = (d.test_n + d.classes - 1) / d.classes;
    out.test = gaussian_mixture(d.classes, d.dim, per_class_test, d.radius, d.sigma,
                                derive_seed(sd, "test"));
    if (out.test.size() > d.test_n) {
      out.test = subsample(out.test, d.test_n, derive_seed(sd, "test-trim"));
    }
  } else if (d.source == "synthetic_digits") {
    out.train = synthetic_digits(d.digits_n, derive_seed(sd, "train"), d.digits_noise);
    out.test = synthetic_digits(d.test_n, derive_seed(sd, "test"), d.digits_noise);
  } else if (d.source == "idx") {
    require(!d.train_images.empty() && !d.train_labels.empty(), ErrorKind::Config,
            "the idx source needs train image and label files");
    require(!d.test_images.empty() && !d.test_labels.empty(), ErrorKind::Config,
            "the idx source needs test image and label files");
    out.train = load_idx(d.train_images, d.train_labels, "train");
    out.test = load_idx(d.test_images, d.test_labels, "test");
  } else {
    raise(ErrorKind::Config, "unknown dataset source: " + d.source);
  }

  if (d.subsample > 0 && d.subsample < out.train.size()) {
    out.train = subsample(out.train, d.subsample, derive_seed(sd, "subsample"));
  }
  // corruption applies to the teacher's training signal; the test set stays clean
  if (d.mask_side > 0) {
    out.train = apply_mask(out.train, d.mask_side, derive_seed(sd, "mask"));
  }
  if (cfg.teacher.conv_channels.empty() && d.source != "gaussian_mixture") {
    out.train = flatten_features(out.train);
    out.test = flatten_features(out.test);
  }
  out.transfer = strip_labels(out.train);

  const std::uint64_t se = derive_seed(cfg.seed, "eval");
  for (const std::string& name : d.ood) {
    out.ood.push_back(
        synthetic_ood(out.test.features, name, "ood_" + name, derive_seed(se, "ood-" + name)));
  }
  return out;
}

std::vector<double> UncertaintyScores::knowledge_raw() const {
  require(!total.empty() && total.size() == expected_data.size(), ErrorKind::Contract,
          "disagreement needs both uncertainty kinds");
  std::vector<double> k(total.size());
  for (std::size_t i = 0; i < total.size(); ++i) k[i] = total[i] - expected_data[i];
  return k;
}

UncertaintyScores ensemble_scores(const EnsembleAccumulator& acc) {
  require(acc.samples >= 1, ErrorKind::Contract, "the ensemble holds no samples");
  UncertaintyScores s;
  s.probs = acc.mean_probs;
  const std::size_t classes = acc.classes();
  s.total.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    s.total[i] = entropy_nats(acc.mean_probs.ptr() + i * classes, classes);
  }
  s.expected_data = acc.mean_entropy;
  return s;
}

UncertaintyScores student_scores(const Model& m, const Tensor& features,
                                 ExpectationTarget target, std::size_t classes) {
  UncertaintyScores s;
  const Tensor out = forward(m, features);
  const std::size_t n = out.dim(0);
  switch (target) {
    case ExpectationTarget::PredictiveDistribution: {
      s.probs = out;
      s.total.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        s.total[i] = entropy_nats(out.ptr() + i * classes, classes);
      }
      break;
    }
    case ExpectationTarget::ExpectedEntropy: {
      s.expected_data.resize(n);
      for (std::size_t i = 0; i < n; ++i) s.expected_data[i] = clip_entropy(out.ptr()[i], classes);
      break;
    }
    case ExpectationTarget::MarginalVariance:
      break;  // no entropy-derived scores
    case ExpectationTarget::JointPredictiveEntropy: {
      s.probs = Tensor({n, classes});
      s.total.resize(n);
      s.expected_data.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = out.ptr() + i * (classes + 1);
        std::copy(row, row + classes, s.probs.ptr() + i * classes);
        s.total[i] = entropy_nats(row, classes);
        s.expected_data[i] = clip_entropy(row[classes], classes);
      }
      break;
    }
  }
  return s;
}

UncertaintyScores dirichlet_scores(const Model& m, const Tensor& features) {
  const Tensor alpha = forward(m, features);
  const std::size_t n = alpha.dim(0);
  const std::size_t classes = alpha.size() / std::max<std::size_t>(n, 1);
  UncertaintyScores s;
  s.probs = Tensor({n, classes});
  s.total.resize(n);
  s.expected_data.resize(n);
  std::vector<double> row(classes);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(alpha.ptr() + i * classes, alpha.ptr() + (i + 1) * classes, row.begin());
    const DirichletStats stats = dirichlet_statistics(row);
    std::copy(stats.predictive.begin(), stats.predictive.end(), s.probs.ptr() + i * classes);
    s.total[i] = stats.total;
    s.expected_data[i] = stats.expected_data;
  }
  return s;
}

MetricReport evaluate_scores(const UncertaintyScores& subject, const std::vector<int>& labels,
                             const UncertaintyScores& reference,
                             const std::vector<std::pair<std::string, UncertaintyScores>>& ood,
                             const RankingConfig& ranking, std::size_t flops,
                             std::size_t params) {
  MetricReport r;
  r.flops = flops;
  r.params = params;

  const bool has_probs = subject.probs.rank() == 2 && subject.probs.dim(0) > 0;
  if (has_probs && !labels.empty()) {
    r.has_distribution = true;
    r.nll = nll(subject.probs, labels);
    r.accuracy = accuracy(subject.probs, labels);
  }
  if (!subject.expected_data.empty() && !reference.expected_data.empty()) {
    r.has_expected_data = true;
    r.entropy_mae = entropy_mae(subject.expected_data, reference.expected_data);
  }
  r.has_knowledge = !subject.total.empty() && !subject.expected_data.empty();

  std::vector<double> knowledge_test;
  if (r.has_knowledge) {
    knowledge_test = subject.knowledge_raw();
    r.min_knowledge_raw = *std::min_element(knowledge_test.begin(), knowledge_test.end());
  }

  for (const auto& [name, scores] : ood) {
    OodReport o;
    o.name = name;
    if (!subject.total.empty() && !scores.total.empty()) {
      o.has_total = true;
      o.auroc_total = auroc(subject.total, scores.total);
    }
    if (r.has_knowledge && !scores.total.empty() && !scores.expected_data.empty()) {
      const std::vector<double> knowledge_ood = scores.knowledge_raw();
      r.min_knowledge_raw =
          std::min(r.min_knowledge_raw,
                   *std::min_element(knowledge_ood.begin(), knowledge_ood.end()));
      o.has_knowledge = true;
      o.auroc_knowledge =
          auroc(clipped_at_zero(knowledge_test), clipped_at_zero(knowledge_ood));
    }
    r.ood.push_back(std::move(o));
  }

  if (!subject.total.empty() && !reference.total.empty() &&
      subject.total.size() >= ranking.sample && ranking.sample >= ranking.k) {
    r.has_ranking = true;
    r.ndcg_total = ndcg_protocol(subject.total, clipped_at_zero(reference.total), ranking);
    if (r.has_knowledge && !reference.expected_data.empty()) {
      r.ndcg_knowledge = ndcg_protocol(clipped_at_zero(knowledge_test),
                                       clipped_at_zero(reference.knowledge_raw()), ranking);
    }
  }
  return r;
}

std::string run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opt) {
  const bool all = opt.stage == "all";
  const bool known = all || opt.stage == "sample" || opt.stage == "distill" ||
                     opt.stage == "prune" || opt.stage == "search" || opt.stage == "eval";
  require(known, ErrorKind::Config, "unknown stage: " + opt.stage);

  const std::string run_dir = cfg.out_dir + "/" + cfg.run_id;
  const std::string hash = manifest_fingerprint(cfg);
  json mj = json::parse(manifest_json(cfg));
  mj["manifest_hash"] = hash;
  write_text_file(run_dir + "/manifest.json", mj.dump(2) + "\n");
  std::filesystem::create_directories(run_dir + "/models");

  std::string current = "setup";
  try {
    StageContext ctx{cfg, opt, run_dir, hash, build_data(cfg), std::nullopt};
    if (all || opt.stage == "sample") {
      current = "sample";
      stage_sample(ctx);
    }
    if (all || opt.stage == "distill") {
      current = "distill";
      stage_distill(ctx);
    }
    if ((all && cfg.prune.enabled) || opt.stage == "prune") {
      current = "prune";
      stage_prune(ctx);
    }
    if ((all && cfg.search.enabled) || opt.stage == "search") {
      current = "search";
      stage_search(ctx);
    }
    if (all || opt.stage == "eval") {
      current = "eval";
      stage_eval(ctx);
    }
  } catch (const std::exception& e) {
    write_text_file(run_dir + "/FAILED", current + ": " + e.what() + "\n");
    throw;
  }
  std::filesystem::remove(run_dir + "/FAILED");
  return run_dir;
}

}  // namespace gped
