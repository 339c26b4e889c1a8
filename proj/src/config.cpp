#include "gped/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "gped/errors.hpp"
#include "gped/search.hpp"
#include "gped/textio.hpp"

namespace gped {

namespace {

using nlohmann::json;

// Typed getters over the flat key table; every problem lands in `errors`
// instead of aborting, so a validate run reports the whole file at once.
struct Reader {
  const TomlTable& table;
  std::vector<std::string>& errors;
  std::set<std::string> used;

  const TomlValue* use(const std::string& key) {
    used.insert(key);
    return table.find(key);
  }

  void complain(const std::string& key, const std::string& rule) {
    errors.push_back(key + ": " + rule);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Integer || v->integer < 0) {
      complain(key, "expected a nonnegative integer");
      return def;
    }
    return static_cast<std::uint64_t>(v->integer);
  }

  double f64(const std::string& key, double def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind == TomlValue::Kind::Integer) return static_cast<double>(v->integer);
    if (v->kind == TomlValue::Kind::Float) return v->real;
    complain(key, "expected a number");
    return def;
  }

  bool flag(const std::string& key, bool def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Boolean) {
      complain(key, "expected true or false");
      return def;
    }
    return v->boolean;
  }

  std::string str(const std::string& key, const std::string& def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::String) {
      complain(key, "expected a string");
      return def;
    }
    return v->str;
  }

  std::vector<double> f64s(const std::string& key, std::vector<double> def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Array) {
      complain(key, "expected an array of numbers");
      return def;
    }
    std::vector<double> out;
    for (const TomlValue& item : v->items) {
      if (item.kind == TomlValue::Kind::Integer) {
        out.push_back(static_cast<double>(item.integer));
      } else if (item.kind == TomlValue::Kind::Float) {
        out.push_back(item.real);
      } else {
        complain(key, "expected an array of numbers");
        return def;
      }
    }
    return out;
  }

  std::vector<std::size_t> u64s(const std::string& key, std::vector<std::size_t> def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Array) {
      complain(key, "expected an array of nonnegative integers");
      return def;
    }
    std::vector<std::size_t> out;
    for (const TomlValue& item : v->items) {
      if (item.kind != TomlValue::Kind::Integer || item.integer < 0) {
        complain(key, "expected an array of nonnegative integers");
        return def;
      }
      out.push_back(static_cast<std::size_t>(item.integer));
    }
    return out;
  }

  std::vector<std::string> strs(const std::string& key, std::vector<std::string> def) {
    const TomlValue* v = use(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Array) {
      complain(key, "expected an array of strings");
      return def;
    }
    std::vector<std::string> out;
    for (const TomlValue& item : v->items) {
      if (item.kind != TomlValue::Kind::String) {
        complain(key, "expected an array of strings");
        return def;
      }
      out.push_back(item.str);
    }
    return out;
  }
};

std::size_t resolved_classes(const ExperimentConfig& cfg) {
  return cfg.dataset.source == "gaussian_mixture" ? cfg.dataset.classes : 10;
}

std::size_t labeled_train_size(const ExperimentConfig& cfg) {
  const DatasetBlock& d = cfg.dataset;
  std::size_t n = 0;
  if (d.source == "gaussian_mixture") n = d.classes * d.per_class;
  if (d.source == "synthetic_digits") n = d.digits_n;
  if (n && d.subsample && d.subsample < n) n = d.subsample;
  return n;  // 0 = unknown until files load
}

// Conv templates bind kernel counts to K1 and the fc tail to K2; pure fc
// templates bind the first hidden layer to K1 and the rest to K2. The output
// layer never scales.
void mark_sites(NetworkSpec& spec) {
  std::vector<std::size_t> parametered;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerKind k = spec.layers[l].kind;
    if (k == LayerKind::Dense || k == LayerKind::Conv2D) parametered.push_back(l);
  }
  if (parametered.size() < 2) return;  // output only: nothing searchable
  parametered.pop_back();
  bool any_conv = false;
  for (std::size_t l : parametered) any_conv |= spec.layers[l].kind == LayerKind::Conv2D;
  for (std::size_t i = 0; i < parametered.size(); ++i) {
    LayerDesc& d = spec.layers[parametered[i]];
    if (any_conv) {
      d.multiplier_site = d.kind == LayerKind::Conv2D ? 1 : 2;
    } else {
      d.multiplier_site = i == 0 ? 1 : 2;
    }
  }
}

NetworkSpec student_template(const ExperimentConfig& cfg, std::size_t out_dim, Act head,
                             double head_temperature) {
  NetworkSpec spec;
  if (!cfg.teacher.conv_channels.empty()) {
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    for (std::size_t i = 0; i < cfg.teacher.conv_channels.size(); ++i) {
      blocks.emplace_back(cfg.teacher.conv_channels[i], cfg.teacher.conv_kernels[i]);
    }
    const std::vector<std::size_t>& tail =
        cfg.distill.hidden.empty() ? cfg.teacher.conv_hidden : cfg.distill.hidden;
    spec = conv_spec({1, 28, 28}, blocks, cfg.teacher.pool, tail, out_dim, head,
                     cfg.distill.dropout, head_temperature);
  } else {
    const std::size_t in_dim =
        cfg.dataset.source == "gaussian_mixture" ? cfg.dataset.dim : 784;
    const std::vector<std::size_t>& hidden =
        cfg.distill.hidden.empty() ? cfg.teacher.hidden : cfg.distill.hidden;
    spec = fc_spec(in_dim, hidden, out_dim, head, cfg.distill.dropout, head_temperature);
  }
  if (cfg.search.enabled) mark_sites(spec);
  return spec;
}

}  // namespace

ResolvedConfig resolve_config(const TomlTable& table) {
  ResolvedConfig out;
  ExperimentConfig& cfg = out.config;
  Reader r{table, out.errors, {}};

  cfg.dataset.source = r.str("dataset.source", cfg.dataset.source);
  cfg.dataset.classes = r.u64("dataset.classes", cfg.dataset.classes);
  cfg.dataset.dim = r.u64("dataset.dim", cfg.dataset.dim);
  cfg.dataset.per_class = r.u64("dataset.per_class", cfg.dataset.per_class);
  cfg.dataset.radius = r.f64("dataset.radius", cfg.dataset.radius);
  cfg.dataset.sigma = r.f64("dataset.sigma", cfg.dataset.sigma);
  cfg.dataset.digits_n = r.u64("dataset.n", cfg.dataset.digits_n);
  cfg.dataset.digits_noise = r.f64("dataset.noise", cfg.dataset.digits_noise);
  cfg.dataset.train_images = r.str("dataset.train_images", "");
  cfg.dataset.train_labels = r.str("dataset.train_labels", "");
  cfg.dataset.test_images = r.str("dataset.test_images", "");
  cfg.dataset.test_labels = r.str("dataset.test_labels", "");
  cfg.dataset.subsample = r.u64("dataset.subsample", cfg.dataset.subsample);
  cfg.dataset.mask_side = r.u64("dataset.mask_side", cfg.dataset.mask_side);
  cfg.dataset.test_n = r.u64("dataset.test_n", cfg.dataset.test_n);
  cfg.dataset.ood = r.strs("dataset.ood", cfg.dataset.ood);

  cfg.teacher.hidden = r.u64s("teacher.hidden", cfg.teacher.hidden);
  cfg.teacher.conv_channels = r.u64s("teacher.conv_channels", {});
  cfg.teacher.conv_kernels = r.u64s("teacher.conv_kernels", {});
  cfg.teacher.pool = r.u64("teacher.pool", cfg.teacher.pool);
  cfg.teacher.conv_hidden = r.u64s("teacher.conv_hidden", {});

  cfg.sgld.total_iters = r.u64("sgld.total_iters", cfg.sgld.total_iters);
  cfg.sgld.batch = r.u64("sgld.batch", cfg.sgld.batch);
  cfg.sgld.eta = r.f64("sgld.eta", cfg.sgld.eta);
  cfg.sgld.prior_precision = r.f64("sgld.prior_precision", cfg.sgld.prior_precision);

  cfg.prune.enabled = r.flag("prune.enabled", cfg.prune.enabled);
  cfg.prune.lambda_grid = r.f64s("prune.lambda_grid", cfg.prune.lambda_grid);
  cfg.prune.epsilon = r.f64("prune.epsilon", cfg.prune.epsilon);
  cfg.prune.scaled = r.flag("prune.scaled", cfg.prune.scaled);
  cfg.prune.fine_tune_epochs = r.u64("prune.fine_tune_epochs", cfg.prune.fine_tune_epochs);

  const std::string target = r.str("distill.target", "predictive");
  if (target == "predictive") {
    cfg.distill.target = ExpectationTarget::PredictiveDistribution;
  } else if (target == "entropy") {
    cfg.distill.target = ExpectationTarget::ExpectedEntropy;
  } else if (target == "variance") {
    cfg.distill.target = ExpectationTarget::MarginalVariance;
  } else if (target == "joint") {
    cfg.distill.target = ExpectationTarget::JointPredictiveEntropy;
  } else {
    r.complain("distill.target", "must be predictive, entropy, variance, or joint");
  }

  const std::string estimator = r.str("distill.estimator", "uo");
  if (estimator == "us") {
    cfg.distill.estimator = Estimator::Us;
  } else if (estimator == "uo") {
    cfg.distill.estimator = Estimator::Uo;
  } else {
    r.complain("distill.estimator", "must be us or uo");
  }

  const std::string loss = r.str("distill.loss", "cross_entropy");
  if (loss == "cross_entropy") {
    cfg.distill.loss = StudentLoss::CrossEntropy;
  } else if (loss == "l1") {
    cfg.distill.loss = StudentLoss::L1;
  } else {
    r.complain("distill.loss", "must be cross_entropy or l1");
  }

  cfg.distill.burn_in = r.u64("distill.burn_in", cfg.distill.burn_in);
  cfg.distill.thinning = r.u64("distill.thinning", cfg.distill.thinning);
  cfg.distill.student_batch = r.u64("distill.student_batch", cfg.distill.student_batch);
  cfg.distill.student_lr = r.f64("distill.student_lr", cfg.distill.student_lr);
  cfg.distill.lr_halving_interval =
      r.u64("distill.lr_halving_interval", cfg.distill.lr_halving_interval);
  cfg.distill.dropout = r.f64("distill.dropout", cfg.prune.enabled ? 0.0 : 0.5);
  cfg.distill.hidden = r.u64s("distill.hidden", {});
  cfg.distill.input_noise = r.f64("distill.input_noise", cfg.distill.input_noise);
  cfg.distill.joint_weight = r.f64("distill.joint_weight", cfg.distill.joint_weight);
  cfg.distill.normalize_grad = r.flag("distill.normalize_grad", cfg.distill.normalize_grad);
  cfg.distill.probe_every = r.u64("distill.probe_every", cfg.distill.probe_every);
  cfg.distill.lambda = r.f64("distill.lambda", cfg.distill.lambda);

  cfg.search.enabled = r.flag("search.enabled", cfg.search.enabled);
  cfg.search.k1_grid = r.f64s("search.k1_grid", cfg.search.k1_grid);
  cfg.search.k2_grid = r.f64s("search.k2_grid", cfg.search.k2_grid);

  cfg.eval.trials = r.u64("eval.trials", cfg.eval.trials);
  cfg.eval.sample = r.u64("eval.sample", cfg.eval.sample);
  cfg.eval.k = r.u64("eval.k", cfg.eval.k);

  cfg.end2.enabled = r.flag("end2.enabled", cfg.end2.enabled);
  cfg.end2.temperature = r.f64("end2.temperature", cfg.end2.temperature);

  cfg.seed = r.u64("seed", cfg.seed);
  cfg.out_dir = r.str("output.dir", cfg.out_dir);
  cfg.run_id = r.str("output.run_id", cfg.run_id);

  for (const auto& [key, value] : table.values) {
    (void)value;
    if (!r.used.count(key)) out.errors.push_back("unknown key: " + key);
  }
  return out;
}

std::vector<std::string> config_errors(const ExperimentConfig& cfg) {
  std::vector<std::string> errs;
  const auto bad = [&errs](const std::string& what) { errs.push_back(what); };
  const DatasetBlock& d = cfg.dataset;

  const bool known_source = d.source == "gaussian_mixture" || d.source == "synthetic_digits" ||
                            d.source == "idx";
  if (!known_source) {
    bad("dataset.source: must be gaussian_mixture, synthetic_digits, or idx");
  }
  if (d.source == "gaussian_mixture") {
    if (d.classes < 2) bad("dataset.classes: need at least 2 classes");
    if (d.dim < 2) bad("dataset.dim: mixture features need at least 2 dimensions");
    if (d.per_class < 1) bad("dataset.per_class: need at least one case per class");
    if (!(d.radius > 0.0)) bad("dataset.radius: must be positive");
    if (!(d.sigma > 0.0)) bad("dataset.sigma: must be positive");
    if (d.mask_side > 0) bad("dataset.mask_side: requires an image source");
  }
  if (d.source == "synthetic_digits") {
    if (d.digits_n < 1) bad("dataset.n: need at least one instance");
    if (!(d.digits_noise >= 0.0 && d.digits_noise < 1.0)) {
      bad("dataset.noise: must lie in [0, 1)");
    }
    if (d.mask_side > 28) bad("dataset.mask_side: cannot exceed the 28-pixel image side");
  }
  if (d.source == "idx") {
    if (d.train_images.empty()) {
      bad("dataset.train_images: required for the idx source");
    } else if (!std::filesystem::exists(d.train_images)) {
      bad("dataset.train_images: file not found: " + d.train_images);
    }
    if (d.train_labels.empty()) {
      bad("dataset.train_labels: required for the idx source");
    } else if (!std::filesystem::exists(d.train_labels)) {
      bad("dataset.train_labels: file not found: " + d.train_labels);
    }
    if (!d.test_images.empty() && !std::filesystem::exists(d.test_images)) {
      bad("dataset.test_images: file not found: " + d.test_images);
    }
    if (!d.test_labels.empty() && !std::filesystem::exists(d.test_labels)) {
      bad("dataset.test_labels: file not found: " + d.test_labels);
    }
    if (d.test_images.empty() != d.test_labels.empty()) {
      bad("dataset.test_images: test images and labels must be given together");
    }
  } else if (d.test_n < 1) {
    bad("dataset.test_n: need at least one held-out instance");
  }
  for (const std::string& name : d.ood) {
    if (name != "uniform" && name != "gaussian") {
      bad("dataset.ood: unknown set '" + name + "' (expected uniform or gaussian)");
    }
  }

  const std::size_t n_train = labeled_train_size(cfg);
  if (n_train && d.subsample > 0 && d.subsample > n_train) {
    bad("dataset.subsample: exceeds the labeled training set size");
  }

  const bool conv = !cfg.teacher.conv_channels.empty();
  if (conv) {
    if (d.source == "gaussian_mixture") {
      bad("teacher.conv_channels: conv teachers need an image source");
    }
    if (cfg.teacher.conv_kernels.size() != cfg.teacher.conv_channels.size()) {
      bad("teacher.conv_kernels: needs one kernel size per conv block");
    }
    if (cfg.teacher.pool < 1) bad("teacher.pool: must be at least 1");
    for (std::size_t w : cfg.teacher.conv_channels) {
      if (w < 1) bad("teacher.conv_channels: widths must be positive");
    }
    for (std::size_t k : cfg.teacher.conv_kernels) {
      if (k < 1) bad("teacher.conv_kernels: kernel sizes must be positive");
    }
  } else {
    if (cfg.teacher.hidden.empty()) bad("teacher.hidden: need at least one hidden layer");
    for (std::size_t w : cfg.teacher.hidden) {
      if (w < 1) bad("teacher.hidden: widths must be positive");
    }
  }

  if (cfg.sgld.total_iters < 1) bad("sgld.total_iters: must be at least 1");
  if (!(cfg.sgld.eta > 0.0)) bad("sgld.eta: must be positive");
  if (cfg.sgld.prior_precision < 0.0) bad("sgld.prior_precision: must be nonnegative");
  if (cfg.sgld.batch < 1) bad("sgld.batch: must be at least 1");
  if (n_train && cfg.sgld.batch > n_train) {
    bad("sgld.batch: exceeds the labeled training set size");
  }

  if (cfg.distill.burn_in >= cfg.sgld.total_iters) {
    bad("distill.burn_in must be < sgld.total_iters");
  }
  if (cfg.distill.thinning < 1) bad("distill.thinning: must be at least 1");
  if (cfg.distill.student_batch < 1) bad("distill.student_batch: must be at least 1");
  if (n_train && cfg.distill.student_batch > n_train) {
    bad("distill.student_batch: exceeds the transfer set size");
  }
  if (!(cfg.distill.student_lr > 0.0)) bad("distill.student_lr: must be positive");
  if (!(cfg.distill.dropout >= 0.0 && cfg.distill.dropout < 1.0)) {
    bad("distill.dropout: must lie in [0, 1)");
  }
  if (cfg.prune.enabled && cfg.distill.dropout > 0.0) {
    bad("distill.dropout: must be 0 when prune.enabled (group penalty replaces dropout)");
  }
  for (std::size_t w : cfg.distill.hidden) {
    if (w < 1) bad("distill.hidden: widths must be positive");
  }
  if (cfg.distill.input_noise < 0.0) bad("distill.input_noise: must be nonnegative");
  if (cfg.distill.joint_weight < 0.0) bad("distill.joint_weight: must be nonnegative");
  if (cfg.distill.probe_every < 1) bad("distill.probe_every: must be at least 1");
  if (cfg.distill.lambda < 0.0) bad("distill.lambda: must be nonnegative");
  if (cfg.distill.lambda > 0.0 && !cfg.prune.enabled) {
    bad("distill.lambda: a positive penalty requires prune.enabled");
  }
  if (cfg.distill.loss == StudentLoss::CrossEntropy &&
      (cfg.distill.target == ExpectationTarget::ExpectedEntropy ||
       cfg.distill.target == ExpectationTarget::MarginalVariance)) {
    bad("distill.loss: scalar targets train with the l1 loss");
  }

  if (cfg.prune.enabled) {
    if (cfg.prune.lambda_grid.empty()) bad("prune.lambda_grid: must be nonempty");
    for (double l : cfg.prune.lambda_grid) {
      if (!(l > 0.0) || !std::isfinite(l)) bad("prune.lambda_grid: entries must be positive");
    }
    if (!(cfg.prune.epsilon > 0.0)) bad("prune.epsilon: must be positive");
  }

  if (cfg.search.enabled) {
    try {
      SearchSpace space;
      space.base = student_spec(cfg);
      space.k1_grid = cfg.search.k1_grid;
      space.k2_grid = cfg.search.k2_grid;
      enumerate_candidates(space);
    } catch (const Error& e) {
      bad(std::string("search: ") + e.what());
    }
  }

  if (cfg.eval.trials < 1) bad("eval.trials: must be at least 1");
  if (cfg.eval.sample < 1) bad("eval.sample: must be at least 1");
  if (cfg.eval.k < 1) bad("eval.k: must be at least 1");
  if (cfg.eval.k > cfg.eval.sample) bad("eval.k: cannot exceed eval.sample");

  if (!(cfg.end2.temperature > 0.0)) bad("end2.temperature: must be positive");

  if (cfg.run_id.empty()) bad("output.run_id: must be nonempty");
  if (cfg.run_id.find('/') != std::string::npos ||
      cfg.run_id.find('\\') != std::string::npos || cfg.run_id.find("..") != std::string::npos) {
    bad("output.run_id: must be a plain path component");
  }
  if (cfg.out_dir.empty()) bad("output.dir: must be nonempty");

  return errs;
}

NetworkSpec teacher_spec(const ExperimentConfig& cfg) {
  const std::size_t classes = resolved_classes(cfg);
  if (!cfg.teacher.conv_channels.empty()) {
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    for (std::size_t i = 0; i < cfg.teacher.conv_channels.size(); ++i) {
      blocks.emplace_back(cfg.teacher.conv_channels[i], cfg.teacher.conv_kernels[i]);
    }
    return conv_spec({1, 28, 28}, blocks, cfg.teacher.pool, cfg.teacher.conv_hidden, classes,
                     Act::Softmax);
  }
  const std::size_t in_dim = cfg.dataset.source == "gaussian_mixture" ? cfg.dataset.dim : 784;
  return fc_spec(in_dim, cfg.teacher.hidden, classes, Act::Softmax);
}

NetworkSpec student_spec(const ExperimentConfig& cfg) {
  const std::size_t classes = resolved_classes(cfg);
  return student_template(cfg, target_dim(cfg.distill.target, classes),
                          target_head(cfg.distill.target), 1.0);
}

NetworkSpec end2_student_spec(const ExperimentConfig& cfg) {
  return student_template(cfg, resolved_classes(cfg), Act::Exponential, cfg.end2.temperature);
}

DistillConfig distill_config(const ExperimentConfig& cfg) {
  DistillConfig dc;
  dc.total_steps = cfg.sgld.total_iters;
  dc.burn_in = cfg.distill.burn_in;
  dc.thinning = cfg.distill.thinning;
  dc.teacher_batch = cfg.sgld.batch;
  dc.student_batch = cfg.distill.student_batch;
  dc.teacher_rate = StepSchedule::constant(cfg.sgld.eta);
  dc.student_rate = cfg.distill.lr_halving_interval > 0
                        ? StepSchedule::halving(cfg.distill.student_lr,
                                                cfg.distill.lr_halving_interval)
                        : StepSchedule::constant(cfg.distill.student_lr);
  dc.teacher_prior = GaussianPrior{0.0, cfg.sgld.prior_precision};
  dc.estimator = cfg.distill.estimator;
  dc.loss = cfg.distill.loss;
  dc.lambda = cfg.distill.lambda;
  dc.normalize_student_grad = cfg.distill.normalize_grad;
  dc.input_noise_sigma = cfg.distill.input_noise;
  dc.joint_entropy_weight = cfg.distill.joint_weight;
  dc.probe_every = cfg.distill.probe_every;
  return dc;
}

std::string manifest_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = {
      {"source", cfg.dataset.source},
      {"classes", resolved_classes(cfg)},
      {"dim", cfg.dataset.dim},
      {"per_class", cfg.dataset.per_class},
      {"radius", cfg.dataset.radius},
      {"sigma", cfg.dataset.sigma},
      {"n", cfg.dataset.digits_n},
      {"noise", cfg.dataset.digits_noise},
      {"train_images", cfg.dataset.train_images},
      {"train_labels", cfg.dataset.train_labels},
      {"test_images", cfg.dataset.test_images},
      {"test_labels", cfg.dataset.test_labels},
      {"subsample", cfg.dataset.subsample},
      {"mask_side", cfg.dataset.mask_side},
      {"test_n", cfg.dataset.test_n},
      {"ood", cfg.dataset.ood},
  };
  j["teacher"] = {
      {"hidden", cfg.teacher.hidden},
      {"conv_channels", cfg.teacher.conv_channels},
      {"conv_kernels", cfg.teacher.conv_kernels},
      {"pool", cfg.teacher.pool},
      {"conv_hidden", cfg.teacher.conv_hidden},
  };
  j["sgld"] = {
      {"total_iters", cfg.sgld.total_iters},
      {"batch", cfg.sgld.batch},
      {"eta", cfg.sgld.eta},
      {"prior_precision", cfg.sgld.prior_precision},
  };
  j["distill"] = {
      {"target", target_name(cfg.distill.target)},
      {"estimator", estimator_name(cfg.distill.estimator)},
      {"loss", loss_name(cfg.distill.loss)},
      {"burn_in", cfg.distill.burn_in},
      {"thinning", cfg.distill.thinning},
      {"student_batch", cfg.distill.student_batch},
      {"student_lr", cfg.distill.student_lr},
      {"lr_halving_interval", cfg.distill.lr_halving_interval},
      {"dropout", cfg.distill.dropout},
      {"hidden", cfg.distill.hidden},
      {"input_noise", cfg.distill.input_noise},
      {"joint_weight", cfg.distill.joint_weight},
      {"normalize_grad", cfg.distill.normalize_grad},
      {"probe_every", cfg.distill.probe_every},
      {"lambda", cfg.distill.lambda},
  };
  j["prune"] = {
      {"enabled", cfg.prune.enabled},
      {"lambda_grid", cfg.prune.lambda_grid},
      {"epsilon", cfg.prune.epsilon},
      {"scaled", cfg.prune.scaled},
      {"fine_tune_epochs", cfg.prune.fine_tune_epochs},
  };
  j["search"] = {
      {"enabled", cfg.search.enabled},
      {"k1_grid", cfg.search.k1_grid},
      {"k2_grid", cfg.search.k2_grid},
  };
  j["eval"] = {
      {"trials", cfg.eval.trials},
      {"sample", cfg.eval.sample},
      {"k", cfg.eval.k},
  };
  j["end2"] = {
      {"enabled", cfg.end2.enabled},
      {"temperature", cfg.end2.temperature},
  };
  j["seed"] = cfg.seed;
  j["seeds"] = {
      {"data", derive_seed(cfg.seed, "data")},
      {"teacher", derive_seed(cfg.seed, "teacher")},
      {"student", derive_seed(cfg.seed, "student")},
      {"eval", derive_seed(cfg.seed, "eval")},
  };
  j["output"] = {
      {"dir", cfg.out_dir},
      {"run_id", cfg.run_id},
  };
  j["conventions"] = {
      {"entropy_log_base", "natural"},
      {"ndcg_gain", "raw uncertainty clipped at zero"},
      {"ndcg_ties", "stable input order"},
      {"ood_scores",
       "total = predictive entropy; knowledge = total - expected data, "
       "clipped at zero for scoring with the raw value logged"},
  };
  return j.dump(2);
}

std::string manifest_fingerprint(const ExperimentConfig& cfg) {
  return hex64(fnv1a(manifest_json(cfg)));
}

}  // namespace gped
