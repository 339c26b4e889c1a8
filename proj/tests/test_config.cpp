#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gped/config.hpp"
#include "gped/errors.hpp"
#include "gped/network.hpp"
#include "gped/rng.hpp"
#include "gped/toml.hpp"

using namespace gped;

namespace {

bool has_error(const std::vector<std::string>& errors, const std::string& needle) {
  return std::any_of(errors.begin(), errors.end(), [&](const std::string& e) {
    return e.find(needle) != std::string::npos;
  });
}

ExperimentConfig small_valid() {
  ExperimentConfig cfg;
  cfg.sgld.total_iters = 2000;
  cfg.sgld.batch = 50;
  cfg.distill.burn_in = 500;
  cfg.distill.thinning = 10;
  cfg.distill.student_batch = 50;
  return cfg;
}

}  // namespace

TEST_CASE("toml: scalars, arrays, tables, comments") {
  const std::string text =
      "# experiment\n"
      "seed = 42\n"
      "title = \"a \\\"quoted\\\" name\\n\"\n"
      "big = 1_000_000\n"
      "rate = 4e-6\n"
      "neg = -1.5\n"
      "flag = true\n"
      "off = false\n"
      "\n"
      "[teacher]\n"
      "hidden = [400, 400]  # widths\n"
      "grid = [\n"
      "  0.25,\n"
      "  0.5,\n"
      "  1.0,\n"
      "]\n"
      "\n"
      "[teacher.inner]\n"
      "k = 3\n"
      "\n"
      "[teacher]\n"
      "pool = 2\n";
  const TomlTable t = parse_toml(text);

  REQUIRE(t.has("seed"));
  CHECK(t.find("seed")->kind == TomlValue::Kind::Integer);
  CHECK(t.find("seed")->integer == 42);
  CHECK(t.find("title")->str == "a \"quoted\" name\n");
  CHECK(t.find("big")->integer == 1000000);
  CHECK(t.find("rate")->kind == TomlValue::Kind::Float);
  CHECK(t.find("rate")->real == doctest::Approx(4e-6));
  CHECK(t.find("neg")->real == doctest::Approx(-1.5));
  CHECK(t.find("flag")->boolean == true);
  CHECK(t.find("off")->boolean == false);

  const TomlValue* hidden = t.find("teacher.hidden");
  REQUIRE(hidden != nullptr);
  REQUIRE(hidden->items.size() == 2);
  CHECK(hidden->items[0].integer == 400);

  const TomlValue* grid = t.find("teacher.grid");
  REQUIRE(grid != nullptr);
  REQUIRE(grid->items.size() == 3);  // trailing comma tolerated
  CHECK(grid->items[1].real == doctest::Approx(0.5));

  CHECK(t.find("teacher.inner.k")->integer == 3);
  CHECK(t.find("teacher.pool")->integer == 2);  // table reopened

  CHECK(t.find("seed")->number() == 42.0);  // integers widen
  CHECK_THROWS_AS((void)t.find("title")->number(), Error);
}

TEST_CASE("toml: malformed input names the line") {
  const auto fails_with = [](const std::string& text, const std::string& needle) {
    try {
      parse_toml(text);
      FAIL("expected a format error for: " << text);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      INFO("wanted '" << needle << "' in '" << e.what() << "'");
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };

  fails_with("a = 1\nb = \"unterminated\n", "line 2");
  fails_with("a = 1\na = 2\n", "duplicate key 'a'");
  fails_with("a = 1\na = 2\n", "line 2");
  fails_with("x 3\n", "expected '='");
  fails_with("x = \n", "expected a value");
  fails_with("x = [1, 2\n\n", "expected ',' or ']' in array");
  fails_with("x = 1.2.3\n", "malformed number");
  fails_with("x = maybe\n", "unrecognized value 'maybe'");
  fails_with("[teacher\nk = 1\n", "expected ']'");
  fails_with("a = 1 extra\n", "unexpected text");
  fails_with("s = \"bad \\q escape\"\n", "unsupported escape");

  CHECK_THROWS_AS(parse_toml_file("/nonexistent/path.toml"), Error);
  try {
    parse_toml_file("/nonexistent/path.toml");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/path.toml") != std::string::npos);
  }
}

TEST_CASE("resolve_config: empty table yields pure defaults") {
  const ResolvedConfig r = resolve_config(TomlTable{});
  CHECK(r.errors.empty());
  const ExperimentConfig& c = r.config;
  CHECK(c.dataset.source == "gaussian_mixture");
  CHECK(c.dataset.classes == 3);
  CHECK(c.dataset.per_class == 200);
  CHECK(c.dataset.test_n == 600);
  CHECK(c.dataset.ood == std::vector<std::string>{"uniform", "gaussian"});
  CHECK(c.teacher.hidden == std::vector<std::size_t>{400, 400});
  CHECK(c.sgld.total_iters == 1000000);
  CHECK(c.sgld.eta == doctest::Approx(4e-6));
  CHECK(c.sgld.prior_precision == doctest::Approx(10.0));
  CHECK(c.distill.target == ExpectationTarget::PredictiveDistribution);
  CHECK(c.distill.estimator == Estimator::Uo);
  CHECK(c.distill.loss == StudentLoss::CrossEntropy);
  CHECK(c.distill.burn_in == 1000);
  CHECK(c.distill.thinning == 100);
  CHECK(c.distill.student_lr == doctest::Approx(1e-3));
  CHECK(c.distill.dropout == doctest::Approx(0.5));
  CHECK(c.prune.enabled == false);
  CHECK(c.prune.lambda_grid.size() == 6);
  CHECK(c.prune.fine_tune_epochs == 600);
  CHECK(c.search.k1_grid == std::vector<double>{0.25, 0.5, 1.0, 2.0, 4.0});
  CHECK(c.eval.trials == 500);
  CHECK(c.eval.sample == 100);
  CHECK(c.eval.k == 20);
  CHECK(c.end2.temperature == doctest::Approx(2.5));
  CHECK(c.seed == 42);
  CHECK(c.out_dir == "out");
  CHECK(c.run_id == "run");
}

TEST_CASE("resolve_config: values land, dropout default follows pruning") {
  TomlTable t = parse_toml(
      "seed = 7\n"
      "[dataset]\n"
      "source = \"synthetic_digits\"\n"
      "n = 5000\n"
      "noise = 0.1\n"
      "[distill]\n"
      "target = \"joint\"\n"
      "estimator = \"us\"\n"
      "loss = \"l1\"\n"
      "[prune]\n"
      "enabled = true\n"
      "[output]\n"
      "dir = \"/tmp/x\"\n"
      "run_id = \"exp1\"\n");
  const ResolvedConfig r = resolve_config(t);
  CHECK(r.errors.empty());
  CHECK(r.config.seed == 7);
  CHECK(r.config.dataset.source == "synthetic_digits");
  CHECK(r.config.dataset.digits_n == 5000);
  CHECK(r.config.dataset.digits_noise == doctest::Approx(0.1));
  CHECK(r.config.distill.target == ExpectationTarget::JointPredictiveEntropy);
  CHECK(r.config.distill.estimator == Estimator::Us);
  CHECK(r.config.distill.loss == StudentLoss::L1);
  // group penalty replaces dropout unless the file overrides
  CHECK(r.config.distill.dropout == 0.0);
  CHECK(r.config.out_dir == "/tmp/x");
  CHECK(r.config.run_id == "exp1");

  const ResolvedConfig plain = resolve_config(parse_toml(""));
  CHECK(plain.config.distill.dropout == doctest::Approx(0.5));
}

TEST_CASE("resolve_config: type problems and unknown keys all reported") {
  const ResolvedConfig r = resolve_config(parse_toml(
      "seed = -1\n"
      "bogus = 1\n"
      "[dataset]\n"
      "per_class = \"many\"\n"
      "[distill]\n"
      "target = \"sideways\"\n"
      "[teacher]\n"
      "hidden = [10, -3]\n"
      "typo_key = 4\n"));
  CHECK(has_error(r.errors, "seed: expected a nonnegative integer"));
  CHECK(has_error(r.errors, "unknown key: bogus"));
  CHECK(has_error(r.errors, "dataset.per_class: expected a nonnegative integer"));
  CHECK(has_error(r.errors, "distill.target: must be predictive, entropy, variance, or joint"));
  CHECK(has_error(r.errors, "teacher.hidden: expected an array of nonnegative integers"));
  CHECK(has_error(r.errors, "unknown key: teacher.typo_key"));
  // defaults survive every rejection
  CHECK(r.config.seed == 42);
  CHECK(r.config.dataset.per_class == 200);
  CHECK(r.config.distill.target == ExpectationTarget::PredictiveDistribution);
  CHECK(r.config.teacher.hidden == std::vector<std::size_t>{400, 400});
}

TEST_CASE("config_errors: cross-field rules") {
  CHECK(config_errors(small_valid()).empty());

  SUBCASE("burn-in bound uses the documented wording") {
    ExperimentConfig c = small_valid();
    c.distill.burn_in = c.sgld.total_iters;
    CHECK(has_error(config_errors(c), "distill.burn_in must be < sgld.total_iters"));
  }
  SUBCASE("positive penalty requires pruning") {
    ExperimentConfig c = small_valid();
    c.distill.lambda = 1e-4;
    CHECK(has_error(config_errors(c), "distill.lambda: a positive penalty requires prune.enabled"));
  }
  SUBCASE("pruning forbids dropout") {
    ExperimentConfig c = small_valid();
    c.prune.enabled = true;
    c.distill.dropout = 0.5;
    CHECK(has_error(config_errors(c),
                    "distill.dropout: must be 0 when prune.enabled (group penalty replaces dropout)"));
    c.distill.dropout = 0.0;
    CHECK(config_errors(c).empty());
  }
  SUBCASE("scalar targets need the l1 loss") {
    ExperimentConfig c = small_valid();
    c.distill.target = ExpectationTarget::ExpectedEntropy;
    CHECK(has_error(config_errors(c), "distill.loss: scalar targets train with the l1 loss"));
    c.distill.loss = StudentLoss::L1;
    CHECK(config_errors(c).empty());
  }
  SUBCASE("masking requires an image source and fits the image") {
    ExperimentConfig c = small_valid();
    c.dataset.mask_side = 14;
    CHECK(has_error(config_errors(c), "dataset.mask_side: requires an image source"));
    c.dataset.source = "synthetic_digits";
    CHECK(config_errors(c).empty());
    c.dataset.mask_side = 29;
    CHECK(has_error(config_errors(c), "dataset.mask_side: cannot exceed the 28-pixel image side"));
  }
  SUBCASE("idx source demands existing files, in pairs") {
    ExperimentConfig c = small_valid();
    c.dataset.source = "idx";
    std::vector<std::string> errs = config_errors(c);
    CHECK(has_error(errs, "dataset.train_images: required for the idx source"));
    CHECK(has_error(errs, "dataset.train_labels: required for the idx source"));
    c.dataset.train_images = "/nonexistent/images.idx";
    c.dataset.train_labels = "/nonexistent/labels.idx";
    c.dataset.test_images = "/nonexistent/t_images.idx";
    errs = config_errors(c);
    CHECK(has_error(errs, "dataset.train_images: file not found: /nonexistent/images.idx"));
    CHECK(has_error(errs, "dataset.test_images: test images and labels must be given together"));
  }
  SUBCASE("batches cannot exceed the labeled set") {
    ExperimentConfig c = small_valid();
    c.dataset.per_class = 10;  // 30 labeled cases
    c.sgld.batch = 31;
    c.distill.student_batch = 31;
    const std::vector<std::string> errs = config_errors(c);
    CHECK(has_error(errs, "sgld.batch: exceeds the labeled training set size"));
    CHECK(has_error(errs, "distill.student_batch: exceeds the transfer set size"));
  }
  SUBCASE("subsample bound respects the source size") {
    ExperimentConfig c = small_valid();
    c.dataset.subsample = c.dataset.classes * c.dataset.per_class + 1;
    CHECK(has_error(config_errors(c), "dataset.subsample: exceeds the labeled training set size"));
  }
  SUBCASE("conv teachers need an image source and matched kernels") {
    ExperimentConfig c = small_valid();
    c.teacher.conv_channels = {10, 20};
    c.teacher.conv_kernels = {5};
    const std::vector<std::string> errs = config_errors(c);
    CHECK(has_error(errs, "teacher.conv_channels: conv teachers need an image source"));
    CHECK(has_error(errs, "teacher.conv_kernels: needs one kernel size per conv block"));
  }
  SUBCASE("search problems surface through the enumeration") {
    ExperimentConfig c = small_valid();
    c.search.enabled = true;
    c.search.k1_grid = {0.001};  // floors the first width to zero
    const std::vector<std::string> errs = config_errors(c);
    CHECK(has_error(errs, "search: "));
    CHECK(has_error(errs, "K1=0.001"));
  }
  SUBCASE("eval k bounded by the subsample") {
    ExperimentConfig c = small_valid();
    c.eval.k = c.eval.sample + 1;
    CHECK(has_error(config_errors(c), "eval.k: cannot exceed eval.sample"));
  }
  SUBCASE("run id must stay a path component") {
    ExperimentConfig c = small_valid();
    c.run_id = "a/b";
    CHECK(has_error(config_errors(c), "output.run_id: must be a plain path component"));
    c.run_id = "..";
    CHECK(has_error(config_errors(c), "output.run_id: must be a plain path component"));
  }
  SUBCASE("multiple violations are all listed") {
    ExperimentConfig c = small_valid();
    c.sgld.eta = 0.0;
    c.distill.student_lr = 0.0;
    c.end2.temperature = 0.0;
    const std::vector<std::string> errs = config_errors(c);
    CHECK(errs.size() >= 3);
    CHECK(has_error(errs, "sgld.eta: must be positive"));
    CHECK(has_error(errs, "distill.student_lr: must be positive"));
    CHECK(has_error(errs, "end2.temperature: must be positive"));
  }
}

TEST_CASE("specs: heads, widths, and multiplier sites") {
  ExperimentConfig c = small_valid();

  const NetworkSpec teacher = teacher_spec(c);
  CHECK(teacher.input_shape == std::vector<std::size_t>{2});
  CHECK(teacher.output_dim() == 3);
  REQUIRE(teacher.head().has_value());
  CHECK(*teacher.head() == Act::Softmax);

  SUBCASE("student copies teacher widths unless overridden") {
    NetworkSpec s = student_spec(c);
    CHECK(count_params(s) == count_params(teacher));
    c.distill.hidden = {16};
    s = student_spec(c);
    CHECK(count_params(s) == 2 * 16 + 16 + 16 * 3 + 3);
  }
  SUBCASE("student head follows the target") {
    c.distill.hidden = {16};
    c.distill.target = ExpectationTarget::ExpectedEntropy;
    NetworkSpec s = student_spec(c);
    CHECK(s.output_dim() == 1);
    CHECK(*s.head() == Act::Exponential);
    c.distill.target = ExpectationTarget::MarginalVariance;
    s = student_spec(c);
    CHECK(s.output_dim() == 3);
    CHECK(*s.head() == Act::ReluClamp);
    c.distill.target = ExpectationTarget::JointPredictiveEntropy;
    s = student_spec(c);
    CHECK(s.output_dim() == 4);
    CHECK(*s.head() == Act::SoftmaxExp);
  }
  SUBCASE("dirichlet student exposes the temperature") {
    const NetworkSpec e = end2_student_spec(c);
    CHECK(e.output_dim() == 3);
    REQUIRE(e.head().has_value());
    CHECK(*e.head() == Act::Exponential);
    bool found = false;
    for (const LayerDesc& l : e.layers) {
      if (l.kind == LayerKind::Activation && l.act == Act::Exponential) {
        found = true;
        CHECK(l.temperature == doctest::Approx(2.5));
      }
    }
    CHECK(found);
  }
  SUBCASE("search marks the first hidden layer K1, the rest K2") {
    c.distill.hidden = {16, 8};
    NetworkSpec s = student_spec(c);
    for (const LayerDesc& l : s.layers) CHECK(l.multiplier_site == 0);
    c.search.enabled = true;
    s = student_spec(c);
    std::vector<int> sites;
    for (const LayerDesc& l : s.layers) {
      if (l.kind == LayerKind::Dense) sites.push_back(l.multiplier_site);
    }
    CHECK(sites == std::vector<int>{1, 2, 0});
  }
  SUBCASE("conv students bind conv blocks to K1 and the tail to K2") {
    c.dataset.source = "synthetic_digits";
    c.teacher.conv_channels = {10, 20};
    c.teacher.conv_kernels = {5, 5};
    c.teacher.conv_hidden = {128};
    c.search.enabled = true;
    const NetworkSpec s = student_spec(c);
    std::vector<int> conv_sites, dense_sites;
    for (const LayerDesc& l : s.layers) {
      if (l.kind == LayerKind::Conv2D) conv_sites.push_back(l.multiplier_site);
      if (l.kind == LayerKind::Dense) dense_sites.push_back(l.multiplier_site);
    }
    CHECK(conv_sites == std::vector<int>{1, 1});
    CHECK(dense_sites == std::vector<int>{2, 0});
  }
}

TEST_CASE("distill_config wires the schedule blocks") {
  ExperimentConfig c = small_valid();
  c.distill.input_noise = 0.05;
  DistillConfig dc = distill_config(c);
  CHECK(dc.total_steps == 2000);
  CHECK(dc.burn_in == 500);
  CHECK(dc.thinning == 10);
  CHECK(dc.teacher_batch == 50);
  CHECK(dc.student_batch == 50);
  CHECK(dc.teacher_prior.precision == doctest::Approx(10.0));
  CHECK(dc.teacher_rate.at(1) == doctest::Approx(4e-6));
  CHECK(dc.teacher_rate.at(2000) == doctest::Approx(4e-6));
  CHECK(dc.student_rate.at(1) == doctest::Approx(1e-3));
  CHECK(dc.student_rate.at(500) == doctest::Approx(1e-3));
  CHECK(dc.input_noise_sigma == doctest::Approx(0.05));
  CHECK(dc.teacher_noise);

  c.distill.lr_halving_interval = 100;
  dc = distill_config(c);
  CHECK(dc.student_rate.at(100) == doctest::Approx(1e-3));
  CHECK(dc.student_rate.at(101) == doctest::Approx(5e-4));
  CHECK(dc.student_rate.at(201) == doctest::Approx(2.5e-4));
}

TEST_CASE("manifest: complete echo, stable fingerprint") {
  const ExperimentConfig c = small_valid();
  const std::string text = manifest_json(c);
  const nlohmann::json j = nlohmann::json::parse(text);

  // one block per config section plus seed bookkeeping and conventions
  for (const char* key : {"dataset", "teacher", "sgld", "distill", "prune", "search", "eval",
                          "end2", "seed", "seeds", "output", "conventions"}) {
    INFO("missing manifest key: " << key);
    CHECK(j.contains(key));
  }
  CHECK(j["dataset"]["per_class"] == 200);
  CHECK(j["distill"]["target"] == "predictive_distribution");
  CHECK(j["distill"]["estimator"] == "uo");
  CHECK(j["distill"]["loss"] == "cross_entropy");
  CHECK(j["sgld"]["total_iters"] == 2000);
  CHECK(j["prune"]["lambda_grid"].size() == 6);
  CHECK(j["seed"] == 42);
  CHECK(j["seeds"]["data"] == derive_seed(42, "data"));
  CHECK(j["seeds"]["teacher"] == derive_seed(42, "teacher"));
  CHECK(j["seeds"]["student"] == derive_seed(42, "student"));
  CHECK(j["seeds"]["eval"] == derive_seed(42, "eval"));
  CHECK(j["conventions"]["entropy_log_base"] == "natural");
  CHECK(!j.contains("manifest_hash"));  // the fingerprint covers a hash-free document

  const std::string fp = manifest_fingerprint(c);
  CHECK(fp.size() == 16);
  CHECK(fp == manifest_fingerprint(c));

  ExperimentConfig c2 = c;
  c2.seed = 43;
  CHECK(manifest_fingerprint(c2) != fp);
  c2 = c;
  c2.distill.student_lr = 2e-3;
  CHECK(manifest_fingerprint(c2) != fp);
}
