#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gped/dataset.hpp"
#include "gped/distill.hpp"
#include "gped/errors.hpp"
#include "gped/gradcheck.hpp"
#include "gped/network.hpp"
#include "gped/optim.hpp"
#include "gped/pruning.hpp"
#include "gped/rng.hpp"
#include "gped/serialize.hpp"
#include "gped/sgld.hpp"

using namespace gped;

namespace {

// 2-3-2 ReLU MLP with every parameter pinned by hand
NetworkSpec tiny_spec() {
  NetworkSpec spec;
  spec.input_shape = {2};
  spec.layers = {LayerDesc::dense(2, 3), LayerDesc::activation(Act::Relu),
                 LayerDesc::dense(3, 2), LayerDesc::activation(Act::Softmax)};
  return spec;
}

double max_output_gap(const Model& a, const Model& b, const Tensor& x) {
  const Tensor ya = forward(a, x);
  const Tensor yb = forward(b, x);
  REQUIRE(ya.shape == yb.shape);
  double worst = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    worst = std::max(worst, std::abs(ya.data[i] - yb.data[i]));
  }
  return worst;
}

Tensor random_batch(SeededRng& rng, std::size_t n, const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> full{n};
  full.insert(full.end(), shape.begin(), shape.end());
  Tensor x(full);
  for (double& v : x.data) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("group formation covers hidden units and skips the output layer") {
  const NetworkSpec fc = fc_spec(784, {400, 400}, 10, Act::Softmax);
  const GroupPartition part = build_groups(fc);
  REQUIRE(part.groups.size() == 800);
  for (std::size_t i = 0; i < 400; ++i) {
    CHECK(part.groups[i].kind == GroupKind::FcUnit);
    CHECK(part.groups[i].count == 784);
    CHECK(part.groups[i].unit == i);
  }
  for (std::size_t i = 400; i < 800; ++i) CHECK(part.groups[i].count == 400);
  CHECK(count_params(fc) == 478410);

  // groups are disjoint, contiguous, and never contain a bias slot
  const auto layout = param_layout(fc);
  std::vector<bool> seen(count_params(fc), false);
  for (const ParamGroup& g : part.groups) {
    for (std::size_t i = 0; i < g.count; ++i) {
      CHECK(!seen[g.offset + i]);
      seen[g.offset + i] = true;
    }
    for (const ParamSlice& s : layout) {
      CHECK((g.offset + g.count <= s.bias_offset || g.offset >= s.bias_offset + s.bias_count));
    }
  }
  const std::size_t covered = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  CHECK(covered == 784 * 400 + 400 * 400);

  const NetworkSpec cnn =
      conv_spec({1, 12, 12}, {{10, 3}, {20, 2}}, 2, {64}, 10, Act::Softmax);
  const GroupPartition cp = build_groups(cnn);
  std::size_t conv_groups = 0;
  for (const ParamGroup& g : cp.groups) {
    if (g.kind != GroupKind::ConvOutChannel) continue;
    ++conv_groups;
    if (g.layer == 0) CHECK(g.count == 1 * 3 * 3);
    if (conv_groups > 10) CHECK(g.count == 10 * 2 * 2);
  }
  CHECK(conv_groups == 30);
}

TEST_CASE("group penalty closed forms and subgradient convention") {
  const NetworkSpec spec = tiny_spec();
  // layout: 6 weights, 3 biases, 6 weights, 2 biases
  std::vector<double> params(count_params(spec), 0.0);
  params[0] = 3.0;
  params[1] = 4.0;
  GroupPartition part = build_groups(spec);
  REQUIRE(part.groups.size() == 3);

  std::vector<double> sub;
  const double value = group_reg(params, part, false, sub);
  CHECK(value == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(sub[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(sub[1] == doctest::Approx(0.8).epsilon(1e-15));
  for (std::size_t i = 2; i < sub.size(); ++i) CHECK(sub[i] == 0.0);

  const double scaled = group_reg(params, part, true, sub);
  CHECK(scaled == doctest::Approx(5.0 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(sub[0] == doctest::Approx(0.6 * std::sqrt(2.0)).epsilon(1e-14));

  std::fill(params.begin(), params.end(), 0.0);
  CHECK(group_reg(params, part, false, sub) == 0.0);
  for (double v : sub) CHECK(v == 0.0);

  // the engine-facing adapter is the same function
  const Regularizer reg = group_regularizer(part, true);
  params[0] = 3.0;
  params[1] = 4.0;
  std::vector<double> sub2;
  CHECK(reg(params, sub2) == group_reg(params, part, true, sub));
  CHECK(sub2 == sub);
}

TEST_CASE("group penalty subgradient matches finite differences away from zero") {
  for (bool scaled : {false, true}) {
    std::size_t checked = 0;
    for (std::uint64_t seed = 1; seed <= 20 && checked < 3; ++seed) {
      SeededRng rng(seed);
      const NetworkSpec spec = fc_spec(3, {4, 3}, 2, Act::Softmax);
      const GroupPartition part = build_groups(spec);
      std::vector<double> params(count_params(spec));
      for (double& v : params) v = rng.uniform(0.2, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);

      std::vector<double> sub;
      group_reg(params, part, scaled, sub);
      std::vector<double> scratch;
      const auto fd = finite_diff_grad(
          [&](const std::vector<double>& p) { return group_reg(p, part, scaled, scratch); },
          params);
      CHECK(max_rel_error(sub, fd) < 1e-5);
      ++checked;
    }
    CHECK(checked == 3);
  }
}

TEST_CASE("pruning a dead unit is exactly output-preserving") {
  const NetworkSpec spec = tiny_spec();
  // weights [out x in] row-major per layer, then biases
  const std::vector<double> params = {
      0.8,  -0.5,            // unit 0 row
      0.0,  0.0,             // unit 1 row: dead
      -0.3, 0.9,             // unit 2 row
      0.1,  0.7,  -0.2,      // layer 0 biases (dead unit keeps 0.7)
      0.4,  0.6,  -0.7,      // output unit 0 row over 3 hidden
      -0.5, 0.25, 0.35,      // output unit 1 row
      0.05, -0.15,           // output biases
  };
  const Model m = model_with_params(spec, params);
  const GroupPartition part = build_groups(spec);

  const PruneOutcome out = prune(m, part, 1e-3);
  CHECK(out.model.spec.layers[0].out == 2);
  CHECK(out.model.spec.layers[2].in == 2);
  CHECK(out.model.spec.layers[2].out == 2);
  REQUIRE(out.report.layers.size() == 1);
  CHECK(out.report.layers[0].layer == 0);
  CHECK(out.report.layers[0].removed_units == std::vector<std::size_t>{1});
  CHECK(out.report.layers[0].dropped_bias_magnitude == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(out.report.removed_groups == 1);
  CHECK(out.report.params_before == 17);
  CHECK(out.report.params_after == 12);
  CHECK(out.report.flops_before > out.report.flops_after);

  // the constant relu(0.7) flowed into the output biases before the column left
  const auto layout = param_layout(out.model.spec);
  CHECK(out.model.params[layout[1].bias_offset + 0] ==
        doctest::Approx(0.05 + 0.7 * 0.6).epsilon(1e-15));
  CHECK(out.model.params[layout[1].bias_offset + 1] ==
        doctest::Approx(-0.15 + 0.7 * 0.25).epsilon(1e-15));

  SeededRng rng(5);
  const Tensor x = random_batch(rng, 40, {2});
  CHECK(max_output_gap(m, out.model, x) < 1e-10);

  // a negative bias dies in the relu: nothing to fold, still exact
  std::vector<double> neg = params;
  neg[7] = -0.6;
  const Model mn = model_with_params(spec, neg);
  const PruneOutcome on = prune(mn, part, 1e-3);
  CHECK(on.model.spec.layers[0].out == 2);
  const auto nl = param_layout(on.model.spec);
  CHECK(on.model.params[nl[1].bias_offset + 0] == 0.05);
  CHECK(on.model.params[nl[1].bias_offset + 1] == -0.15);
  CHECK(max_output_gap(mn, on.model, x) < 1e-10);
}

TEST_CASE("pruning is a no-op when every group clears the threshold") {
  SeededRng rng(9);
  const NetworkSpec spec = fc_spec(3, {5, 4}, 2, Act::Softmax);
  Model m = init_model(spec, rng);
  for (double& v : m.params) v += (v >= 0.0 ? 0.01 : -0.01);  // keep magnitudes honest

  const PruneOutcome out = prune(m, build_groups(spec), 1e-6);
  CHECK(out.report.layers.empty());
  CHECK(out.report.removed_groups == 0);
  CHECK(out.report.params_before == out.report.params_after);
  CHECK(model_to_json(out.model) == model_to_json(m));
}

TEST_CASE("emptying a layer aborts with the partial report attached") {
  SeededRng rng(13);
  const NetworkSpec spec = fc_spec(3, {5, 4}, 2, Act::Softmax);
  const Model m = init_model(spec, rng);

  bool thrown = false;
  try {
    prune(m, build_groups(spec), 1e9);
  } catch (const PruneError& e) {
    thrown = true;
    CHECK(e.kind() == ErrorKind::Prune);
    CHECK(std::string(e.what()).find("every unit") != std::string::npos);
    CHECK(e.report().params_before == count_params(spec));
    CHECK(e.report().params_after == e.report().params_before);  // aborted before surgery
  }
  CHECK(thrown);
}

TEST_CASE("pruning reaches a fixpoint and is idempotent across cascades") {
  NetworkSpec spec;
  spec.input_shape = {2};
  spec.layers = {LayerDesc::dense(2, 3), LayerDesc::activation(Act::Relu),
                 LayerDesc::dense(3, 3), LayerDesc::activation(Act::Relu),
                 LayerDesc::dense(3, 2), LayerDesc::activation(Act::Softmax)};
  const std::vector<double> params = {
      0.9,  -0.4,                 // L0 unit 0
      0.0,  0.0,                  // L0 unit 1: dead
      0.5,  0.3,                  // L0 unit 2
      0.0,  0.5,   0.1,           // L0 biases
      0.3,  0.2,   0.4,           // L2 unit 0
      0.0,  0.6,   0.0,           // L2 unit 1: alive only through the dying column
      0.25, -0.3,  0.15,          // L2 unit 2
      0.1,  -0.05, 0.2,           // L2 biases
      0.7,  -0.6,  0.2,           // L4 unit 0
      -0.2, 0.5,   0.45,          // L4 unit 1
      0.0,  0.1,                  // L4 biases
  };
  const Model m = model_with_params(spec, params);

  const PruneOutcome out = prune(m, build_groups(spec), 1e-3);
  CHECK(out.model.spec.layers[0].out == 2);
  CHECK(out.model.spec.layers[2].in == 2);
  CHECK(out.model.spec.layers[2].out == 2);
  CHECK(out.model.spec.layers[4].in == 2);
  CHECK(out.report.removed_groups == 2);
  REQUIRE(out.report.layers.size() == 2);
  CHECK(out.report.layers[0].layer == 0);
  CHECK(out.report.layers[0].removed_units == std::vector<std::size_t>{1});
  CHECK(out.report.layers[1].layer == 2);
  CHECK(out.report.layers[1].removed_units == std::vector<std::size_t>{1});
  // the second-round unit had already absorbed relu(0.5) * 0.6 into its bias
  CHECK(out.report.layers[1].dropped_bias_magnitude ==
        doctest::Approx(-0.05 + 0.5 * 0.6).epsilon(1e-12));

  SeededRng rng(7);
  const Tensor x = random_batch(rng, 50, {2});
  CHECK(max_output_gap(m, out.model, x) < 1e-10);

  const PruneOutcome again = prune(out.model, build_groups(out.model.spec), 1e-3);
  CHECK(again.report.removed_groups == 0);
  CHECK(model_to_json(again.model) == model_to_json(out.model));
}

TEST_CASE("conv channel pruning folds constants through pool and flatten") {
  NetworkSpec spec;
  spec.input_shape = {2, 6, 6};
  spec.layers = {LayerDesc::conv2d(2, 4, 3),  LayerDesc::activation(Act::Relu),
                 LayerDesc::maxpool2d(2),     LayerDesc::conv2d(4, 3, 2),
                 LayerDesc::activation(Act::Relu), LayerDesc::dense(3, 2),
                 LayerDesc::activation(Act::Softmax)};
  SeededRng rng(21);
  Model m = init_model(spec, rng);
  for (double& v : m.params) {
    if (std::abs(v) < 0.02) v = 0.05;  // no accidental dead groups
  }
  const auto layout = param_layout(spec);

  // channel 1 of the first conv: 2*3*3 incoming weights zeroed, bias 0.4
  const std::size_t b1 = 2 * 3 * 3;
  std::fill(m.params.begin() + static_cast<std::ptrdiff_t>(layout[0].weight_offset + 1 * b1),
            m.params.begin() + static_cast<std::ptrdiff_t>(layout[0].weight_offset + 2 * b1),
            0.0);
  m.params[layout[0].bias_offset + 1] = 0.4;

  // channel 2 of the second conv: 4*2*2 incoming weights zeroed, bias 0.3
  const std::size_t b2 = 4 * 2 * 2;
  std::fill(m.params.begin() + static_cast<std::ptrdiff_t>(layout[1].weight_offset + 2 * b2),
            m.params.begin() + static_cast<std::ptrdiff_t>(layout[1].weight_offset + 3 * b2),
            0.0);
  m.params[layout[1].bias_offset + 2] = 0.3;

  const PruneOutcome out = prune(m, build_groups(spec), 1e-3);
  CHECK(out.model.spec.layers[0].out_channels == 3);
  CHECK(out.model.spec.layers[3].in_channels == 3);
  CHECK(out.model.spec.layers[3].out_channels == 2);
  CHECK(out.model.spec.layers[5].in == 2);
  CHECK(out.report.removed_groups == 2);

  SeededRng xr(22);
  const Tensor x = random_batch(xr, 12, {2, 6, 6});
  CHECK(max_output_gap(m, out.model, x) < 1e-10);

  const PruneOutcome again = prune(out.model, build_groups(out.model.spec), 1e-3);
  CHECK(model_to_json(again.model) == model_to_json(out.model));
}

TEST_CASE("prune argument validation") {
  SeededRng rng(3);
  const NetworkSpec spec = fc_spec(3, {4}, 2, Act::Softmax);
  const Model m = init_model(spec, rng);
  CHECK_THROWS_AS(prune(m, build_groups(spec), 0.0), const Error&);
  CHECK_THROWS_AS(prune(m, build_groups(fc_spec(3, {5}, 2, Act::Softmax)), 1e-3), const Error&);
  CHECK_THROWS_AS(prune(m, GroupPartition{}, 1e-3), const Error&);
}

TEST_CASE("stronger structured penalties shrink and kill more groups") {
  const std::vector<double> lambdas{0.0, 0.1, 1.0};
  std::vector<double> mean_norm(lambdas.size(), 0.0);
  std::vector<double> mean_dead(lambdas.size(), 0.0);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset train = gaussian_mixture(3, 2, 60, 3.0, 0.6, 100 + seed);
    const Dataset transfer = strip_labels(gaussian_mixture(3, 2, 60, 3.0, 0.6, 200 + seed));
    const NetworkSpec teacher = fc_spec(2, {16}, 3, Act::Softmax);
    const NetworkSpec student = fc_spec(2, {12}, 3, Act::Softmax);
    const GroupPartition part = build_groups(student);

    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      DistillConfig cfg;
      cfg.total_steps = 3000;
      cfg.burn_in = 200;
      cfg.thinning = 2;
      cfg.teacher_batch = 16;
      cfg.student_batch = 16;
      cfg.teacher_rate = StepSchedule::constant(1e-3);
      cfg.student_rate = StepSchedule::constant(3e-3);
      cfg.teacher_prior = GaussianPrior{0.0, 1.0};
      cfg.lambda = lambdas[li];

      GpedOptions opt;
      opt.regularizer = group_regularizer(part, false);
      const GpedResult res =
          run_gped(teacher, student, train, transfer, ExpectationTarget::PredictiveDistribution,
                   cfg, GpedSeeds{seed, seed + 50, seed + 90}, opt);

      std::vector<double> sub;
      mean_norm[li] += group_reg(res.student.params, part, false, sub) / 5.0;
      for (const ParamGroup& g : part.groups) {
        double peak = 0.0;
        for (std::size_t i = 0; i < g.count; ++i) {
          peak = std::max(peak, std::abs(res.student.params[g.offset + i]));
        }
        if (peak < 0.05) mean_dead[li] += 1.0 / 5.0;
      }
    }
  }

  for (std::size_t li = 0; li + 1 < lambdas.size(); ++li) {
    CHECK(mean_norm[li] > mean_norm[li + 1]);
    CHECK(mean_dead[li] <= mean_dead[li + 1]);
  }
  CHECK(mean_dead.back() > mean_dead.front());
}

TEST_CASE("restart learning rates depend on the architecture family") {
  CHECK(default_restart_lr(fc_spec(10, {5}, 2, Act::Softmax)) == 1e-4);
  CHECK(default_restart_lr(conv_spec({1, 8, 8}, {{4, 3}}, 2, {8}, 2, Act::Softmax)) == 1e-3);
}

TEST_CASE("fine-tuning trains a fresh student against the frozen table") {
  const Dataset train = gaussian_mixture(3, 2, 60, 3.0, 0.6, 301);
  const Dataset transfer = strip_labels(gaussian_mixture(3, 2, 60, 3.0, 0.6, 302));
  const NetworkSpec teacher = fc_spec(2, {16}, 3, Act::Softmax);
  const NetworkSpec student = fc_spec(2, {12}, 3, Act::Softmax);

  DistillConfig cfg;
  cfg.total_steps = 1500;
  cfg.burn_in = 300;
  cfg.thinning = 5;
  cfg.teacher_batch = 16;
  cfg.student_batch = 16;
  cfg.teacher_rate = StepSchedule::constant(1e-3);
  cfg.student_rate = StepSchedule::constant(1e-3);
  cfg.teacher_prior = GaussianPrior{0.0, 1.0};
  const GpedResult res = run_gped(teacher, student, train, transfer,
                                  ExpectationTarget::PredictiveDistribution, cfg, GpedSeeds{});

  // loss over the visited rows, the quantity fine-tuning minimizes
  const auto table_loss = [&](const Model& m) {
    std::vector<std::size_t> visited;
    for (std::size_t i = 0; i < res.table.instances(); ++i) {
      if (res.table.counts[i] > 0) visited.push_back(i);
    }
    const Tensor xb = gather_rows(transfer.features, visited);
    Tensor targets({visited.size(), res.table.dim()});
    for (std::size_t j = 0; j < visited.size(); ++j) {
      std::copy(res.table.row(visited[j]), res.table.row(visited[j]) + res.table.dim(),
                targets.ptr() + j * res.table.dim());
    }
    return distill_loss_value(forward(m, xb), targets, ExpectationTarget::PredictiveDistribution,
                              StudentLoss::CrossEntropy, 1.0) /
           static_cast<double>(visited.size());
  };

  SeededRng fresh_rng(77);
  const Model fresh = init_model(student, fresh_rng);

  FineTuneConfig ft;
  ft.epochs = 0;
  const Model untouched = fine_tune(fresh, transfer, res.table, ft, 5);
  CHECK(untouched.params == fresh.params);

  ft.epochs = 40;
  ft.batch = 16;
  ft.learning_rate = default_restart_lr(student);
  const Model tuned = fine_tune(fresh, transfer, res.table, ft, 5);
  CHECK(table_loss(tuned) < table_loss(fresh));

  const Model tuned2 = fine_tune(fresh, transfer, res.table, ft, 5);
  CHECK(tuned2.params == tuned.params);
  const Model other_seed = fine_tune(fresh, transfer, res.table, ft, 6);
  CHECK(other_seed.params != tuned.params);

  FineTuneConfig bad = ft;
  bad.batch = 0;
  CHECK_THROWS_AS(fine_tune(fresh, transfer, res.table, bad, 5), const Error&);
  bad = ft;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(fine_tune(fresh, transfer, res.table, bad, 5), const Error&);

  ExpectationTable empty(res.table.instances(), res.table.dim());
  CHECK_THROWS_AS(fine_tune(fresh, transfer, empty, ft, 5), const Error&);
  ExpectationTable short_table(3, res.table.dim());
  CHECK_THROWS_AS(fine_tune(fresh, transfer, short_table, ft, 5), const Error&);
  FineTuneConfig wrong = ft;
  wrong.target = ExpectationTarget::ExpectedEntropy;
  CHECK_THROWS_AS(fine_tune(fresh, transfer, res.table, wrong, 5), const Error&);
}

TEST_CASE("pruning after a regularized run actually compacts the student") {
  const Dataset train = gaussian_mixture(3, 2, 60, 3.0, 0.6, 401);
  const Dataset transfer = strip_labels(gaussian_mixture(3, 2, 60, 3.0, 0.6, 402));
  const NetworkSpec teacher = fc_spec(2, {16}, 3, Act::Softmax);
  const NetworkSpec student = fc_spec(2, {12}, 3, Act::Softmax);
  const GroupPartition part = build_groups(student);

  DistillConfig cfg;
  cfg.total_steps = 4000;
  cfg.burn_in = 200;
  cfg.thinning = 2;
  cfg.teacher_batch = 16;
  cfg.student_batch = 16;
  cfg.teacher_rate = StepSchedule::constant(1e-3);
  cfg.student_rate = StepSchedule::constant(3e-3);
  cfg.teacher_prior = GaussianPrior{0.0, 1.0};
  cfg.lambda = 1.0;

  GpedOptions opt;
  opt.regularizer = group_regularizer(part, false);
  const GpedResult res = run_gped(teacher, student, train, transfer,
                                  ExpectationTarget::PredictiveDistribution, cfg,
                                  GpedSeeds{3, 4, 5}, opt);

  const PruneOutcome out = prune(res.student, part, 1e-2);
  CHECK(out.report.removed_groups > 0);
  CHECK(out.report.params_after < out.report.params_before);
  CHECK(out.model.spec.layers[0].out + out.report.layers[0].removed_units.size() == 12);

  // fine-tuning the compact model against the frozen table must not help less
  // than leaving it alone
  FineTuneConfig ft;
  ft.epochs = 30;
  ft.batch = 16;
  ft.learning_rate = default_restart_lr(out.model.spec);
  const Model tuned = fine_tune(out.model, transfer, res.table, ft, 11);

  std::vector<std::size_t> visited;
  for (std::size_t i = 0; i < res.table.instances(); ++i) {
    if (res.table.counts[i] > 0) visited.push_back(i);
  }
  const Tensor xb = gather_rows(transfer.features, visited);
  Tensor targets({visited.size(), res.table.dim()});
  for (std::size_t j = 0; j < visited.size(); ++j) {
    std::copy(res.table.row(visited[j]), res.table.row(visited[j]) + res.table.dim(),
              targets.ptr() + j * res.table.dim());
  }
  const double before = distill_loss_value(forward(out.model, xb), targets,
                                           ExpectationTarget::PredictiveDistribution,
                                           StudentLoss::CrossEntropy, 1.0);
  const double after = distill_loss_value(forward(tuned, xb), targets,
                                          ExpectationTarget::PredictiveDistribution,
                                          StudentLoss::CrossEntropy, 1.0);
  CHECK(after <= before);
}
