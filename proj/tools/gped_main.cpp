#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "gped/artifacts.hpp"
#include "gped/config.hpp"
#include "gped/errors.hpp"
#include "gped/pipeline.hpp"
#include "gped/toml.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

struct CliArgs {
  std::string config_path;
  std::string out_dir;        // overrides output.dir when set
  bool has_seed = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool no_timestamp = false;
};

// Parses and validates the config; prints every violation on failure.
int load_config(const CliArgs& args, gped::ExperimentConfig& cfg) {
  gped::TomlTable table;
  try {
    table = gped::parse_toml_file(args.config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitInvalid;
  }

  gped::ResolvedConfig resolved = gped::resolve_config(table);
  cfg = resolved.config;
  if (args.has_seed) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;

  std::vector<std::string> errors = std::move(resolved.errors);
  for (const std::string& e : gped::config_errors(cfg)) errors.push_back(e);
  if (!errors.empty()) {
    for (const std::string& e : errors) std::fprintf(stderr, "config error: %s\n", e.c_str());
    return kExitInvalid;
  }
  return kExitOk;
}

int run_stage(const CliArgs& args, const std::string& stage) {
  gped::ExperimentConfig cfg;
  if (int rc = load_config(args, cfg); rc != kExitOk) return rc;

  gped::PipelineOptions opt;
  opt.stage = stage;
  opt.workers = args.workers;
  opt.no_timestamp = args.no_timestamp;
  try {
    const std::string run_dir = gped::run_pipeline(cfg, opt);
    std::printf("%s: ok (%s)\n", stage.c_str(), run_dir.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitRuntime;
  }
}

int run_validate(const CliArgs& args) {
  gped::ExperimentConfig cfg;
  if (int rc = load_config(args, cfg); rc != kExitOk) return rc;
  try {
    const std::string run_dir = cfg.out_dir + "/" + cfg.run_id;
    const std::string hash = gped::manifest_fingerprint(cfg);
    nlohmann::json manifest = nlohmann::json::parse(gped::manifest_json(cfg));
    manifest["manifest_hash"] = hash;
    gped::write_text_file(run_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::printf("manifest %s/manifest.json (hash %s)\n", run_dir.c_str(), hash.c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generalized posterior expectation distillation"};
  app.require_subcommand(1);

  CliArgs args;
  app.add_option("--config", args.config_path, "experiment TOML")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", args.out_dir, "output root (overrides output.dir)");
  auto* seed_opt = app.add_option("--seed", args.seed, "master seed (overrides the config)");
  app.add_option("--workers", args.workers, "parallel workers for sweeps")
      ->check(CLI::PositiveNumber);
  app.add_flag("--no-timestamp", args.no_timestamp, "omit timestamps for reproducible bytes");

  static const std::vector<std::string> kStages = {"sample", "distill", "prune",
                                                   "search", "eval",    "all"};
  app.add_subcommand("validate", "check the config and write the manifest")->fallthrough();
  for (const std::string& s : kStages) {
    app.add_subcommand(s, "run the " + s + " stage")->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);
  args.has_seed = seed_opt->count() > 0;

  const std::string stage = app.get_subcommands().front()->get_name();
  if (stage == "validate") return run_validate(args);
  return run_stage(args, stage);
}
