// hood: heatmap-based out-of-distribution detection pipeline.
//
// Stages run against a shared output directory and talk to each other only
// through the artifacts they write (checkpoints, feature bank, target set,
// score file), each verified by digest against the run manifest.

#include <CLI11.hpp>
#include <cstdio>

#include "hood/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"heatmap-based out-of-distribution detection"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "run";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;

  app.add_option("--config", config_path, "experiment config file (key = value lines)");
  app.add_option("--set", overrides, "override a config key (key=value, repeatable)");
  app.add_option("--out", out_dir, "run directory for all artifacts");
  auto* seed_opt = app.add_option("--seed", seed, "override the global seed");

  for (const std::string& name : hood::stage_names()) app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);
  std::string stage = app.get_subcommands().front()->get_name();

  try {
    hood::KeyValueConfig kv;
    if (!config_path.empty()) kv = hood::KeyValueConfig::from_file(config_path);
    for (const std::string& kv_pair : overrides) kv.apply_override(kv_pair);
    if (seed_opt->count() > 0) kv.set("seed", std::to_string(seed));
    hood::ExperimentConfig cfg = hood::ExperimentConfig::from(kv);
    hood::run_stage(stage, cfg, out_dir, /*verbose=*/true);
  } catch (const hood::ConfigParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const hood::MissingInputError& e) {
    std::fprintf(stderr, "stage %s: missing input %s (run its producing stage first)\n",
                 stage.c_str(), e.path.string().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stage %s failed: %s\n", stage.c_str(), e.what());
    return 1;
  }
  return 0;
}
