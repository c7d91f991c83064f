#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace nsde::cli;

int main(int argc, char** argv) {
  CLI::App app{
      "nsde: learn controlled dynamics as neural SDEs with distance-aware "
      "uncertainty, evaluate them, and run sampling-based MPC"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = ".";
  uint64_t seed_val = 0;
  std::vector<CLI::Option*> seed_opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    seed_opts.push_back(sub->add_option("--seed", seed_val, "override the global seed"));
    sub->add_option("--set", sets, "override a config leaf, e.g. train.max_steps=500");
    sub->add_option("--out", out_dir, "output directory (default: current)");
  };

  add_common(app.add_subcommand("gen-data", "simulate a system and write a dataset"));
  add_common(app.add_subcommand("train", "fit a model to files.dataset"));
  add_common(app.add_subcommand("eval-grid", "proximity and uncertainty maps over a grid"));
  add_common(app.add_subcommand("eval-openloop", "windowed open-loop prediction report"));
  add_common(app.add_subcommand("mpc", "closed-loop episode tracking files.reference"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::optional<uint64_t> seed_override;
  for (CLI::Option* opt : seed_opts)
    if (opt->count() > 0) seed_override = seed_val;

  try {
    RunConfig cfg = RunConfig::load(config_path, sets, seed_override);
    const std::string& name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") return cmd_gen_data(cfg, out_dir);
    if (name == "train") return cmd_train(cfg, out_dir);
    if (name == "eval-grid") return cmd_eval_grid(cfg, out_dir);
    if (name == "eval-openloop") return cmd_eval_openloop(cfg, out_dir);
    return cmd_mpc(cfg, out_dir);
  } catch (const nsde::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
