#pragma once

#include <string>

#include "run_config.hpp"

namespace nsde::cli {

// Each command writes its artifacts plus manifest.json into out_dir and
// returns a process exit code (0 ok, 2 runtime failure). Configuration
// problems surface as config_error, which the entry point maps to exit 1.
int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);
int cmd_train(const RunConfig& cfg, const std::string& out_dir);
int cmd_eval_grid(const RunConfig& cfg, const std::string& out_dir);
int cmd_eval_openloop(const RunConfig& cfg, const std::string& out_dir);
int cmd_mpc(const RunConfig& cfg, const std::string& out_dir);

}  // namespace nsde::cli
