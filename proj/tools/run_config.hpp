#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsde/envs.hpp"
#include "nsde/evaluator.hpp"
#include "nsde/model.hpp"
#include "nsde/mpc.hpp"
#include "nsde/trainer.hpp"

namespace nsde::cli {

// Evaluation settings shared by eval-grid and eval-openloop.
struct EvalSection {
  GridSpec grid;                 // empty axes: default 41x41 box over dims (0, 1)
  double horizon_s = 0.5;        // variance-rollout length per cell
  double window_s = 1.0;         // open-loop prediction window
  int trajectory = 0;            // dataset trajectory to predict
  Vec control;                   // held control for the variance sweep
};

// Extra knobs around MpcConfig that describe the closed-loop episode.
struct MpcSection {
  MpcConfig mpc;
  double episode_s = 10.0;
  Vec x0;
};

// One run document: a global seed plus one JSON object per subsystem. Unknown
// keys anywhere are rejected so typos fail loudly instead of being ignored.
struct RunConfig {
  uint64_t seed = 0;
  nlohmann::json doc;

  // Reads the file, applies dotted-path overrides ("train.max_steps=200",
  // values parsed as JSON when possible), then the seed override.
  static RunConfig load(const std::string& path, const std::vector<std::string>& sets = {},
                        std::optional<uint64_t> seed_override = {});
  static RunConfig from_json(nlohmann::json doc, const std::vector<std::string>& sets = {},
                             std::optional<uint64_t> seed_override = {});

  bool has(const std::string& section) const { return doc.contains(section); }

  // Section parsers; each throws config_error on a missing section, an
  // unknown key, or a value of the wrong shape.
  ModelConfig model() const;
  SolverConfig solver() const;     // seed filled from the global seed
  LossConfig loss() const;
  TrainConfig train() const;       // seed filled from the global seed
  DataGenConfig gen() const;       // seed filled from the global seed
  std::string gen_system() const;  // includes "fig2", which gen() does not
  std::string gen_shape() const;   // fig2 point-cloud shape
  int gen_n_points() const;
  double gen_jitter_std() const;
  EvalSection eval() const;
  MpcSection mpc() const;          // seed filled from the global seed

  // Input artifacts; every listed path must exist at load time.
  std::string file(const std::string& role) const;  // throws if absent

  // Hash of the resolved document (sorted keys), as 16 hex digits.
  std::string config_hash() const;
};

// Model architecture + trained weights in one JSON file.
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const NeuralSdeModel& model);
NeuralSdeModel load_checkpoint(const std::string& path, ModelConfig* cfg_out = nullptr);

nlohmann::json model_to_json(const ModelConfig& cfg);
ModelConfig model_from_json(const nlohmann::json& j);

// fnv-1a over the file bytes, as 16 hex digits.
std::string checksum_file(const std::string& path);

// Writes out_dir/manifest.json recording the command, config hash, seed, and
// a checksum per artifact (paths relative to out_dir).
void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg, const std::vector<std::string>& artifacts);

}  // namespace nsde::cli
