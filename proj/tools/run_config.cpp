#include "run_config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nsde/rng.hpp"

namespace nsde::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw config_error("config " + where + ": " + what);
}

const json& need_object(const json& doc, const std::string& name) {
  if (!doc.contains(name)) throw config_error("config: missing section '" + name + "'");
  const json& s = doc.at(name);
  if (!s.is_object()) bad(name, "must be an object");
  return s;
}

void check_keys(const json& s, const std::string& name,
                std::initializer_list<const char*> allowed) {
  for (auto it = s.begin(); it != s.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) bad(name, "unknown key '" + it.key() + "'");
  }
}

template <typename T>
T get_as(const json& s, const std::string& name, const char* key, T def) {
  if (!s.contains(key)) return def;
  try {
    return s.at(key).get<T>();
  } catch (const json::exception&) {
    bad(name + "." + key, "wrong type");
  }
}

template <typename T>
T get_req(const json& s, const std::string& name, const char* key) {
  if (!s.contains(key)) bad(name, std::string("missing key '") + key + "'");
  try {
    return s.at(key).get<T>();
  } catch (const json::exception&) {
    bad(name + "." + key, "wrong type");
  }
}

GridSpec parse_grid(const json& g, const std::string& name) {
  check_keys(g, name, {"dims", "lo", "hi", "n_cells", "fixed"});
  auto dims = get_req<std::vector<int>>(g, name, "dims");
  auto lo = get_req<Vec>(g, name, "lo");
  auto hi = get_req<Vec>(g, name, "hi");
  auto n_cells = get_req<std::vector<int>>(g, name, "n_cells");
  if (lo.size() != dims.size() || hi.size() != dims.size() || n_cells.size() != dims.size())
    bad(name, "dims/lo/hi/n_cells must have equal lengths");
  GridSpec grid;
  for (size_t i = 0; i < dims.size(); ++i)
    grid.axes.push_back({dims[i], lo[i], hi[i], n_cells[i]});
  grid.fixed = get_as<Vec>(g, name, "fixed", {});
  return grid;
}

std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& sets,
                          std::optional<uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("bad config file " + path + ": " + e.what());
  }
  return from_json(std::move(doc), sets, seed_override);
}

RunConfig RunConfig::from_json(json doc, const std::vector<std::string>& sets,
                               std::optional<uint64_t> seed_override) {
  if (!doc.is_object()) throw config_error("config: top level must be an object");
  for (const std::string& kv : sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw config_error("--set expects key.path=value, got '" + kv + "'");
    std::string path = "/" + kv.substr(0, eq);
    for (char& c : path)
      if (c == '.') c = '/';
    std::string raw = kv.substr(eq + 1);
    json val = json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (val.is_discarded()) val = raw;  // bare strings need no quotes
    try {
      doc[json::json_pointer(path)] = val;
    } catch (const json::exception& e) {
      throw config_error("--set " + kv + ": " + e.what());
    }
  }

  check_keys(doc, "(top level)",
             {"seed", "files", "model", "solver", "loss", "train", "gen", "eval", "mpc"});
  RunConfig cfg;
  cfg.seed = get_as<uint64_t>(doc, "(top level)", "seed", 0);
  if (seed_override) {
    cfg.seed = *seed_override;
    doc["seed"] = *seed_override;  // the hash covers the effective seed
  }
  cfg.doc = std::move(doc);

  if (cfg.doc.contains("files")) {
    const json& files = need_object(cfg.doc, "files");
    for (auto it = files.begin(); it != files.end(); ++it) {
      if (!it.value().is_string()) bad("files." + it.key(), "must be a path string");
      std::string p = it.value().get<std::string>();
      if (!std::filesystem::exists(p))
        throw config_error("config files." + it.key() + ": no such file: " + p);
    }
  }
  return cfg;
}

ModelConfig RunConfig::model() const { return model_from_json(need_object(doc, "model")); }

json model_to_json(const ModelConfig& cfg) {
  json j;
  j["state_dim"] = cfg.state_dim;
  j["control_dim"] = cfg.control_dim;
  j["composer"] = cfg.composer;
  json terms = json::array();
  for (const auto& t : cfg.drift_terms) {
    json jt;
    jt["name"] = t.name;
    jt["hidden"] = t.hidden;
    jt["activation"] = t.activation;
    jt["selector"] = t.selector;
    terms.push_back(jt);
  }
  j["drift_terms"] = terms;
  j["sigma_max"] = cfg.sigma_max;
  j["d_hidden"] = cfg.d_hidden;
  j["d_activation"] = cfg.d_activation;
  j["mu_hidden"] = cfg.mu_hidden;
  j["mu_activation"] = cfg.mu_activation;
  j["feature_selector"] = cfg.feature_selector;
  return j;
}

ModelConfig model_from_json(const json& j) {
  const std::string name = "model";
  check_keys(j, name,
             {"state_dim", "control_dim", "composer", "drift_terms", "sigma_max", "d_hidden",
              "d_activation", "mu_hidden", "mu_activation", "feature_selector"});
  ModelConfig cfg;
  cfg.state_dim = get_req<int>(j, name, "state_dim");
  cfg.control_dim = get_req<int>(j, name, "control_dim");
  cfg.composer = get_req<std::string>(j, name, "composer");
  if (!j.contains("drift_terms") || !j.at("drift_terms").is_array())
    bad(name, "drift_terms must be an array");
  for (const json& jt : j.at("drift_terms")) {
    std::string tname = name + ".drift_terms";
    check_keys(jt, tname, {"name", "hidden", "activation", "selector"});
    ModelConfig::TermConfig t;
    t.name = get_req<std::string>(jt, tname, "name");
    t.hidden = get_as<std::vector<int>>(jt, tname, "hidden", {});
    t.activation = get_as<std::string>(jt, tname, "activation", "tanh");
    t.selector = get_as<std::vector<int>>(jt, tname, "selector", {});
    cfg.drift_terms.push_back(std::move(t));
  }
  cfg.sigma_max = get_req<Vec>(j, name, "sigma_max");
  cfg.d_hidden = get_as<std::vector<int>>(j, name, "d_hidden", cfg.d_hidden);
  cfg.d_activation = get_as<std::string>(j, name, "d_activation", cfg.d_activation);
  cfg.mu_hidden = get_as<std::vector<int>>(j, name, "mu_hidden", cfg.mu_hidden);
  cfg.mu_activation = get_as<std::string>(j, name, "mu_activation", cfg.mu_activation);
  cfg.feature_selector = get_as<std::vector<int>>(j, name, "feature_selector", {});
  return cfg;
}

SolverConfig RunConfig::solver() const {
  const json& s = need_object(doc, "solver");
  check_keys(s, "solver", {"scheme", "dt", "horizon", "n_particles"});
  SolverConfig cfg;
  cfg.scheme = parse_scheme(get_as<std::string>(s, "solver", "scheme", "euler_maruyama"));
  cfg.dt = get_as<double>(s, "solver", "dt", cfg.dt);
  cfg.horizon = get_as<int>(s, "solver", "horizon", cfg.horizon);
  cfg.n_particles = get_as<int>(s, "solver", "n_particles", cfg.n_particles);
  cfg.seed = seed;
  return cfg;
}

LossConfig RunConfig::loss() const {
  const json& s = need_object(doc, "loss");
  check_keys(s, "loss", {"alpha", "beta", "gamma", "lambda", "s_diag", "rho", "n_convex_pairs"});
  LossConfig cfg;
  cfg.alpha = get_as<double>(s, "loss", "alpha", cfg.alpha);
  cfg.beta = get_as<double>(s, "loss", "beta", cfg.beta);
  cfg.gamma = get_as<double>(s, "loss", "gamma", cfg.gamma);
  cfg.lam = get_as<double>(s, "loss", "lambda", cfg.lam);
  cfg.s_diag = get_as<Vec>(s, "loss", "s_diag", {});
  cfg.rho = get_as<double>(s, "loss", "rho", cfg.rho);
  cfg.n_convex_pairs = get_as<int>(s, "loss", "n_convex_pairs", cfg.n_convex_pairs);
  return cfg;
}

TrainConfig RunConfig::train() const {
  const json& s = need_object(doc, "train");
  check_keys(s, "train",
             {"batch_size", "horizon", "lr_start", "lr_end", "decay_steps", "max_steps",
              "eval_every", "patience", "eval_fraction"});
  TrainConfig cfg;
  cfg.batch_size = get_as<int>(s, "train", "batch_size", cfg.batch_size);
  cfg.horizon = get_as<int>(s, "train", "horizon", cfg.horizon);
  cfg.lr_start = get_as<double>(s, "train", "lr_start", cfg.lr_start);
  cfg.lr_end = get_as<double>(s, "train", "lr_end", cfg.lr_end);
  cfg.decay_steps = get_as<int>(s, "train", "decay_steps", cfg.decay_steps);
  cfg.max_steps = get_as<int>(s, "train", "max_steps", cfg.max_steps);
  cfg.eval_every = get_as<int>(s, "train", "eval_every", cfg.eval_every);
  cfg.patience = get_as<int>(s, "train", "patience", cfg.patience);
  cfg.eval_fraction = get_as<double>(s, "train", "eval_fraction", cfg.eval_fraction);
  cfg.seed = seed;
  return cfg;
}

static void check_gen_keys(const json& s) {
  check_keys(s, "gen",
             {"system", "n_traj", "duration", "dt", "init_lo", "init_hi", "noise_std",
              "policy", "control_scale", "shape", "n_points", "jitter_std"});
}

std::string RunConfig::gen_system() const {
  const json& s = need_object(doc, "gen");
  check_gen_keys(s);
  return get_req<std::string>(s, "gen", "system");
}

DataGenConfig RunConfig::gen() const {
  const json& s = need_object(doc, "gen");
  check_gen_keys(s);
  DataGenConfig cfg;
  cfg.system = get_req<std::string>(s, "gen", "system");
  cfg.n_traj = get_as<int>(s, "gen", "n_traj", cfg.n_traj);
  cfg.duration = get_as<double>(s, "gen", "duration", cfg.duration);
  cfg.dt = get_as<double>(s, "gen", "dt", cfg.dt);
  cfg.init_lo = get_req<Vec>(s, "gen", "init_lo");
  cfg.init_hi = get_req<Vec>(s, "gen", "init_hi");
  cfg.noise_std = get_as<Vec>(s, "gen", "noise_std", {});
  cfg.policy = parse_policy(get_as<std::string>(s, "gen", "policy", "none"));
  cfg.control_scale = get_as<double>(s, "gen", "control_scale", cfg.control_scale);
  cfg.seed = seed;
  return cfg;
}

std::string RunConfig::gen_shape() const {
  return get_req<std::string>(need_object(doc, "gen"), "gen", "shape");
}

int RunConfig::gen_n_points() const {
  return get_as<int>(need_object(doc, "gen"), "gen", "n_points", 200);
}

double RunConfig::gen_jitter_std() const {
  return get_as<double>(need_object(doc, "gen"), "gen", "jitter_std", 0.002);
}

EvalSection RunConfig::eval() const {
  if (!doc.contains("eval")) return {};
  const json& s = need_object(doc, "eval");
  check_keys(s, "eval", {"grid", "horizon_s", "window_s", "trajectory", "control"});
  EvalSection out;
  if (s.contains("grid")) {
    GridSpec grid = parse_grid(s.at("grid"), "eval.grid");
    out.grid = grid;
  }
  out.horizon_s = get_as<double>(s, "eval", "horizon_s", out.horizon_s);
  out.window_s = get_as<double>(s, "eval", "window_s", out.window_s);
  out.trajectory = get_as<int>(s, "eval", "trajectory", out.trajectory);
  out.control = get_as<Vec>(s, "eval", "control", {});
  return out;
}

MpcSection RunConfig::mpc() const {
  const json& s = need_object(doc, "mpc");
  check_keys(s, "mpc",
             {"q", "r", "horizon_steps", "n_particles", "u_lo", "u_hi", "iters", "lr0", "dt",
              "scheme", "angle_dims", "episode_s", "x0"});
  MpcSection out;
  out.mpc.q = get_req<Vec>(s, "mpc", "q");
  out.mpc.r = get_req<Vec>(s, "mpc", "r");
  out.mpc.horizon_steps = get_as<int>(s, "mpc", "horizon_steps", out.mpc.horizon_steps);
  out.mpc.n_particles = get_as<int>(s, "mpc", "n_particles", out.mpc.n_particles);
  out.mpc.u_lo = get_req<Vec>(s, "mpc", "u_lo");
  out.mpc.u_hi = get_req<Vec>(s, "mpc", "u_hi");
  out.mpc.iters = get_as<int>(s, "mpc", "iters", out.mpc.iters);
  out.mpc.lr0 = get_as<double>(s, "mpc", "lr0", out.mpc.lr0);
  out.mpc.dt = get_as<double>(s, "mpc", "dt", out.mpc.dt);
  out.mpc.scheme = parse_scheme(get_as<std::string>(s, "mpc", "scheme", "euler_maruyama"));
  out.mpc.angle_dims = get_as<std::vector<int>>(s, "mpc", "angle_dims", {});
  out.mpc.seed = seed;
  out.episode_s = get_as<double>(s, "mpc", "episode_s", out.episode_s);
  out.x0 = get_req<Vec>(s, "mpc", "x0");
  return out;
}

std::string RunConfig::file(const std::string& role) const {
  if (!doc.contains("files") || !doc.at("files").contains(role))
    throw config_error("config: this command needs files." + role);
  return doc.at("files").at(role).get<std::string>();
}

std::string RunConfig::config_hash() const {
  std::string text = doc.dump();
  return hex64(fnv1a64(text.data(), text.size()));
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const NeuralSdeModel& model) {
  json doc;
  doc["model"] = model_to_json(cfg);
  doc["params"] = json::parse(model.params().to_json());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open for writing: " + path);
  out << doc.dump(1) << "\n";
}

NeuralSdeModel load_checkpoint(const std::string& path, ModelConfig* cfg_out) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open checkpoint: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw config_error("bad checkpoint " + path + ": " + e.what());
  }
  if (!doc.contains("model") || !doc.contains("params"))
    throw config_error("bad checkpoint " + path + ": needs model and params");
  ModelConfig cfg = model_from_json(doc.at("model"));
  NeuralSdeModel model = build_model(cfg, 0);
  model.load_params(ParamVector::from_json(doc.at("params").dump()));
  if (cfg_out) *cfg_out = cfg;
  return model;
}

std::string checksum_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open for checksum: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const RunConfig& cfg, const std::vector<std::string>& artifacts) {
  json doc;
  doc["command"] = command;
  doc["config_hash"] = cfg.config_hash();
  doc["seed"] = cfg.seed;
  json arts;
  for (const std::string& name : artifacts)
    arts[name] = checksum_file(out_dir + "/" + name);
  doc["artifacts"] = arts;
  std::ofstream out(out_dir + "/manifest.json", std::ios::binary);
  if (!out) throw config_error("cannot open for writing: " + out_dir + "/manifest.json");
  out << doc.dump(1) << "\n";
}

}  // namespace nsde::cli
