#include "rldarts/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace rldarts {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// every key the loader understands, by section
const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"run",
       {"phase", "algorithm", "game", "level_mode", "levels", "seed", "budget_steps",
        "eval_budget_steps", "eval_seeds", "workers", "snapshot_every", "cost_ratio",
        "random_cells", "heldout_episodes", "out_dir", "dump_frames"}},
      {"supernet",
       {"opset", "reduction_opset", "N", "R", "I", "D", "K", "depths", "eval_depths", "merge",
        "temperature", "feature_dim", "frozen_alpha"}},
      {"ppo",
       {"gamma", "lambda", "clip_eps", "value_coef", "entropy_coef", "lr", "alpha_lr_mult",
        "rollout_len", "n_envs", "minibatch", "epochs"}},
      {"dqn",
       {"gamma", "lr", "alpha_lr_mult", "n_step", "batch", "buffer_capacity", "target_sync",
        "train_interval", "learn_start", "eps_start", "eps_end", "eps_decay_steps"}},
      {"ablate", {"kind"}},
      {"eval", {"cell", "reduction_cell"}},
      {"analyze", {"mode", "scores", "record", "probe", "probe_batch", "every_k"}},
  };
  return s;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema().count(section))
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::string key_section = section;
    // the canonical form uses dotted keys with no section headers
    if (const auto dot = key.find('.'); dot != std::string::npos && schema().count(key.substr(0, dot))) {
      key_section = key.substr(0, dot);
      key = key.substr(dot + 1);
    }
    if (key_section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    if (!schema().at(key_section).count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key_section +
                        "." + key);
    cfg.sections_[key_section][key] = value;
  }
  return cfg;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key);
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) return fallback;
  const auto jt = it->second.find(key);
  return jt == it->second.end() ? fallback : jt->second;
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return std::stoi(get(section, key, ""));
  } catch (const std::exception&) {
    throw ConfigError("config " + section + "." + key + " must be an integer");
  }
}

long long ConfigFile::get_ll(const std::string& section, const std::string& key,
                             long long fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return std::stoll(get(section, key, ""));
  } catch (const std::exception&) {
    throw ConfigError("config " + section + "." + key + " must be an integer");
  }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  try {
    return std::stod(get(section, key, ""));
  } catch (const std::exception&) {
    throw ConfigError("config " + section + "." + key + " must be a number");
  }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config " + section + "." + key + " must be a boolean");
}

std::vector<int> ConfigFile::get_ints(const std::string& section, const std::string& key,
                                      const std::vector<int>& fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<int> out;
  for (const auto& item : split_csv(get(section, key, ""))) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("config " + section + "." + key + " must be a comma list of integers");
    }
  }
  if (out.empty()) throw ConfigError("config " + section + "." + key + " is empty");
  return out;
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
  if (!schema().count(section) || !schema().at(section).count(key))
    throw ConfigError("unknown config key " + section + "." + key);
  sections_[section][key] = value;
}

std::string ConfigFile::canonical() const {
  std::string out;
  for (const auto& [section, kv] : sections_)
    for (const auto& [key, value] : kv) out += section + "." + key + "=" + value + "\n";
  return out;
}

std::string ConfigFile::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

Phase phase_from_string(const std::string& s) {
  if (s == "search") return Phase::Search;
  if (s == "discretize") return Phase::Discretize;
  if (s == "eval") return Phase::Eval;
  if (s == "random-search") return Phase::RandomSearch;
  if (s == "ablate") return Phase::Ablate;
  if (s == "enumerate-space") return Phase::EnumerateSpace;
  if (s == "analyze") return Phase::Analyze;
  if (s == "plot") return Phase::Plot;
  throw ConfigError("unknown phase: " + s);
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Search: return "search";
    case Phase::Discretize: return "discretize";
    case Phase::Eval: return "eval";
    case Phase::RandomSearch: return "random-search";
    case Phase::Ablate: return "ablate";
    case Phase::EnumerateSpace: return "enumerate-space";
    case Phase::Analyze: return "analyze";
    case Phase::Plot: return "plot";
  }
  throw UsageError("bad phase");
}

AblationKind ablation_from_string(const std::string& s) {
  if (s == "uniform_alpha") return AblationKind::UniformAlpha;
  if (s == "norelu_space") return AblationKind::NoReluSpace;
  if (s == "pure_conv3x3") return AblationKind::PureConv3x3;
  if (s == "pure_conv5x5") return AblationKind::PureConv5x5;
  throw ConfigError("unknown ablation kind: " + s);
}

const char* to_string(AblationKind k) {
  switch (k) {
    case AblationKind::UniformAlpha: return "uniform_alpha";
    case AblationKind::NoReluSpace: return "norelu_space";
    case AblationKind::PureConv3x3: return "pure_conv3x3";
    case AblationKind::PureConv5x5: return "pure_conv5x5";
  }
  throw UsageError("bad ablation kind");
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_config(ConfigFile::parse_file(path));
}

RunConfig RunConfig::from_config(ConfigFile file) {
  RunConfig c;
  c.phase = phase_from_string(file.get("run", "phase", "search"));
  c.algorithm = algorithm_from_string(file.get("run", "algorithm", "ppo"));
  {
    std::stringstream ss(file.get("run", "game", "chase"));
    std::string g;
    c.games.clear();
    while (std::getline(ss, g, ',')) {
      g = trim(g);
      if (!g.empty()) c.games.push_back(g);
    }
    if (c.games.empty()) throw ConfigError("run.game must name at least one game");
  }
  const std::string lm = file.get("run", "level_mode", "infinite");
  if (lm == "infinite") {
    c.level_mode = LevelMode::infinite();
  } else if (lm == "finite") {
    c.level_mode = LevelMode::finite(file.get_int("run", "levels", 200));
  } else {
    throw ConfigError("run.level_mode must be infinite or finite");
  }
  c.seed = static_cast<uint64_t>(file.get_ll("run", "seed", 1));
  c.budget_steps = file.get_ll("run", "budget_steps", 200000);
  c.eval_budget_steps = file.get_ll("run", "eval_budget_steps", 100000);
  c.eval_seeds = file.get_int("run", "eval_seeds", 3);
  c.workers = file.get_int("run", "workers", 1);
  c.snapshot_every = file.get_int("run", "snapshot_every", 100);
  c.cost_ratio = file.get_int("run", "cost_ratio", 3);
  c.random_cells = file.get_int("run", "random_cells", 0);
  c.heldout_episodes = file.get_int("run", "heldout_episodes", 0);
  c.out_dir = file.get("run", "out_dir", "out");
  c.dump_frames = file.get("run", "dump_frames", "");

  c.supernet.normal_cells = file.get_int("supernet", "N", 2);
  c.supernet.reduction_cells = file.get_int("supernet", "R", 0);
  c.supernet.intermediate_nodes = file.get_int("supernet", "I", 4);
  c.supernet.blocks = file.get_int("supernet", "D", 2);
  c.supernet.top_k = file.get_int("supernet", "K", 2);
  c.supernet.depths = file.get_ints("supernet", "depths", {8, 8});
  c.eval_depths = file.get_ints("supernet", "eval_depths", c.supernet.depths);
  c.supernet.merge = merge_from_string(file.get("supernet", "merge", "concat_conv1x1"));
  c.supernet.normal_opset = file.get("supernet", "opset", "micro");
  c.supernet.reduction_opset = file.get("supernet", "reduction_opset", "classic_reduction");
  c.supernet.temperature = file.get_double("supernet", "temperature", 0.2);
  c.supernet.feature_dim = file.get_int("supernet", "feature_dim", 256);
  c.frozen_alpha = file.get_bool("supernet", "frozen_alpha", false);

  c.rl.ppo.gamma = file.get_double("ppo", "gamma", 0.99);
  c.rl.ppo.lambda = file.get_double("ppo", "lambda", 0.95);
  c.rl.ppo.clip_eps = file.get_double("ppo", "clip_eps", 0.2);
  c.rl.ppo.value_coef = file.get_double("ppo", "value_coef", 0.5);
  c.rl.ppo.entropy_coef = file.get_double("ppo", "entropy_coef", 0.01);
  c.rl.ppo.lr = file.get_double("ppo", "lr", 2.5e-4);
  c.rl.ppo.alpha_lr_mult = file.get_double("ppo", "alpha_lr_mult", 1.0);
  c.rl.ppo.rollout_len = file.get_int("ppo", "rollout_len", 128);
  c.rl.ppo.n_envs = file.get_int("ppo", "n_envs", 8);
  c.rl.ppo.minibatch = file.get_int("ppo", "minibatch", 64);
  c.rl.ppo.epochs = file.get_int("ppo", "epochs", 1);

  c.rl.dqn.gamma = file.get_double("dqn", "gamma", 0.99);
  c.rl.dqn.lr = file.get_double("dqn", "lr", 5e-5);
  c.rl.dqn.alpha_lr_mult = file.get_double("dqn", "alpha_lr_mult", 1.0);
  c.rl.dqn.n_step = file.get_int("dqn", "n_step", 7);
  c.rl.dqn.batch = file.get_int("dqn", "batch", 64);
  c.rl.dqn.buffer_capacity = file.get_int("dqn", "buffer_capacity", 20000);
  c.rl.dqn.target_sync = file.get_int("dqn", "target_sync", 1000);
  c.rl.dqn.train_interval = file.get_int("dqn", "train_interval", 4);
  c.rl.dqn.learn_start = file.get_int("dqn", "learn_start", 1000);
  c.rl.dqn.eps_start = file.get_double("dqn", "eps_start", 1.0);
  c.rl.dqn.eps_end = file.get_double("dqn", "eps_end", 0.05);
  c.rl.dqn.eps_decay_steps = file.get_ll("dqn", "eps_decay_steps", 50000);

  if (file.has("ablate", "kind"))
    c.ablation = ablation_from_string(file.get("ablate", "kind", ""));

  c.eval_cell_file = file.get("eval", "cell", "");
  c.eval_reduction_cell_file = file.get("eval", "reduction_cell", "");

  c.analyze_mode = file.get("analyze", "mode", "correlation");
  c.analyze_scores_csv = file.get("analyze", "scores", "");
  c.analyze_record = file.get("analyze", "record", "");
  c.probe_source = file.get("analyze", "probe", "random_policy");
  c.probe_batch = file.get_int("analyze", "probe_batch", 32);
  c.every_k = file.get_int("analyze", "every_k", 1);

  c.raw = std::move(file);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  supernet.validate();
  rl.ppo.validate();
  rl.dqn.validate();
  if (static_cast<int>(eval_depths.size()) != supernet.blocks)
    throw ConfigError("supernet.eval_depths length must equal block count");
  for (size_t i = 0; i < eval_depths.size(); ++i)
    if (supernet.depths[i] > eval_depths[i])
      throw ConfigError("search-phase depths must not exceed eval-phase depths");
  if (budget_steps < 0 || eval_budget_steps < 0)
    throw ConfigError("budgets must be non-negative");
  if (eval_seeds < 1) throw ConfigError("eval_seeds must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (cost_ratio < 1) throw ConfigError("cost_ratio must be at least 1");
  for (const auto& g : games)
    if (g != "chase" && g != "dodge") throw ConfigError("unknown game: " + g);
}

EnvFactory RunConfig::env_factory() const {
  const auto games_copy = games;
  const auto mode = level_mode;
  if (games_copy.size() == 1) {
    const std::string name = games_copy[0];
    return [name, mode](uint64_t seed) { return make_env(name, mode, seed); };
  }
  return [games_copy, mode](uint64_t seed) -> std::unique_ptr<Env> {
    std::vector<std::unique_ptr<Env>> envs;
    for (size_t i = 0; i < games_copy.size(); ++i)
      envs.push_back(make_env(games_copy[i], mode, derive_seed(seed, i + 1)));
    return std::make_unique<MultiGameEnv>(std::move(envs), seed);
  };
}

}  // namespace rldarts
