#pragma once

#include <map>
#include <string>
#include <vector>

#include "rldarts/common.hpp"
#include "rldarts/supernet.hpp"
#include "rldarts/trainer.hpp"

namespace rldarts {

// Flat sectioned key = value text. Unknown sections or keys are configuration
// errors; the canonical form (sorted) feeds the config hash so a record can
// prove which configuration produced it.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  long long get_ll(const std::string& section, const std::string& key, long long fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<int> get_ints(const std::string& section, const std::string& key,
                            const std::vector<int>& fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string canonical() const;
  uint64_t hash() const { return fnv1a64(canonical()); }
  std::string hash_hex() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

enum class Phase {
  Search,
  Discretize,
  Eval,
  RandomSearch,
  Ablate,
  EnumerateSpace,
  Analyze,
  Plot,
};
Phase phase_from_string(const std::string& s);
const char* to_string(Phase p);

enum class AblationKind { UniformAlpha, NoReluSpace, PureConv3x3, PureConv5x5 };
AblationKind ablation_from_string(const std::string& s);
const char* to_string(AblationKind k);

// Typed view of a run configuration file.
struct RunConfig {
  Phase phase = Phase::Search;
  Algorithm algorithm = Algorithm::Ppo;
  std::vector<std::string> games{"chase"};
  LevelMode level_mode = LevelMode::infinite();
  uint64_t seed = 1;
  long long budget_steps = 200000;
  long long eval_budget_steps = 100000;
  int eval_seeds = 3;
  int workers = 1;
  int snapshot_every = 100;
  int cost_ratio = 3;
  int random_cells = 0;  // 0: derived from cost_ratio
  int heldout_episodes = 0;
  std::string out_dir = "out";
  std::string dump_frames;

  SupernetConfig supernet;          // with search-phase depths
  std::vector<int> eval_depths;     // depths for evaluation networks
  bool frozen_alpha = false;

  RlConfig rl;

  AblationKind ablation = AblationKind::UniformAlpha;

  std::string eval_cell_file;       // eval phase: skip search/discretize
  std::string eval_reduction_cell_file;

  std::string analyze_mode = "correlation";
  std::string analyze_scores_csv;
  std::string analyze_record;
  std::string probe_source = "random_policy";  // or a checkpoint path
  int probe_batch = 32;
  int every_k = 1;

  ConfigFile raw;  // canonical source of truth for hashing / reproduction

  static RunConfig from_file(const std::string& path);
  static RunConfig from_config(ConfigFile file);

  SupernetConfig eval_supernet_config() const {
    SupernetConfig c = supernet;
    c.depths = eval_depths;
    return c;
  }

  EnvFactory env_factory() const;
  std::array<int, 3> obs_shape() const { return {24, 24, 3}; }

  void validate() const;
};

}  // namespace rldarts
