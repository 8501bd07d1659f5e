#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rldarts/envs.hpp"
#include "rldarts/rl.hpp"
#include "rldarts/supernet.hpp"

namespace rldarts {

enum class Algorithm { Ppo, Dqn };
Algorithm algorithm_from_string(const std::string& s);
const char* to_string(Algorithm a);

struct MetricsRow {
  long long step = 0;
  long long episodes = 0;
  double mean_return = 0;      // over the last 50 completed episodes
  double loss_total = 0;
  double loss_pi_or_td = 0;
  double loss_v = 0;
  double entropy = 0;
  double alpha_max_dev = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

struct RlConfig {
  PpoConfig ppo;
  DqnConfig dqn;
};

struct TrainOptions {
  long long budget_steps = 0;
  uint64_t seed = 1;
  int snapshot_every = 100;  // learner updates between alpha snapshots
  std::string checkpoint_path;
};

struct RunResult {
  double final_return = 0;  // mean episodic return over the last 50 episodes
  long long episodes = 0;
  long long steps = 0;
  long long updates = 0;
  std::vector<MetricsRow> metrics;
  std::vector<AlphaSnapshot> snapshots;  // supernet runs only
};

// fresh environment from a seed; the trainer derives per-env seeds
using EnvFactory = std::function<std::unique_ptr<Env>(uint64_t seed)>;

// Weights plus the encoder that owns them. `supernet` aliases `encoder` when
// the network is a supernet; alpha then trains jointly with the weights.
struct NetworkBundle {
  ParameterStore<float> store;
  std::unique_ptr<EncoderBase<float>> encoder;
  SupernetEncoder<float>* supernet = nullptr;

  static NetworkBundle make_supernet(const SupernetConfig& cfg, std::array<int, 3> obs,
                                     uint64_t init_seed, bool frozen_alpha = false);
  static NetworkBundle make_discrete(const SupernetConfig& cfg, const CellChoice& cells,
                                     std::array<int, 3> obs, uint64_t init_seed);
  static NetworkBundle make_baseline(const std::vector<int>& depths, int ksize,
                                     std::array<int, 3> obs, int feature_dim,
                                     uint64_t init_seed);
};

// Algorithm 1 step 1 (supernet) or step 3 (discrete/baseline): PPO or
// dueling double-DQN over the bundle. A supernet trains theta and alpha with
// one optimizer; other encoders train network weights only. Aborts with
// NanAbortError (carrying the last alpha snapshot) when the loss or alpha
// goes non-finite. budget_steps == 0 runs a 10-episode evaluation of the
// initial policy and performs no updates.
RunResult train(Algorithm algo, NetworkBundle& net, const EnvFactory& envf, const RlConfig& cfg,
                const TrainOptions& opt);

// Mean return of `episodes` rollouts of the bundle's current policy (sampled
// actions for PPO, greedy for DQN), without any learning. Creates the policy
// heads if the bundle has none yet.
double evaluate_policy(Algorithm algo, NetworkBundle& net, const EnvFactory& envf, int episodes,
                       uint64_t seed);

// weights + alpha + optimizer-free rng-less snapshot of a parameter store
void save_checkpoint(const ParameterStore<float>& store, uint64_t rng_state_seed,
                     long long step, const std::string& path);
struct Checkpoint {
  long long step = 0;
  uint64_t rng_state_seed = 0;
};
Checkpoint load_checkpoint(ParameterStore<float>& store, const std::string& path);

struct EvalResult {
  double mean = 0;
  double stddev = 0;
  std::vector<double> per_seed;
};

// trains the cell from fresh weights once per seed and reports mean +- std
EvalResult evaluate_cell(const SupernetConfig& eval_cfg, const CellChoice& cells,
                         std::array<int, 3> obs, Algorithm algo, const EnvFactory& envf,
                         const RlConfig& cfg, long long budget, const std::vector<uint64_t>& seeds);

struct RandomSearchResult {
  CellChoice best;
  double best_score = 0;
  std::vector<std::pair<CellChoice, double>> evaluated;
};

// samples budget_cells unique random cells, trains each once with the
// search-phase budget, and returns the argmax by final return
RandomSearchResult random_search(int budget_cells, const SupernetConfig& search_cfg,
                                 std::array<int, 3> obs, Algorithm algo, const EnvFactory& envf,
                                 const RlConfig& cfg, long long per_cell_budget, Rng& rng);

}  // namespace rldarts
