#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rldarts/common.hpp"

namespace rldarts {

// Actions shared by all games.
enum Action { ActUp = 0, ActDown = 1, ActLeft = 2, ActRight = 3, ActStay = 4 };
constexpr int kActionCount = 5;

// Per-game constants. R_min/R_max are the analytic episodic bounds used for
// reward normalization and normalized scoring.
struct GameSpec {
  std::string name;
  int grid = 24;
  int episode_cap = 128;
  double r_min = 0;
  double r_max = 1;
  double wall_density = 0.12;  // chase
  // chase goal spawn band (BFS distance from the agent); keeps episodes
  // learnable within the step cap while staying procedural
  int goal_dist_min = 3;
  int goal_dist_max = 8;
  int obstacles = 6;  // dodge

  std::array<int, 3> obs_shape() const { return {grid, grid, 3}; }
};

GameSpec chase_spec();
GameSpec dodge_spec();

// finite(n): level seeds drawn uniformly from {0..n-1} on each reset.
// infinite: a fresh seed per reset, drawn from a range disjoint from any
// finite(n) so train/test splits cannot leak levels.
struct LevelMode {
  enum Kind { Finite, Infinite } kind = Infinite;
  int levels = 200;

  static LevelMode finite(int n) { return {Finite, n}; }
  static LevelMode infinite() { return {Infinite, 0}; }
};

struct StepResult {
  float reward = 0;
  bool done = false;
  // the episode ended by hitting the step cap rather than a terminal event;
  // learners bootstrap through such ends instead of treating them as absorbing
  bool truncated = false;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual void reset() = 0;
  // advances one step; throws UsageError if the episode is already done
  virtual StepResult step(int action) = 0;

  virtual const GameSpec& spec() const = 0;
  virtual std::array<int, 3> obs_shape() const { return spec().obs_shape(); }
  int action_count() const { return kActionCount; }

  // observation as bytes (grid x grid x 3, row-major); float pixels are
  // byte / 255 in [0, 1]
  virtual const std::vector<uint8_t>& obs_bytes() const = 0;
  void obs_float_into(float* dst) const {
    const auto& b = obs_bytes();
    for (size_t i = 0; i < b.size(); ++i) dst[i] = static_cast<float>(b[i]) * (1.0f / 255.0f);
  }

  virtual bool done() const = 0;
  virtual uint64_t level_seed() const = 0;
  // hash of the generated layout, for level-identity tests
  virtual uint64_t layout_hash() const = 0;
};

// reward / R_max preprocessing used by value-based multi-game training
double normalize_step_reward(double r, const GameSpec& spec);

// (R - R_min) / (R_max - R_min); deliberately unclipped, scores below R_min
// are negative
double normalized_score(double R, double r_min, double r_max);

std::unique_ptr<Env> make_env(const std::string& name, LevelMode mode, uint64_t seed);

// Reach the goal through procedural walls: -0.1 per step, +10 on the goal.
class ChaseEnv : public Env {
 public:
  ChaseEnv(GameSpec spec, LevelMode mode, uint64_t seed);

  void reset() override;
  StepResult step(int action) override;
  const GameSpec& spec() const override { return spec_; }
  const std::vector<uint8_t>& obs_bytes() const override { return obs_; }
  bool done() const override { return done_; }
  uint64_t level_seed() const override { return level_seed_; }
  uint64_t layout_hash() const override;

  // layout accessors for oracles and rendering
  bool wall(int r, int c) const { return walls_[static_cast<size_t>(r * spec_.grid + c)] != 0; }
  std::pair<int, int> agent() const { return {ar_, ac_}; }
  std::pair<int, int> goal() const { return {gr_, gc_}; }

 private:
  void generate_level();
  void render();

  GameSpec spec_;
  LevelMode mode_;
  Rng level_rng_;
  uint64_t level_seed_ = 0;
  std::vector<uint8_t> walls_;
  std::vector<uint8_t> obs_;
  int ar_ = 0, ac_ = 0, gr_ = 0, gc_ = 0;
  int t_ = 0;
  bool done_ = true;
};

// Survive moving obstacles: +0.1 per survived step, collision ends the
// episode.
class DodgeEnv : public Env {
 public:
  DodgeEnv(GameSpec spec, LevelMode mode, uint64_t seed);

  void reset() override;
  StepResult step(int action) override;
  const GameSpec& spec() const override { return spec_; }
  const std::vector<uint8_t>& obs_bytes() const override { return obs_; }
  bool done() const override { return done_; }
  uint64_t level_seed() const override { return level_seed_; }
  uint64_t layout_hash() const override;

 private:
  struct Obstacle {
    int r, c, dr, dc;
  };

  void generate_level();
  void render();
  bool occupied_by_obstacle(int r, int c) const;

  GameSpec spec_;
  LevelMode mode_;
  Rng level_rng_;
  uint64_t level_seed_ = 0;
  std::vector<uint8_t> walls_;
  std::vector<uint8_t> obs_;
  std::vector<Obstacle> obstacles_;
  int ar_ = 0, ac_ = 0;
  int t_ = 0;
  bool done_ = true;
};

// Uniform mixture over >= 2 games with identical observation/action spaces.
// Each reset draws a game, then a level; step rewards are normalized by the
// current game's R_max. Raw episodic returns are tracked per game so the
// mean normalized score per game can be reported.
class MultiGameEnv : public Env {
 public:
  MultiGameEnv(std::vector<std::unique_ptr<Env>> games, uint64_t seed);

  void reset() override;
  StepResult step(int action) override;
  const GameSpec& spec() const override { return games_[static_cast<size_t>(current_)]->spec(); }
  const std::vector<uint8_t>& obs_bytes() const override {
    return games_[static_cast<size_t>(current_)]->obs_bytes();
  }
  bool done() const override { return games_[static_cast<size_t>(current_)]->done(); }
  uint64_t level_seed() const override {
    return games_[static_cast<size_t>(current_)]->level_seed();
  }
  uint64_t layout_hash() const override {
    return games_[static_cast<size_t>(current_)]->layout_hash();
  }

  int current_game() const { return current_; }
  int game_count() const { return static_cast<int>(games_.size()); }
  // mean raw return of the last (up to) 50 episodes of one game
  double mean_return_per_game(int game) const;
  // mean over games of normalized_score(mean return)
  double mean_normalized_score() const;

 private:
  std::vector<std::unique_ptr<Env>> games_;
  Rng mixer_rng_;
  int current_ = 0;
  double episode_return_ = 0;
  std::vector<std::vector<double>> returns_;  // per game, last 50 kept
};

// debugging frame dump (binary PPM)
void write_ppm(const Env& env, const std::string& path);

}  // namespace rldarts
