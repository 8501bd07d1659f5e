#include "rldarts/envs.hpp"

#include <algorithm>
#include <fstream>
#include <queue>

namespace rldarts {

namespace {

constexpr uint64_t kInfiniteSeedBase = 1ULL << 32;

// next level seed for the configured mode; finite seeds live in {0..n-1},
// infinite seeds above 2^32 so the two ranges never intersect
uint64_t draw_level_seed(Rng& rng, const LevelMode& mode) {
  if (mode.kind == LevelMode::Finite) {
    if (mode.levels < 1) throw ConfigError("finite level mode needs at least one level");
    return static_cast<uint64_t>(rng.uniform_int(mode.levels));
  }
  return kInfiniteSeedBase + (rng.next_u64() >> 16);
}

int move_dr(int action) { return action == ActUp ? -1 : action == ActDown ? 1 : 0; }
int move_dc(int action) { return action == ActLeft ? -1 : action == ActRight ? 1 : 0; }

uint64_t hash_bytes(const std::vector<uint8_t>& v, uint64_t salt) {
  uint64_t h = 0xcbf29ce484222325ULL ^ salt;
  for (uint8_t b : v) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

GameSpec chase_spec() {
  GameSpec s;
  s.name = "chase";
  s.r_max = 10.0;     // goal bonus bounds the return from above
  s.r_min = -12.8;    // 128 steps of -0.1 without ever reaching the goal
  s.wall_density = 0.12;
  return s;
}

GameSpec dodge_spec() {
  GameSpec s;
  s.name = "dodge";
  s.r_max = 12.8;  // surviving all 128 steps at +0.1
  s.r_min = 0.0;
  s.obstacles = 6;
  return s;
}

double normalize_step_reward(double r, const GameSpec& spec) {
  if (spec.r_max <= 0) throw ConfigError("normalize_step_reward needs R_max > 0");
  return r / spec.r_max;
}

double normalized_score(double R, double r_min, double r_max) {
  if (r_max == r_min) throw ConfigError("normalized_score needs R_max != R_min");
  return (R - r_min) / (r_max - r_min);
}

std::unique_ptr<Env> make_env(const std::string& name, LevelMode mode, uint64_t seed) {
  if (name == "chase") return std::make_unique<ChaseEnv>(chase_spec(), mode, seed);
  if (name == "dodge") return std::make_unique<DodgeEnv>(dodge_spec(), mode, seed);
  throw ConfigError("unknown game: " + name);
}

// ---------------------------------------------------------------------------
// chase

ChaseEnv::ChaseEnv(GameSpec spec, LevelMode mode, uint64_t seed)
    : spec_(std::move(spec)), mode_(mode), level_rng_(Rng(seed).derive(0x656e76)) {
  walls_.resize(static_cast<size_t>(spec_.grid * spec_.grid));
  obs_.resize(static_cast<size_t>(spec_.grid * spec_.grid * 3));
  reset();
}

void ChaseEnv::generate_level() {
  const int n = spec_.grid;
  Rng lr = Rng(level_seed_).derive(0x6c6179);
  std::fill(walls_.begin(), walls_.end(), 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const bool border = r == 0 || c == 0 || r == n - 1 || c == n - 1;
      if (border || lr.uniform() < spec_.wall_density)
        walls_[static_cast<size_t>(r * n + c)] = 1;
    }
  // largest connected component of empty cells hosts the agent and the goal
  std::vector<int> comp(static_cast<size_t>(n * n), -1);
  int best_comp = -1, best_size = 0, ncomp = 0;
  for (int start = 0; start < n * n; ++start) {
    if (walls_[static_cast<size_t>(start)] || comp[static_cast<size_t>(start)] >= 0) continue;
    int size = 0;
    std::queue<int> q;
    q.push(start);
    comp[static_cast<size_t>(start)] = ncomp;
    while (!q.empty()) {
      const int cur = q.front();
      q.pop();
      ++size;
      const int r = cur / n, c = cur % n;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& p : nb) {
        if (p[0] < 0 || p[0] >= n || p[1] < 0 || p[1] >= n) continue;
        const int idx = p[0] * n + p[1];
        if (walls_[static_cast<size_t>(idx)] || comp[static_cast<size_t>(idx)] >= 0) continue;
        comp[static_cast<size_t>(idx)] = ncomp;
        q.push(idx);
      }
    }
    if (size > best_size) {
      best_size = size;
      best_comp = ncomp;
    }
    ++ncomp;
  }
  std::vector<int> cells;
  for (int i = 0; i < n * n; ++i)
    if (comp[static_cast<size_t>(i)] == best_comp) cells.push_back(i);
  // the agent starts at the free cell nearest the grid center; layouts and
  // goals carry the procedural variety
  const int center = (n / 2) * n + n / 2;
  int a = cells[0];
  for (int i : cells) {
    auto d = [n](int x, int y) {
      return std::abs(x / n - y / n) + std::abs(x % n - y % n);
    };
    if (d(i, center) < d(a, center)) a = i;
  }
  ar_ = a / n;
  ac_ = a % n;
  // goal lands inside the configured BFS-distance band when possible
  std::vector<int> dist(static_cast<size_t>(n * n), -1);
  std::queue<int> q;
  dist[static_cast<size_t>(a)] = 0;
  q.push(a);
  while (!q.empty()) {
    const int cur = q.front();
    q.pop();
    const int r = cur / n, c = cur % n;
    const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
    for (const auto& p : nb) {
      if (p[0] < 0 || p[0] >= n || p[1] < 0 || p[1] >= n) continue;
      const int idx = p[0] * n + p[1];
      if (walls_[static_cast<size_t>(idx)] || dist[static_cast<size_t>(idx)] >= 0) continue;
      dist[static_cast<size_t>(idx)] = dist[static_cast<size_t>(cur)] + 1;
      q.push(idx);
    }
  }
  std::vector<int> banded;
  for (int i : cells)
    if (dist[static_cast<size_t>(i)] >= spec_.goal_dist_min &&
        dist[static_cast<size_t>(i)] <= spec_.goal_dist_max)
      banded.push_back(i);
  const auto& pool = banded.empty() ? cells : banded;
  int g = a;
  while (g == a) g = pool[static_cast<size_t>(lr.uniform_int(static_cast<int>(pool.size())))];
  gr_ = g / n;
  gc_ = g % n;
}

void ChaseEnv::reset() {
  level_seed_ = draw_level_seed(level_rng_, mode_);
  generate_level();
  t_ = 0;
  done_ = false;
  render();
}

StepResult ChaseEnv::step(int action) {
  if (done_) throw UsageError("step after episode end");
  if (action < 0 || action >= kActionCount) throw UsageError("action out of range");
  const int nr = ar_ + move_dr(action);
  const int nc = ac_ + move_dc(action);
  if (nr >= 0 && nr < spec_.grid && nc >= 0 && nc < spec_.grid &&
      !walls_[static_cast<size_t>(nr * spec_.grid + nc)]) {
    ar_ = nr;
    ac_ = nc;
  }
  ++t_;
  StepResult out;
  out.reward = -0.1f;
  if (ar_ == gr_ && ac_ == gc_) {
    out.reward += 10.0f;
    done_ = true;
  } else if (t_ >= spec_.episode_cap) {
    done_ = true;
    out.truncated = true;
  }
  out.done = done_;
  render();
  return out;
}

void ChaseEnv::render() {
  const int n = spec_.grid;
  std::fill(obs_.begin(), obs_.end(), 0);
  for (int i = 0; i < n * n; ++i)
    if (walls_[static_cast<size_t>(i)]) obs_[static_cast<size_t>(i * 3)] = 255;
  obs_[static_cast<size_t>((ar_ * n + ac_) * 3 + 1)] = 255;
  obs_[static_cast<size_t>((gr_ * n + gc_) * 3 + 2)] = 255;
}

uint64_t ChaseEnv::layout_hash() const {
  uint64_t h = hash_bytes(walls_, 0x636873);
  h = splitmix64(h ^ static_cast<uint64_t>(gr_ * spec_.grid + gc_));
  return h;
}

// ---------------------------------------------------------------------------
// dodge

DodgeEnv::DodgeEnv(GameSpec spec, LevelMode mode, uint64_t seed)
    : spec_(std::move(spec)), mode_(mode), level_rng_(Rng(seed).derive(0x656e77)) {
  walls_.resize(static_cast<size_t>(spec_.grid * spec_.grid));
  obs_.resize(static_cast<size_t>(spec_.grid * spec_.grid * 3));
  reset();
}

void DodgeEnv::generate_level() {
  const int n = spec_.grid;
  Rng lr = Rng(level_seed_).derive(0x646f64);
  std::fill(walls_.begin(), walls_.end(), 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (r == 0 || c == 0 || r == n - 1 || c == n - 1)
        walls_[static_cast<size_t>(r * n + c)] = 1;
  ar_ = 1 + lr.uniform_int(n - 2);
  ac_ = 1 + lr.uniform_int(n - 2);
  obstacles_.clear();
  while (static_cast<int>(obstacles_.size()) < spec_.obstacles) {
    const int r = 1 + lr.uniform_int(n - 2);
    const int c = 1 + lr.uniform_int(n - 2);
    if (r == ar_ && c == ac_) continue;
    static const int dirs[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    const int d = lr.uniform_int(4);
    obstacles_.push_back({r, c, dirs[d][0], dirs[d][1]});
  }
}

void DodgeEnv::reset() {
  level_seed_ = draw_level_seed(level_rng_, mode_);
  generate_level();
  t_ = 0;
  done_ = false;
  render();
}

bool DodgeEnv::occupied_by_obstacle(int r, int c) const {
  for (const auto& o : obstacles_)
    if (o.r == r && o.c == c) return true;
  return false;
}

StepResult DodgeEnv::step(int action) {
  if (done_) throw UsageError("step after episode end");
  if (action < 0 || action >= kActionCount) throw UsageError("action out of range");
  // obstacles move first, bouncing off walls
  for (auto& o : obstacles_) {
    int nr = o.r + o.dr, nc = o.c + o.dc;
    if (walls_[static_cast<size_t>(nr * spec_.grid + nc)]) {
      o.dr = -o.dr;
      o.dc = -o.dc;
      nr = o.r + o.dr;
      nc = o.c + o.dc;
      if (walls_[static_cast<size_t>(nr * spec_.grid + nc)]) {
        nr = o.r;
        nc = o.c;
      }
    }
    o.r = nr;
    o.c = nc;
  }
  const int nr = ar_ + move_dr(action);
  const int nc = ac_ + move_dc(action);
  if (!walls_[static_cast<size_t>(nr * spec_.grid + nc)]) {
    ar_ = nr;
    ac_ = nc;
  }
  ++t_;
  StepResult out;
  if (occupied_by_obstacle(ar_, ac_)) {
    out.reward = 0.0f;
    done_ = true;
  } else {
    out.reward = 0.1f;
    if (t_ >= spec_.episode_cap) {
      done_ = true;
      out.truncated = true;
    }
  }
  out.done = done_;
  render();
  return out;
}

void DodgeEnv::render() {
  const int n = spec_.grid;
  std::fill(obs_.begin(), obs_.end(), 0);
  for (int i = 0; i < n * n; ++i)
    if (walls_[static_cast<size_t>(i)]) obs_[static_cast<size_t>(i * 3)] = 255;
  obs_[static_cast<size_t>((ar_ * n + ac_) * 3 + 1)] = 255;
  for (const auto& o : obstacles_)
    obs_[static_cast<size_t>((o.r * n + o.c) * 3 + 2)] = 255;
}

uint64_t DodgeEnv::layout_hash() const {
  uint64_t h = hash_bytes(walls_, 0x646f64);
  for (const auto& o : obstacles_)
    h = splitmix64(h ^ static_cast<uint64_t>(((o.r * spec_.grid + o.c) * 4 + (o.dr + 1)) * 2 +
                                             (o.dc + 1)));
  h = splitmix64(h ^ static_cast<uint64_t>(ar_ * spec_.grid + ac_));
  return h;
}

// ---------------------------------------------------------------------------
// multi-game mixture

MultiGameEnv::MultiGameEnv(std::vector<std::unique_ptr<Env>> games, uint64_t seed)
    : games_(std::move(games)), mixer_rng_(Rng(seed).derive(0x6d6978)) {
  if (games_.size() < 2) throw ConfigError("multi-game env needs at least two games");
  const auto shape = games_[0]->obs_shape();
  for (const auto& g : games_) {
    if (g->obs_shape() != shape)
      throw ConfigError("multi-game env needs identical observation shapes");
    if (g->spec().r_max <= 0) throw ConfigError("multi-game env needs R_max > 0 per game");
  }
  returns_.resize(games_.size());
  current_ = mixer_rng_.uniform_int(static_cast<int>(games_.size()));
  games_[static_cast<size_t>(current_)]->reset();
  episode_return_ = 0;
}

void MultiGameEnv::reset() {
  current_ = mixer_rng_.uniform_int(static_cast<int>(games_.size()));
  games_[static_cast<size_t>(current_)]->reset();
  episode_return_ = 0;
}

StepResult MultiGameEnv::step(int action) {
  auto& game = *games_[static_cast<size_t>(current_)];
  StepResult out = game.step(action);
  episode_return_ += out.reward;
  if (out.done) {
    auto& hist = returns_[static_cast<size_t>(current_)];
    hist.push_back(episode_return_);
    if (hist.size() > 50) hist.erase(hist.begin());
  }
  out.reward = static_cast<float>(normalize_step_reward(out.reward, game.spec()));
  return out;
}

double MultiGameEnv::mean_return_per_game(int game) const {
  const auto& hist = returns_.at(static_cast<size_t>(game));
  if (hist.empty()) return 0;
  double s = 0;
  for (double r : hist) s += r;
  return s / static_cast<double>(hist.size());
}

double MultiGameEnv::mean_normalized_score() const {
  double s = 0;
  for (int g = 0; g < game_count(); ++g) {
    const auto& spec = games_[static_cast<size_t>(g)]->spec();
    s += normalized_score(mean_return_per_game(g), spec.r_min, spec.r_max);
  }
  return s / game_count();
}

void write_ppm(const Env& env, const std::string& path) {
  const auto shape = env.obs_shape();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << "P6\n" << shape[1] << " " << shape[0] << "\n255\n";
  const auto& b = env.obs_bytes();
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace rldarts
