#include "rldarts/harness.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rldarts/cell_io.hpp"
#include "rldarts/plots.hpp"

namespace rldarts {

using nlohmann::json;

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw ConfigError("cannot create directory " + path + ": " + ec.message());
}

namespace {

// Fans independent jobs out over worker threads. Each job owns its slot of
// the result state, so completion order never affects outputs.
void run_parallel(std::vector<std::function<void()>>& jobs, int workers) {
  if (workers <= 1 || jobs.size() <= 1) {
    for (auto& j : jobs) j();
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(workers, static_cast<int>(jobs.size()));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string cell_file_name(int index, bool reduction) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%03d%s.json", index, reduction ? "_reduction" : "");
  return buf;
}

void write_cell_choice(const CellChoice& choice, const std::string& dir, int index,
                       std::string& json_path) {
  ensure_dir(dir);
  json_path = dir + "/" + cell_file_name(index, false);
  write_cell_json(choice.normal, json_path);
  write_cell_dot(choice.normal, dir + "/" + std::to_string(index) + ".dot",
                 "cell_" + std::to_string(index));
  if (choice.reduction) {
    write_cell_json(*choice.reduction, dir + "/" + cell_file_name(index, true));
    write_cell_dot(*choice.reduction, dir + "/" + std::to_string(index) + "_reduction.dot",
                   "reduction_" + std::to_string(index));
  }
}

CellChoice read_cell_choice(const std::string& normal_path, const std::string& reduction_path) {
  CellChoice c;
  c.normal = read_cell_json(normal_path);
  if (!reduction_path.empty()) c.reduction = read_cell_json(reduction_path);
  return c;
}

ExperimentRecord base_record(const RunConfig& cfg) {
  ExperimentRecord rec;
  rec.phase = to_string(cfg.phase);
  rec.config_hash = cfg.raw.hash_hex();
  rec.config_text = cfg.raw.canonical();
  rec.eval_depths = cfg.eval_depths;
  rec.eval_budget = cfg.eval_budget_steps;
  return rec;
}

// one eval seed of a discrete network; optional held-out policy evaluation
// on infinite levels (disjoint from any finite training range)
struct SeedOutcome {
  double final_return = 0;
  double heldout_return = 0;
};

SeedOutcome eval_cell_seed(const RunConfig& cfg, const CellChoice& cells, uint64_t seed) {
  NetworkBundle net = NetworkBundle::make_discrete(cfg.eval_supernet_config(), cells,
                                                   cfg.obs_shape(), derive_seed(seed, 0x696e6974));
  TrainOptions opt;
  opt.budget_steps = cfg.eval_budget_steps;
  opt.seed = seed;
  opt.snapshot_every = cfg.snapshot_every;
  const RunResult r = train(cfg.algorithm, net, cfg.env_factory(), cfg.rl, opt);
  SeedOutcome out;
  out.final_return = r.final_return;
  if (cfg.heldout_episodes > 0) {
    std::vector<std::string> games = cfg.games;
    EnvFactory heldout = [games](uint64_t s) -> std::unique_ptr<Env> {
      if (games.size() == 1) return make_env(games[0], LevelMode::infinite(), s);
      std::vector<std::unique_ptr<Env>> envs;
      for (size_t i = 0; i < games.size(); ++i)
        envs.push_back(make_env(games[i], LevelMode::infinite(), derive_seed(s, i + 1)));
      return std::make_unique<MultiGameEnv>(std::move(envs), s);
    };
    out.heldout_return = evaluate_policy(cfg.algorithm, net, heldout, cfg.heldout_episodes,
                                         derive_seed(seed, 0x686f6c64));
  }
  return out;
}

EvalResult parallel_cell_eval(const RunConfig& cfg, const CellChoice& cells,
                              double* heldout_mean) {
  std::vector<uint64_t> seeds;
  for (int s = 0; s < cfg.eval_seeds; ++s) seeds.push_back(derive_seed(cfg.seed, 0xe0 + s));
  std::vector<SeedOutcome> outcomes(seeds.size());
  std::vector<std::function<void()>> jobs;
  for (size_t i = 0; i < seeds.size(); ++i)
    jobs.push_back([&cfg, &cells, &outcomes, &seeds, i]() {
      outcomes[i] = eval_cell_seed(cfg, cells, seeds[i]);
    });
  run_parallel(jobs, cfg.workers);
  EvalResult res;
  double hmean = 0;
  for (const auto& o : outcomes) {
    res.per_seed.push_back(o.final_return);
    hmean += o.heldout_return;
  }
  double mean = 0;
  for (double v : res.per_seed) mean += v;
  mean /= static_cast<double>(res.per_seed.size());
  double var = 0;
  for (double v : res.per_seed) var += (v - mean) * (v - mean);
  res.mean = mean;
  res.stddev = std::sqrt(var / static_cast<double>(res.per_seed.size()));
  if (heldout_mean) *heldout_mean = hmean / static_cast<double>(outcomes.size());
  return res;
}

}  // namespace

void ExperimentRecord::write(const std::string& path) const {
  json j;
  j["phase"] = phase;
  j["config_hash"] = config_hash;
  j["config"] = config_text;
  j["status"] = status;
  if (!failure.empty()) j["failure"] = failure;
  if (!metrics_csv.empty()) j["metrics_csv"] = metrics_csv;
  if (!alpha_log.empty()) j["alpha_log"] = alpha_log;
  j["cells"] = json::array();
  for (const auto& [step, file] : cells) j["cells"].push_back({{"step", step}, {"file", file}});
  if (!final_cell.empty()) j["final_cell"] = final_cell;
  j["search_return"] = search_return;
  j["search_steps"] = search_steps;
  if (eval) {
    j["eval"] = {{"mean", eval->mean},
                 {"std", eval->stddev},
                 {"per_seed", eval->per_seed},
                 {"budget", eval_budget},
                 {"depths", eval_depths}};
  }
  if (random_cells > 0) {
    j["random_search"] = {{"cells", random_cells},
                          {"total_steps", random_total_steps},
                          {"budget_parity_target", budget_parity_target}};
  }
  if (!ablation_kind.empty()) j["ablation"] = ablation_kind;
  if (heldout_episodes > 0) {
    j["heldout"] = {{"episodes", heldout_episodes}, {"mean_return", heldout_return}};
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

ExperimentRecord ExperimentRecord::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("record parse error: ") + e.what());
  }
  ExperimentRecord rec;
  rec.phase = j.value("phase", "");
  rec.config_hash = j.value("config_hash", "");
  rec.config_text = j.value("config", "");
  rec.status = j.value("status", "ok");
  rec.failure = j.value("failure", "");
  rec.metrics_csv = j.value("metrics_csv", "");
  rec.alpha_log = j.value("alpha_log", "");
  if (j.contains("cells"))
    for (const auto& c : j["cells"])
      rec.cells.emplace_back(c.at("step").get<long long>(), c.at("file").get<std::string>());
  rec.final_cell = j.value("final_cell", "");
  rec.search_return = j.value("search_return", 0.0);
  rec.search_steps = j.value("search_steps", 0LL);
  if (j.contains("eval")) {
    EvalResult ev;
    ev.mean = j["eval"].value("mean", 0.0);
    ev.stddev = j["eval"].value("std", 0.0);
    ev.per_seed = j["eval"].value("per_seed", std::vector<double>{});
    rec.eval = ev;
    rec.eval_budget = j["eval"].value("budget", 0LL);
    rec.eval_depths = j["eval"].value("depths", std::vector<int>{});
  }
  if (j.contains("ablation")) rec.ablation_kind = j["ablation"].get<std::string>();
  return rec;
}

ExperimentRecord run_search(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  ExperimentRecord rec = base_record(cfg);
  rec.metrics_csv = cfg.out_dir + "/metrics.csv";
  rec.alpha_log = cfg.out_dir + "/alpha_log.jsonl";

  NetworkBundle net = NetworkBundle::make_supernet(cfg.supernet, cfg.obs_shape(),
                                                   derive_seed(cfg.seed, 0x737570),
                                                   cfg.frozen_alpha);
  TrainOptions opt;
  opt.budget_steps = cfg.budget_steps;
  opt.seed = cfg.seed;
  opt.snapshot_every = cfg.snapshot_every;
  opt.checkpoint_path = cfg.out_dir + "/checkpoint.bin";
  RunResult result;
  try {
    result = train(cfg.algorithm, net, cfg.env_factory(), cfg.rl, opt);
  } catch (const NanAbortError& e) {
    rec.status = "failed";
    rec.failure = e.what();
    std::ofstream diag(cfg.out_dir + "/nan_diagnostic.json");
    diag << e.diagnostic << "\n";
    rec.write(cfg.out_dir + "/record.json");
    throw;
  }
  write_metrics_csv(result.metrics, rec.metrics_csv);
  write_snapshot_jsonl(result.snapshots, rec.alpha_log);
  rec.search_return = result.final_return;
  rec.search_steps = result.steps;

  const auto seq = distinct_cell_sequence(result.snapshots, cfg.supernet.top_k,
                                          cfg.supernet.merge);
  for (size_t i = 0; i < seq.size(); ++i) {
    std::string path;
    write_cell_choice(seq[i].second, cfg.out_dir + "/cells", static_cast<int>(i), path);
    rec.cells.emplace_back(seq[i].first, path);
  }
  if (!seq.empty()) {
    std::string path;
    CellChoice final_choice = seq.back().second;
    ensure_dir(cfg.out_dir + "/cells");
    path = cfg.out_dir + "/cells/final.json";
    write_cell_json(final_choice.normal, path);
    write_cell_dot(final_choice.normal, cfg.out_dir + "/cells/final.dot", "final");
    if (final_choice.reduction) {
      write_cell_json(*final_choice.reduction, cfg.out_dir + "/cells/final_reduction.json");
      write_cell_dot(*final_choice.reduction, cfg.out_dir + "/cells/final_reduction.dot",
                     "final_reduction");
    }
    rec.final_cell = path;
  }
  rec.write(cfg.out_dir + "/record.json");
  return rec;
}

ExperimentRecord run_pipeline(const RunConfig& cfg) {
  ExperimentRecord rec = run_search(cfg);
  if (rec.final_cell.empty()) return rec;
  const std::string red = cfg.supernet.reduction_cells > 0
                              ? cfg.out_dir + "/cells/final_reduction.json"
                              : "";
  const CellChoice cells = read_cell_choice(rec.final_cell, red);
  double heldout = 0;
  rec.eval = parallel_cell_eval(cfg, cells, &heldout);
  rec.heldout_return = heldout;
  rec.heldout_episodes = cfg.heldout_episodes * cfg.eval_seeds > 0 ? cfg.heldout_episodes : 0;
  rec.write(cfg.out_dir + "/record.json");
  return rec;
}

ExperimentRecord run_eval_only(const RunConfig& cfg) {
  if (cfg.eval_cell_file.empty())
    throw ConfigError("eval phase needs eval.cell pointing at a cell JSON file");
  ensure_dir(cfg.out_dir);
  ExperimentRecord rec = base_record(cfg);
  const CellChoice cells = read_cell_choice(cfg.eval_cell_file, cfg.eval_reduction_cell_file);
  rec.final_cell = cfg.eval_cell_file;
  double heldout = 0;
  rec.eval = parallel_cell_eval(cfg, cells, &heldout);
  rec.heldout_return = heldout;
  rec.heldout_episodes = cfg.heldout_episodes;
  rec.write(cfg.out_dir + "/record.json");
  return rec;
}

ExperimentRecord run_random_search(const RunConfig& cfg) {
  ensure_dir(cfg.out_dir);
  ExperimentRecord rec = base_record(cfg);
  const int cells_n = cfg.random_cells > 0 ? cfg.random_cells : cfg.cost_ratio;
  const long long parity_total = cfg.budget_steps * cfg.cost_ratio;
  if (parity_total % cells_n != 0)
    throw ConfigError("random-search budget parity: budget * cost_ratio must divide by the cell count");
  const long long per_cell = parity_total / cells_n;
  rec.random_cells = cells_n;
  rec.budget_parity_target = parity_total;
  rec.random_total_steps = per_cell * cells_n;

  // sample the candidate cells first so the draw order is worker-independent
  Rng rng = Rng(cfg.seed).derive(0x7273);
  const OpSet normal_ops = builtin_opset(cfg.supernet.normal_opset);
  const auto topo = cfg.supernet.topology();
  std::vector<CellChoice> candidates;
  std::vector<uint64_t> train_seeds;
  std::set<std::string> seen;
  while (static_cast<int>(candidates.size()) < cells_n) {
    CellChoice choice;
    choice.normal = sample_random_cell(rng, normal_ops, topo, cfg.supernet.merge);
    if (cfg.supernet.reduction_cells > 0)
      choice.reduction = sample_random_cell(rng, builtin_opset(cfg.supernet.reduction_opset),
                                            topo, cfg.supernet.merge);
    std::string key = cell_to_json(choice.normal, -1);
    if (choice.reduction) key += cell_to_json(*choice.reduction, -1);
    if (!seen.insert(key).second && seen.size() < 100000) continue;
    candidates.push_back(std::move(choice));
    train_seeds.push_back(rng.next_u64());
  }

  std::vector<double> scores(candidates.size(), 0.0);
  std::vector<std::function<void()>> jobs;
  for (size_t i = 0; i < candidates.size(); ++i)
    jobs.push_back([&, i]() {
      NetworkBundle net = NetworkBundle::make_discrete(cfg.supernet, candidates[i],
                                                       cfg.obs_shape(),
                                                       derive_seed(train_seeds[i], 1));
      TrainOptions opt;
      opt.budget_steps = per_cell;
      opt.seed = train_seeds[i];
      const RunResult r = train(cfg.algorithm, net, cfg.env_factory(), cfg.rl, opt);
      scores[i] = r.final_return;
    });
  run_parallel(jobs, cfg.workers);

  size_t best = 0;
  for (size_t i = 1; i < candidates.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  for (size_t i = 0; i < candidates.size(); ++i) {
    std::string path;
    write_cell_choice(candidates[i], cfg.out_dir + "/cells", static_cast<int>(i), path);
    rec.cells.emplace_back(static_cast<long long>(i), path);
  }
  {
    std::ofstream out(cfg.out_dir + "/random_scores.csv", std::ios::binary);
    out << "cell,score\n";
    for (size_t i = 0; i < scores.size(); ++i) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.9g", scores[i]);
      out << i << "," << buf << "\n";
    }
  }
  rec.final_cell = cfg.out_dir + "/cells/" + cell_file_name(static_cast<int>(best), false);
  rec.search_return = scores[best];
  rec.search_steps = rec.random_total_steps;

  // evaluate the winner at eval depths, like the supernet's final cell
  double heldout = 0;
  rec.eval = parallel_cell_eval(cfg, candidates[best], &heldout);
  rec.heldout_return = heldout;
  rec.heldout_episodes = cfg.heldout_episodes;
  rec.write(cfg.out_dir + "/record.json");
  return rec;
}

ExperimentRecord run_ablation(const RunConfig& cfg) {
  RunConfig mod = cfg;
  switch (cfg.ablation) {
    case AblationKind::UniformAlpha:
      mod.frozen_alpha = true;
      break;
    case AblationKind::NoReluSpace:
      mod.supernet.normal_opset = "classic_normal_norelu";
      break;
    case AblationKind::PureConv3x3:
    case AblationKind::PureConv5x5: {
      // controlled baseline comparison at eval depths; identical configs
      // except the kernel size
      ensure_dir(cfg.out_dir);
      ExperimentRecord rec = base_record(cfg);
      rec.ablation_kind = to_string(cfg.ablation);
      const int ksize = cfg.ablation == AblationKind::PureConv3x3 ? 3 : 5;
      std::vector<uint64_t> seeds;
      for (int s = 0; s < cfg.eval_seeds; ++s) seeds.push_back(derive_seed(cfg.seed, 0xb0 + s));
      std::vector<double> returns(seeds.size(), 0.0);
      std::vector<std::function<void()>> jobs;
      for (size_t i = 0; i < seeds.size(); ++i)
        jobs.push_back([&, i]() {
          NetworkBundle net = NetworkBundle::make_baseline(
              cfg.eval_depths, ksize, cfg.obs_shape(), cfg.supernet.feature_dim,
              derive_seed(seeds[i], 0x62617365));
          TrainOptions opt;
          opt.budget_steps = cfg.eval_budget_steps;
          opt.seed = seeds[i];
          returns[i] = train(cfg.algorithm, net, cfg.env_factory(), cfg.rl, opt).final_return;
        });
      run_parallel(jobs, cfg.workers);
      EvalResult ev;
      ev.per_seed = returns;
      double mean = 0;
      for (double v : returns) mean += v;
      ev.mean = mean / static_cast<double>(returns.size());
      double var = 0;
      for (double v : returns) var += (v - ev.mean) * (v - ev.mean);
      ev.stddev = std::sqrt(var / static_cast<double>(returns.size()));
      rec.eval = ev;
      rec.write(cfg.out_dir + "/record.json");
      return rec;
    }
  }
  ExperimentRecord rec = run_search(mod);
  rec.ablation_kind = to_string(cfg.ablation);
  rec.write(cfg.out_dir + "/record.json");
  return rec;
}

void run_discretize_file(const std::string& alpha_jsonl, int top_k, MergeMode merge,
                         long long step, const std::string& out_json,
                         const std::string& out_dot) {
  const auto snaps = read_snapshot_jsonl(alpha_jsonl);
  if (snaps.empty()) throw ConfigError("alpha log is empty: " + alpha_jsonl);
  const AlphaSnapshot* pick = &snaps.back();
  if (step >= 0) {
    pick = nullptr;
    for (const auto& s : snaps)
      if (s.step == step) pick = &s;
    if (!pick) throw ConfigError("no alpha snapshot at step " + std::to_string(step));
  }
  const CellChoice choice = discretize(*pick, top_k, merge);
  write_cell_json(choice.normal, out_json);
  if (!out_dot.empty()) write_cell_dot(choice.normal, out_dot, "cell");
  if (choice.reduction) {
    const auto stem = out_json.substr(0, out_json.rfind('.'));
    write_cell_json(*choice.reduction, stem + "_reduction.json");
    if (!out_dot.empty()) {
      const auto dstem = out_dot.substr(0, out_dot.rfind('.'));
      write_cell_dot(*choice.reduction, dstem + "_reduction.dot", "reduction");
    }
  }
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("pearson: need matched vectors");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  if (dx == 0 || dy == 0) throw UsageError("pearson: zero variance input");
  return num / std::sqrt(dx * dy);
}

CorrelationResult correlation_analysis(
    const std::vector<std::tuple<std::string, double, double, double>>& rows) {
  CorrelationResult out;
  for (const auto& [game, sup, cell, base] : rows) {
    if (base == 0) {
      out.excluded.push_back(game);
      continue;
    }
    out.points.push_back({game, sup / base, cell / base});
  }
  if (out.points.size() < 3)
    throw ConfigError("correlation analysis needs at least 3 games with nonzero baselines");
  std::vector<double> xs, ys;
  for (const auto& p : out.points) {
    xs.push_back(p.supernet_norm);
    ys.push_back(p.cell_norm);
  }
  out.pearson_r = pearson(xs, ys);
  return out;
}

CorrelationResult correlation_analysis_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ConfigError("cannot read " + csv_path);
  std::vector<std::tuple<std::string, double, double, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("game", 0) == 0) continue;
    std::stringstream ss(line);
    std::string game, a, b, c;
    if (!std::getline(ss, game, ',') || !std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
        !std::getline(ss, c, ','))
      throw ConfigError("scores CSV needs game,supernet,cell,baseline rows");
    rows.emplace_back(game, std::stod(a), std::stod(b), std::stod(c));
  }
  return correlation_analysis(rows);
}

double jacobian_covariance_score(const Eigen::MatrixXd& rows, double eps) {
  const Eigen::Index B = rows.rows();
  const Eigen::Index F = rows.cols();
  if (B < 2) throw UsageError("jacobian covariance needs at least 2 rows");
  Eigen::MatrixXd z = rows;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double mean = z.row(i).mean();
    z.row(i).array() -= mean;
    const double sd = std::sqrt(z.row(i).squaredNorm() / static_cast<double>(F));
    if (sd == 0) throw UsageError("jacobian covariance: zero-variance row");
    z.row(i) /= sd;
  }
  const Eigen::MatrixXd corr = z * z.transpose() / static_cast<double>(F);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(corr);
  if (es.info() != Eigen::Success) throw UsageError("eigendecomposition failed");
  double score = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double s = es.eigenvalues()[i] + eps;
    score -= std::log(s) + 1.0 / s;
  }
  return score;
}

Eigen::MatrixXd jacobian_probe_rows(EncoderBase<float>& encoder, ParameterStore<float>& store,
                                    const std::vector<std::vector<uint8_t>>& probe_obs,
                                    std::array<int, 3> obs_shape) {
  const int B = static_cast<int>(probe_obs.size());
  const long long per = static_cast<long long>(obs_shape[0]) * obs_shape[1] * obs_shape[2];
  Tensor<float> obs({B, obs_shape[0], obs_shape[1], obs_shape[2]});
  for (int i = 0; i < B; ++i)
    for (long long k = 0; k < per; ++k)
      obs.data[i * per + k] =
          static_cast<float>(probe_obs[static_cast<size_t>(i)][static_cast<size_t>(k)]) *
          (1.0f / 255.0f);
  Graph<float> g(&store);
  const int input = g.input(std::move(obs), /*needs_grad=*/true);
  // every op is per-sample, so d(sum_i f_i)/d(s_i) is row i's Jacobian
  const int loss = sum_all(g, encoder.forward(g, input));
  g.backward(loss);
  const Tensor<float> grad = g.grad_or_zero(input);
  Eigen::MatrixXd rows(B, per);
  for (int i = 0; i < B; ++i)
    for (long long k = 0; k < per; ++k)
      rows(i, k) = static_cast<double>(grad.data[i * per + k]);
  return rows;
}

std::vector<std::vector<uint8_t>> collect_probe_observations(Env& env, int batch,
                                                             uint64_t seed) {
  Rng rng = Rng(seed).derive(0x70726f62);
  std::vector<std::vector<uint8_t>> out;
  out.push_back(env.obs_bytes());
  while (static_cast<int>(out.size()) < batch) {
    if (env.done()) env.reset();
    env.step(rng.uniform_int(env.action_count()));
    out.push_back(env.obs_bytes());
  }
  return out;
}

std::vector<CellScore> cell_evolution_study(const std::string& record_path,
                                            const RunConfig& eval_cfg) {
  const ExperimentRecord rec = ExperimentRecord::read(record_path);
  if (rec.cells.empty()) throw ConfigError("record has no distinct cells: " + record_path);
  const std::string dir = std::filesystem::path(record_path).parent_path().string();
  std::vector<std::pair<long long, CellChoice>> chosen;
  for (size_t i = 0; i < rec.cells.size(); i += static_cast<size_t>(std::max(1, eval_cfg.every_k))) {
    const auto& [step, file] = rec.cells[i];
    std::string red;
    const std::string stem = file.substr(0, file.rfind(".json"));
    if (std::filesystem::exists(stem + "_reduction.json")) red = stem + "_reduction.json";
    chosen.emplace_back(step, read_cell_choice(file, red));
  }
  std::vector<CellScore> scores(chosen.size());
  std::vector<std::function<void()>> jobs;
  for (size_t i = 0; i < chosen.size(); ++i)
    jobs.push_back([&, i]() {
      RunConfig per = eval_cfg;
      per.workers = 1;  // parallelism handled at this level
      double heldout = 0;
      const EvalResult ev = parallel_cell_eval(per, chosen[i].second, &heldout);
      scores[i] = {chosen[i].first, ev.mean, ev.stddev};
    });
  run_parallel(jobs, eval_cfg.workers);
  std::ofstream out(dir + "/cell_evolution.csv", std::ios::binary);
  out << "step,mean_return,std_return\n";
  for (const auto& s : scores) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g", s.step, s.mean, s.stddev);
    out << buf << "\n";
  }
  return scores;
}

void emit_plots(const std::string& record_dir) {
  const ExperimentRecord rec = ExperimentRecord::read(record_dir + "/record.json");

  // training curve from the metrics CSV
  if (!rec.metrics_csv.empty() && std::filesystem::exists(rec.metrics_csv)) {
    std::ifstream in(rec.metrics_csv);
    std::string line;
    std::getline(in, line);  // header
    PlotSeries ret, ent;
    ret.label = "mean_return";
    ret.color = "#1f77b4";
    ent.label = "entropy";
    ent.color = "#d62728";
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string f;
      std::vector<double> vals;
      while (std::getline(ss, f, ',')) vals.push_back(std::stod(f));
      if (vals.size() < 8) continue;
      ret.points.emplace_back(vals[0], vals[2]);
      ent.points.emplace_back(vals[0], vals[6]);
    }
    write_line_chart(record_dir + "/training_curve.svg", "training", "env steps", "return",
                     {ret, ent});
  }

  // alpha trajectories: one line per (edge, op), colored by op
  if (!rec.alpha_log.empty() && std::filesystem::exists(rec.alpha_log)) {
    const auto snaps = read_snapshot_jsonl(rec.alpha_log);
    if (!snaps.empty()) {
      static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
      const auto& role0 = snaps.front().roles.front();
      const OpSet opset = builtin_opset(role0.opset);
      std::vector<PlotSeries> series;
      for (size_t e = 0; e < role0.edges.size(); ++e)
        for (int k = 0; k < opset.size(); ++k) {
          PlotSeries s;
          s.color = palette[static_cast<size_t>(k) % 8];
          if (e == 0) s.label = to_string(opset.ops[static_cast<size_t>(k)].name);
          for (const auto& snap : snaps)
            s.points.emplace_back(static_cast<double>(snap.step),
                                  snap.roles.front().edges[e].p[static_cast<size_t>(k)]);
          series.push_back(std::move(s));
        }
      write_line_chart(record_dir + "/alpha_trajectory.svg", "softmax op weights over all edges",
                       "env steps", "probability", series);
    }
  }

  // cell evolution bar chart, when the study has been run
  if (std::filesystem::exists(record_dir + "/cell_evolution.csv")) {
    std::ifstream in(record_dir + "/cell_evolution.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> labels;
    std::vector<double> means, errs;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string a, b, c;
      std::getline(ss, a, ',');
      std::getline(ss, b, ',');
      std::getline(ss, c, ',');
      labels.push_back(a);
      means.push_back(std::stod(b));
      errs.push_back(std::stod(c));
    }
    write_bar_chart(record_dir + "/cell_evolution.svg", "discrete cells over the alpha trajectory",
                    labels, means, errs);
  }
}

}  // namespace rldarts
