#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rldarts/cell_io.hpp"
#include "rldarts/harness.hpp"

using namespace rldarts;
namespace fs = std::filesystem;

namespace {

std::string tiny_config(const std::string& out_dir, const std::string& extra = "") {
  return std::string("[run]\n") +
         "phase = search\n"
         "algorithm = ppo\n"
         "game = chase\n"
         "level_mode = infinite\n"
         "seed = 5\n"
         "budget_steps = 128\n"
         "eval_budget_steps = 96\n"
         "eval_seeds = 2\n"
         "workers = 2\n"
         "snapshot_every = 2\n"
         "out_dir = " +
         out_dir +
         "\n"
         "[supernet]\n"
         "opset = micro\n"
         "N = 1\n"
         "R = 0\n"
         "I = 2\n"
         "D = 1\n"
         "K = 2\n"
         "depths = 4\n"
         "eval_depths = 4\n"
         "temperature = 0.2\n"
         "feature_dim = 16\n"
         "[ppo]\n"
         "rollout_len = 16\n"
         "n_envs = 2\n"
         "minibatch = 16\n"
         "lr = 0.001\n" +
         extra;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void wipe(const std::string& dir) { fs::remove_all(dir); }

}  // namespace

TEST_CASE("config parsing, canonical form, and hashing") {
  const auto cfg = ConfigFile::parse("[run]\nseed = 9\n# comment\nbudget_steps=5\n");
  CHECK(cfg.get_int("run", "seed", 0) == 9);
  CHECK(cfg.get_ll("run", "budget_steps", 0) == 5);
  // canonical text is sorted and stable, so the hash is recomputable
  const auto cfg2 = ConfigFile::parse("[run]\nbudget_steps = 5\nseed=9\n");
  CHECK(cfg.canonical() == cfg2.canonical());
  CHECK(cfg.hash_hex() == cfg2.hash_hex());

  CHECK_THROWS_AS(ConfigFile::parse("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("[run]\nnot_a_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("[run]\nseed\n"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("seed = 1\n"), ConfigError);

  // search depths must not exceed eval depths
  CHECK_THROWS_AS(RunConfig::from_config(ConfigFile::parse(
                      "[supernet]\ndepths = 16\neval_depths = 8\nD = 1\n")),
                  ConfigError);
  // typed getters validate
  CHECK_THROWS_AS(ConfigFile::parse("[run]\nseed = abc\n").get_int("run", "seed", 0),
                  ConfigError);

  const RunConfig rc = RunConfig::from_config(ConfigFile::parse(tiny_config("/tmp/x")));
  CHECK(rc.supernet.depths == std::vector<int>{4});
  CHECK(rc.rl.ppo.minibatch == 16);
  CHECK(rc.raw.hash_hex().size() == 16);
}

TEST_CASE("pipeline produces a reproducible record") {
  const std::string dir = "/tmp/rldarts_pipe";
  wipe(dir);
  const RunConfig cfg = RunConfig::from_config(ConfigFile::parse(tiny_config(dir)));
  const ExperimentRecord rec = run_pipeline(cfg);
  CHECK(rec.status == "ok");
  CHECK(rec.cells.size() >= 1);
  REQUIRE(rec.eval.has_value());
  CHECK(rec.eval->per_seed.size() == 2);
  CHECK(fs::exists(dir + "/metrics.csv"));
  CHECK(fs::exists(dir + "/alpha_log.jsonl"));
  CHECK(fs::exists(dir + "/record.json"));
  CHECK(fs::exists(rec.final_cell));
  CHECK(fs::exists(dir + "/checkpoint.bin"));

  // config hash in the record is recomputable from the stored config text
  CHECK(ConfigFile::parse(rec.config_text).hash_hex() == rec.config_hash);

  // the stored distinct-cell sequence equals offline discretization of the
  // stored alpha log (no drift between online and offline paths)
  const auto snaps = read_snapshot_jsonl(dir + "/alpha_log.jsonl");
  const auto seq = distinct_cell_sequence(snaps, cfg.supernet.top_k, cfg.supernet.merge);
  REQUIRE(seq.size() == rec.cells.size());
  for (size_t i = 0; i < seq.size(); ++i) {
    CHECK(seq[i].first == rec.cells[i].first);
    CHECK(read_cell_json(rec.cells[i].second) == seq[i].second.normal);
  }

  // byte-identical rerun from the same config hash
  const std::string metrics_a = slurp(dir + "/metrics.csv");
  const std::string alpha_a = slurp(dir + "/alpha_log.jsonl");
  const auto eval_a = rec.eval->per_seed;
  wipe(dir);
  const ExperimentRecord rec2 = run_pipeline(cfg);
  CHECK(slurp(dir + "/metrics.csv") == metrics_a);
  CHECK(slurp(dir + "/alpha_log.jsonl") == alpha_a);
  CHECK(rec2.eval->per_seed == eval_a);
  CHECK(rec2.config_hash == rec.config_hash);

  // record round trip
  const ExperimentRecord back = ExperimentRecord::read(dir + "/record.json");
  CHECK(back.config_hash == rec.config_hash);
  CHECK(back.cells.size() == rec.cells.size());
  CHECK(back.eval->per_seed == rec.eval->per_seed);
  wipe(dir);
}

TEST_CASE("eval-only mode skips search") {
  const std::string dir = "/tmp/rldarts_evalonly";
  wipe(dir);
  ensure_dir(dir);
  // hand-written cell
  DiscreteCell cell;
  cell.nodes = {{{0, OpName::Conv3x3}}, {{0, OpName::Skip}, {1, OpName::ReLU}}};
  write_cell_json(cell, dir + "/cell.json");
  ConfigFile file = ConfigFile::parse(tiny_config(dir));
  file.set("run", "phase", "eval");
  file.set("eval", "cell", dir + "/cell.json");
  const RunConfig cfg = RunConfig::from_config(std::move(file));
  const ExperimentRecord rec = run_eval_only(cfg);
  CHECK(rec.search_steps == 0);
  REQUIRE(rec.eval.has_value());
  CHECK(rec.eval->per_seed.size() == 2);
  wipe(dir);
}

TEST_CASE("random search record enforces budget parity") {
  const std::string dir = "/tmp/rldarts_rs";
  wipe(dir);
  ConfigFile file = ConfigFile::parse(tiny_config(dir));
  file.set("run", "phase", "random-search");
  file.set("run", "budget_steps", "64");
  file.set("run", "cost_ratio", "3");
  const RunConfig cfg = RunConfig::from_config(std::move(file));
  const ExperimentRecord rec = run_random_search(cfg);
  CHECK(rec.random_cells == 3);
  CHECK(rec.budget_parity_target == 64 * 3);
  CHECK(rec.random_total_steps == 64 * 3);
  CHECK(rec.cells.size() == 3);
  CHECK(fs::exists(dir + "/random_scores.csv"));
  REQUIRE(rec.eval.has_value());
  wipe(dir);
}

TEST_CASE("uniform-alpha ablation freezes alpha for the whole run") {
  const std::string dir = "/tmp/rldarts_ablate";
  wipe(dir);
  ConfigFile file = ConfigFile::parse(tiny_config(dir));
  file.set("run", "phase", "ablate");
  file.set("ablate", "kind", "uniform_alpha");
  const ExperimentRecord rec = run_ablation(RunConfig::from_config(std::move(file)));
  CHECK(rec.ablation_kind == "uniform_alpha");
  for (const auto& snap : read_snapshot_jsonl(dir + "/alpha_log.jsonl"))
    for (const auto& e : snap.roles[0].edges)
      for (double p : e.p) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
  wipe(dir);
}

TEST_CASE("norelu ablation swaps the op set") {
  const std::string dir = "/tmp/rldarts_ablate2";
  wipe(dir);
  ConfigFile file = ConfigFile::parse(tiny_config(dir));
  file.set("run", "phase", "ablate");
  file.set("run", "budget_steps", "64");
  file.set("ablate", "kind", "norelu_space");
  const ExperimentRecord rec = run_ablation(RunConfig::from_config(std::move(file)));
  const auto snaps = read_snapshot_jsonl(dir + "/alpha_log.jsonl");
  REQUIRE_FALSE(snaps.empty());
  CHECK(snaps[0].roles[0].opset == "classic_normal_norelu");
  CHECK(rec.ablation_kind == "norelu_space");
  wipe(dir);
}

TEST_CASE("offline discretize of an alpha log") {
  const std::string dir = "/tmp/rldarts_disc";
  wipe(dir);
  const RunConfig cfg =
      RunConfig::from_config(ConfigFile::parse(tiny_config(dir)));
  run_search(cfg);
  run_discretize_file(dir + "/alpha_log.jsonl", 2, MergeMode::ConcatConv1x1, -1,
                      dir + "/offline.json", dir + "/offline.dot");
  const auto offline = read_cell_json(dir + "/offline.json");
  const auto final_cell = read_cell_json(dir + "/cells/final.json");
  CHECK(offline == final_cell);
  CHECK(slurp(dir + "/offline.dot").rfind("digraph", 0) == 0);
  CHECK_THROWS_AS(run_discretize_file(dir + "/alpha_log.jsonl", 2, MergeMode::ConcatConv1x1,
                                      999999, dir + "/x.json", ""),
                  ConfigError);
  wipe(dir);
}

TEST_CASE("pearson and correlation analysis") {
  CHECK(pearson({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  // hand-computed 4-point value
  CHECK(pearson({1, 2, 3, 5}, {2, 1, 4, 6}) ==
        doctest::Approx(0.9022436386781062).epsilon(1e-12));
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UsageError);

  const auto res = correlation_analysis({
      {"a", 2.0, 1.0, 2.0},
      {"b", 4.0, 2.0, 2.0},
      {"c", 6.0, 3.0, 2.0},
      {"dead", 5.0, 5.0, 0.0},  // zero baseline excluded with a warning
  });
  CHECK(res.excluded == std::vector<std::string>{"dead"});
  REQUIRE(res.points.size() == 3);
  CHECK(res.points[0].supernet_norm == doctest::Approx(1.0));
  CHECK(res.points[1].cell_norm == doctest::Approx(1.0));
  CHECK(res.pearson_r == doctest::Approx(1.0));

  CHECK_THROWS_AS(correlation_analysis({{"a", 1, 1, 1}, {"b", 2, 2, 1}}), ConfigError);
}

TEST_CASE("jacobian covariance score") {
  // Sylvester-Hadamard rows (excluding the all-ones row) are zero-mean and
  // exactly orthogonal: the correlation matrix is the identity
  const int B = 8, F = 16;
  Eigen::MatrixXd rows(B, F);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < F; ++j)
      rows(i, j) = __builtin_parity(static_cast<unsigned>((i + 1) & j)) ? -1.0 : 1.0;
  const double eps = 1e-5;
  const double expected = -B * (std::log(1 + eps) + 1.0 / (1 + eps));
  CHECK(jacobian_covariance_score(rows) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(std::fabs(jacobian_covariance_score(rows) - (-8.0)) < 1e-6);

  // scaling all rows leaves the correlation (and the score) unchanged
  CHECK(jacobian_covariance_score(10.0 * rows) ==
        doctest::Approx(jacobian_covariance_score(rows)).epsilon(1e-12));

  // two identical rows: eigenvalues (2, 0), 1/eps dominates
  Eigen::MatrixXd same(2, 6);
  same << 1, 2, 3, 4, 5, 6, 1, 2, 3, 4, 5, 6;
  const double got = jacobian_covariance_score(same);
  const double want = -(std::log(2 + eps) + 1.0 / (2 + eps) + std::log(eps) + 1.0 / eps);
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
  CHECK(got < -90000.0);

  Eigen::MatrixXd flat(2, 4);
  flat << 1, 1, 1, 1, 1, 2, 3, 4;
  CHECK_THROWS_AS(jacobian_covariance_score(flat), UsageError);
  CHECK_THROWS_AS(jacobian_covariance_score(Eigen::MatrixXd::Random(1, 4)), UsageError);
}

TEST_CASE("jacobian probe rows from a real encoder") {
  auto net = NetworkBundle::make_baseline({4}, 3, {24, 24, 3}, 16, 3);
  auto env = make_env("chase", LevelMode::infinite(), 7);
  const auto probe = collect_probe_observations(*env, 8, 11);
  CHECK(probe.size() == 8);
  const auto rows = jacobian_probe_rows(*net.encoder, net.store, probe, {24, 24, 3});
  CHECK(rows.rows() == 8);
  CHECK(rows.cols() == 24 * 24 * 3);
  CHECK(rows.cwiseAbs().maxCoeff() > 0.0);
  const double score = jacobian_covariance_score(rows);
  CHECK(std::isfinite(score));
}

TEST_CASE("cell evolution study and plots") {
  const std::string dir = "/tmp/rldarts_evo";
  wipe(dir);
  ConfigFile file = ConfigFile::parse(tiny_config(dir));
  file.set("run", "eval_seeds", "1");
  file.set("run", "eval_budget_steps", "64");
  RunConfig cfg = RunConfig::from_config(std::move(file));
  run_search(cfg);
  cfg.analyze_record = dir + "/record.json";
  const auto scores = cell_evolution_study(cfg.analyze_record, cfg);
  REQUIRE_FALSE(scores.empty());
  // ordering matches discovery steps
  for (size_t i = 1; i < scores.size(); ++i) CHECK(scores[i].step > scores[i - 1].step);
  CHECK(fs::exists(dir + "/cell_evolution.csv"));

  emit_plots(dir);
  for (const char* f : {"/training_curve.svg", "/alpha_trajectory.svg", "/cell_evolution.svg"}) {
    const std::string svg = slurp(dir + f);
    CHECK(svg.rfind("<?xml", 0) == 0);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.rfind("</svg>\n") == svg.size() - 7);
  }
  // plot regeneration is deterministic
  const std::string first = slurp(dir + "/alpha_trajectory.svg");
  emit_plots(dir);
  CHECK(slurp(dir + "/alpha_trajectory.svg") == first);
  wipe(dir);
}
