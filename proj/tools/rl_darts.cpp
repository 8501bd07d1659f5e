#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "rldarts/cell_io.hpp"
#include "rldarts/harness.hpp"

using namespace rldarts;

namespace {

RunConfig load_config(const std::string& path, long long seed_override,
                      const std::string& out_override, Phase expected) {
  ConfigFile file = ConfigFile::parse_file(path);
  file.set("run", "phase", to_string(expected));
  if (seed_override >= 0) file.set("run", "seed", std::to_string(seed_override));
  if (!out_override.empty()) file.set("run", "out_dir", out_override);
  return RunConfig::from_config(std::move(file));
}

void maybe_dump_frames(const RunConfig& cfg) {
  if (cfg.dump_frames.empty()) return;
  ensure_dir(cfg.dump_frames);
  auto env = cfg.env_factory()(derive_seed(cfg.seed, 0xf8a3e));
  Rng rng(cfg.seed);
  for (int t = 0; t < 64; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.ppm", t);
    write_ppm(*env, cfg.dump_frames + "/" + name);
    if (env->done()) env->reset();
    else env->step(rng.uniform_int(env->action_count()));
  }
}

void print_record_summary(const ExperimentRecord& rec) {
  std::printf("phase: %s  status: %s  config: %s\n", rec.phase.c_str(), rec.status.c_str(),
              rec.config_hash.c_str());
  if (rec.search_steps > 0)
    std::printf("search: %lld steps, final return %.4f, %zu distinct cells\n", rec.search_steps,
                rec.search_return, rec.cells.size());
  if (rec.eval)
    std::printf("eval: mean %.4f +- %.4f over %zu seeds\n", rec.eval->mean, rec.eval->stddev,
                rec.eval->per_seed.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable architecture search inside RL training loops"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  long long seed_override = -1;

  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    sub->add_option("--config", config_path, "run configuration file")
        ->required(config_required);
    sub->add_option("--seed", seed_override, "override run.seed");
    sub->add_option("--out", out_override, "override run.out_dir");
  };

  auto* search = app.add_subcommand("search", "train the supernet and log alpha");
  add_common(search);

  auto* disc = app.add_subcommand("discretize", "argmax + top-K pruning of an alpha log");
  std::string alpha_path, cell_out = "cell.json", dot_out, merge_str = "concat_conv1x1";
  int topk = 2;
  long long disc_step = -1;
  disc->add_option("--alpha", alpha_path, "alpha_log.jsonl from a search run")->required();
  disc->add_option("--topk", topk, "edges kept per node");
  disc->add_option("--out", cell_out, "output cell JSON");
  disc->add_option("--dot", dot_out, "optional DOT output");
  disc->add_option("--merge", merge_str, "concat_conv1x1 | last_node");
  disc->add_option("--step", disc_step, "snapshot step (default: last)");

  auto* eval = app.add_subcommand("eval", "train a discrete cell from scratch");
  std::string eval_cell;
  add_common(eval);
  eval->add_option("--cell", eval_cell, "cell JSON (overrides eval.cell)");

  auto* rs = app.add_subcommand("random-search", "budget-matched random cell search");
  add_common(rs);

  auto* ablate = app.add_subcommand("ablate", "uniform-alpha / no-ReLU / pure-conv runs");
  std::string ablate_kind;
  add_common(ablate);
  ablate->add_option("--kind", ablate_kind, "override ablate.kind");

  auto* enumerate = app.add_subcommand("enumerate-space", "count (and list) discrete cells");
  std::string enum_opset = "micro";
  int enum_nodes = 4, enum_topk = 2;
  bool enum_list = false;
  enumerate->add_option("--opset", enum_opset, "op set name");
  enumerate->add_option("--nodes", enum_nodes, "intermediate nodes I");
  enumerate->add_option("--topk", enum_topk, "edges kept per node K");
  enumerate->add_flag("--list", enum_list, "emit every cell as a JSON line");

  auto* analyze = app.add_subcommand("analyze", "correlation / jacobian / cell evolution");
  add_common(analyze);

  auto* plot = app.add_subcommand("plot", "emit SVG plots for a run directory");
  std::string record_dir;
  plot->add_option("--record", record_dir, "run directory containing record.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*search) {
      const RunConfig cfg = load_config(config_path, seed_override, out_override, Phase::Search);
      maybe_dump_frames(cfg);
      print_record_summary(run_pipeline(cfg));
    } else if (*disc) {
      run_discretize_file(alpha_path, topk, merge_from_string(merge_str), disc_step, cell_out,
                          dot_out);
      std::printf("wrote %s\n", cell_out.c_str());
    } else if (*eval) {
      ConfigFile file = ConfigFile::parse_file(config_path);
      file.set("run", "phase", to_string(Phase::Eval));
      if (seed_override >= 0) file.set("run", "seed", std::to_string(seed_override));
      if (!out_override.empty()) file.set("run", "out_dir", out_override);
      if (!eval_cell.empty()) file.set("eval", "cell", eval_cell);
      const RunConfig cfg = RunConfig::from_config(std::move(file));
      maybe_dump_frames(cfg);
      print_record_summary(run_eval_only(cfg));
    } else if (*rs) {
      const RunConfig cfg =
          load_config(config_path, seed_override, out_override, Phase::RandomSearch);
      print_record_summary(run_random_search(cfg));
    } else if (*ablate) {
      ConfigFile file = ConfigFile::parse_file(config_path);
      file.set("run", "phase", to_string(Phase::Ablate));
      if (seed_override >= 0) file.set("run", "seed", std::to_string(seed_override));
      if (!out_override.empty()) file.set("run", "out_dir", out_override);
      if (!ablate_kind.empty()) file.set("ablate", "kind", ablate_kind);
      print_record_summary(run_ablation(RunConfig::from_config(std::move(file))));
    } else if (*enumerate) {
      const OpSet opset = builtin_opset(enum_opset);
      const CellTopology topo{enum_nodes, enum_topk};
      const uint64_t size = search_space_size(opset.nonzero_count(), enum_nodes, enum_topk);
      std::printf("opset=%s O_nz=%d I=%d K=%d size=%llu\n", enum_opset.c_str(),
                  opset.nonzero_count(), enum_nodes, enum_topk,
                  static_cast<unsigned long long>(size));
      if (enum_list)
        for (const auto& cell : enumerate_cells(opset, topo))
          std::printf("%s\n", cell_to_json(cell, -1).c_str());
    } else if (*analyze) {
      const RunConfig cfg = load_config(config_path, seed_override, out_override, Phase::Analyze);
      ensure_dir(cfg.out_dir);
      if (cfg.analyze_mode == "correlation") {
        const auto res = correlation_analysis_csv(cfg.analyze_scores_csv);
        for (const auto& w : res.excluded)
          std::fprintf(stderr, "warning: excluded %s (zero baseline)\n", w.c_str());
        for (const auto& p : res.points)
          std::printf("%s supernet/baseline=%.4f cell/baseline=%.4f\n", p.game.c_str(),
                      p.supernet_norm, p.cell_norm);
        std::printf("pearson_r=%.6f\n", res.pearson_r);
      } else if (cfg.analyze_mode == "jacobian") {
        NetworkBundle net =
            cfg.eval_cell_file.empty()
                ? NetworkBundle::make_baseline(cfg.eval_depths, 3, cfg.obs_shape(),
                                               cfg.supernet.feature_dim,
                                               derive_seed(cfg.seed, 0x6a61))
                : NetworkBundle::make_discrete(
                      cfg.eval_supernet_config(),
                      CellChoice{read_cell_json(cfg.eval_cell_file), std::nullopt},
                      cfg.obs_shape(), derive_seed(cfg.seed, 0x6a61));
        if (cfg.probe_source != "random_policy")
          load_checkpoint(net.store, cfg.probe_source);
        auto env = cfg.env_factory()(derive_seed(cfg.seed, 0x70726f));
        const auto probe = collect_probe_observations(*env, cfg.probe_batch, cfg.seed);
        const auto rows = jacobian_probe_rows(*net.encoder, net.store, probe, cfg.obs_shape());
        std::printf("jacobian_covariance_score=%.6f (B=%d)\n",
                    jacobian_covariance_score(rows), cfg.probe_batch);
      } else if (cfg.analyze_mode == "cell_evolution") {
        const auto scores = cell_evolution_study(cfg.analyze_record, cfg);
        for (const auto& s : scores)
          std::printf("step=%lld mean=%.4f std=%.4f\n", s.step, s.mean, s.stddev);
      } else {
        throw ConfigError("unknown analyze.mode: " + cfg.analyze_mode);
      }
    } else if (*plot) {
      emit_plots(record_dir);
      std::printf("plots written to %s\n", record_dir.c_str());
    }
  } catch (const NanAbortError& e) {
    std::fprintf(stderr, "aborted: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
