#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "rldarts/config.hpp"

namespace rldarts {

// On-disk summary of one experiment; everything needed to reproduce or
// analyze the run. Stored as record.json next to the run artifacts.
struct ExperimentRecord {
  std::string phase;
  std::string config_hash;
  std::string config_text;
  std::string status = "ok";  // ok | failed
  std::string failure;
  std::string metrics_csv;
  std::string alpha_log;
  std::vector<std::pair<long long, std::string>> cells;  // (step, json path)
  std::string final_cell;
  double search_return = 0;
  long long search_steps = 0;
  // evaluation of the final cell (or the provided cell in eval mode)
  std::optional<EvalResult> eval;
  std::vector<int> eval_depths;
  long long eval_budget = 0;
  // random-search bookkeeping
  int random_cells = 0;
  long long random_total_steps = 0;
  long long budget_parity_target = 0;
  std::string ablation_kind;
  double heldout_return = 0;
  int heldout_episodes = 0;

  void write(const std::string& path) const;
  static ExperimentRecord read(const std::string& path);
};

// Algorithm-1 pipeline: supernet search, discretization of the final alpha,
// then fresh-weight evaluation of the final cell at eval depths. Artifacts
// land under cfg.out_dir. A NaN abort is recorded as a failed record and
// rethrown for the CLI to map to exit code 2.
ExperimentRecord run_pipeline(const RunConfig& cfg);

// search phase only (also used by ablations)
ExperimentRecord run_search(const RunConfig& cfg);

// evaluation of a provided cell.json, skipping phases 1-2
ExperimentRecord run_eval_only(const RunConfig& cfg);

// budget-parity random search: cells x per-cell budget = search budget x
// cost ratio; the winner is then evaluated at eval depths
ExperimentRecord run_random_search(const RunConfig& cfg);

ExperimentRecord run_ablation(const RunConfig& cfg);

// offline discretization of an alpha snapshot log
void run_discretize_file(const std::string& alpha_jsonl, int top_k, MergeMode merge,
                         long long step, const std::string& out_json,
                         const std::string& out_dot);

struct CorrelationPoint {
  std::string game;
  double supernet_norm = 0;  // supernet / baseline
  double cell_norm = 0;      // discrete cell / baseline
};

struct CorrelationResult {
  std::vector<CorrelationPoint> points;
  std::vector<std::string> excluded;  // games dropped for a zero baseline
  double pearson_r = 0;
};

// rows: (game, supernet score, discrete-cell score, baseline score)
CorrelationResult correlation_analysis(
    const std::vector<std::tuple<std::string, double, double, double>>& rows);
CorrelationResult correlation_analysis_csv(const std::string& csv_path);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Training-free architecture score from the eigenvalues of the correlation
// matrix of per-input encoder Jacobian rows:
//   -sum_i [ log(sigma_i + eps) + 1 / (sigma_i + eps) ].
double jacobian_covariance_score(const Eigen::MatrixXd& rows, double eps = 1e-5);

// rows of d(sum features)/d(input) for a probe batch collected from a
// random-policy rollout (or a checkpointed policy via cfg.probe_source)
Eigen::MatrixXd jacobian_probe_rows(EncoderBase<float>& encoder, ParameterStore<float>& store,
                                    const std::vector<std::vector<uint8_t>>& probe_obs,
                                    std::array<int, 3> obs_shape);
std::vector<std::vector<uint8_t>> collect_probe_observations(Env& env, int batch, uint64_t seed);

struct CellScore {
  long long step = 0;
  double mean = 0;
  double stddev = 0;
};

// trains every distinct cell of a search record from scratch (optionally
// every k-th) and reports scores in discovery order
std::vector<CellScore> cell_evolution_study(const std::string& record_path,
                                            const RunConfig& eval_cfg);

// alpha-trajectory, training-curve, and cell-evolution SVG plots for a record
void emit_plots(const std::string& record_dir);

void ensure_dir(const std::string& path);

}  // namespace rldarts
