// Acceptance suite: exact formula checks, oracle equivalences, and the
// desk-scale end-to-end search. Prints one pass/fail line per criterion and
// exits with the number of failures.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "rldarts/cell_io.hpp"
#include "rldarts/gradcheck.hpp"
#include "rldarts/harness.hpp"

using namespace rldarts;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;
bool g_current_ok = true;
std::vector<std::string> g_notes;

void expect(bool ok, const std::string& what) {
  if (!ok) {
    g_current_ok = false;
    g_notes.push_back(what);
  }
}

template <typename Fn>
void criterion(int index, const std::string& name, Fn&& fn) {
  g_current_ok = true;
  g_notes.clear();
  const auto t0 = clk::now();
  try {
    fn();
  } catch (const std::exception& e) {
    g_current_ok = false;
    g_notes.push_back(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(clk::now() - t0).count();
  std::printf("[%s] %d. %s (%.1fs)\n", g_current_ok ? "PASS" : "FAIL", index, name.c_str(),
              secs);
  for (const auto& n : g_notes) std::printf("       - %s\n", n.c_str());
  std::fflush(stdout);
  if (!g_current_ok) ++g_failures;
}

void run_parallel_jobs(std::vector<std::function<void()>>& jobs, int workers) {
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < std::min<int>(workers, static_cast<int>(jobs.size())); ++i)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

int env_workers() {
  if (const char* w = std::getenv("RLDARTS_ACCEPT_WORKERS")) return std::max(1, std::atoi(w));
  return std::max(1u, std::thread::hardware_concurrency());
}

Tensor<double> gaussian(Rng& rng, std::vector<int> shape, double scale = 0.5) {
  Tensor<double> t(std::move(shape));
  for (long long i = 0; i < t.size(); ++i) t.data[i] = scale * rng.normal();
  return t;
}

Tensor<double> distinct_random(Rng& rng, std::vector<int> shape) {
  Tensor<double> t(std::move(shape));
  const long long n = t.size();
  const double step = 3.0 / static_cast<double>(n);
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (long long i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)],
              perm[static_cast<size_t>(rng.uniform_int(static_cast<int>(i) + 1))]);
  for (long long i = 0; i < n; ++i)
    t.data[i] = -1.5 + (perm[static_cast<size_t>(i)] + 0.25) * step;
  return t;
}

OpSet synthetic_opset(int nonzero) {
  static const OpName pool[] = {OpName::Skip, OpName::Conv3x3, OpName::ReLU, OpName::Tanh,
                                OpName::MaxPool3x3};
  OpSet s;
  s.name = "synthetic";
  s.ops.push_back(make_op(OpName::Zero));
  for (int i = 0; i < nonzero; ++i) s.ops.push_back(make_op(pool[i]));
  return s;
}

// ---------------------------------------------------------------------------

void criterion1() {
  expect(search_space_size(4, 4, 2) == 294912ULL, "Micro size must be 294912");
  expect(search_space_size(5, 4, 2) == 1406250ULL, "Classic normal size must be 1406250");
  expect(search_space_size(5, 4, 2) * search_space_size(4, 4, 2) == 414720000000ULL,
         "Classic product must be 414720000000");
  long long enumerated_spaces = 0;
  for (int onz = 1; onz <= 5; ++onz)
    for (int I = 1; I <= 4; ++I)
      for (int K = 1; K <= 2; ++K) {
        const uint64_t size = search_space_size(onz, I, K);
        if (size > 1000000ULL) continue;
        const auto cells = enumerate_cells(synthetic_opset(onz), CellTopology{I, K});
        if (cells.size() != size) {
          expect(false, "enumeration mismatch at O_nz=" + std::to_string(onz) +
                            " I=" + std::to_string(I) + " K=" + std::to_string(K));
          return;
        }
        ++enumerated_spaces;
      }
  expect(enumerated_spaces >= 30, "expected to brute-force at least 30 spaces");
}

void criterion2() {
  struct Case {
    const char* name;
    std::function<std::vector<int>(ParameterStore<double>&, Rng&)> setup;
    std::function<int(Graph<double>&, const std::vector<int>&)> build;
  };
  const std::vector<Case> cases = {
      {"conv2d_s1d1",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("x", gaussian(r, {2, 4, 5, 2})),
                                 s.add("k", gaussian(r, {3, 3, 2, 2}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, activation(g, conv2d(g, g.param(p[0]), g.param(p[1]), 1, 1),
                                      Act::TanhAct));
       }},
      {"conv2d_s2d2",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("x", gaussian(r, {1, 6, 6, 2})),
                                 s.add("k", gaussian(r, {3, 3, 2, 2}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, activation(g, conv2d(g, g.param(p[0]), g.param(p[1]), 2, 2),
                                      Act::TanhAct));
       }},
      {"maxpool",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("x", distinct_random(r, {1, 5, 5, 2}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, activation(g, pool2d(g, g.param(p[0]), PoolKind::Max, 1),
                                      Act::TanhAct));
       }},
      {"avgpool_s2",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("x", gaussian(r, {2, 5, 5, 2}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, activation(g, pool2d(g, g.param(p[0]), PoolKind::Avg, 2),
                                      Act::TanhAct));
       }},
      {"affine_bias",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("x", gaussian(r, {3, 4})), s.add("w", gaussian(r, {4, 2})),
                                 s.add("b", gaussian(r, {2}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, activation(g, affine(g, g.param(p[0]), g.param(p[1]), g.param(p[2])),
                                      Act::TanhAct));
       }},
      {"relu",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("x", distinct_random(r, {4, 6}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, activation(g, g.param(p[0]), Act::Relu));
       }},
      {"softmax_vec",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("l", gaussian(r, {5}, 1.5))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, mul_const(g, softmax_vec(g, g.param(p[0]), 0.7),
                                     Tensor<double>::from({5}, {1, 2, 3, 4, 5})));
       }},
      {"mixed_edge_weighted_sum",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("l", gaussian(r, {3})), s.add("x", gaussian(r, {2, 6})),
                                 s.add("y", gaussian(r, {2, 6}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         const int sm = softmax_vec(g, g.param(p[0]), 0.5);
         const int out = weighted_sum(g, {{index_scalar(g, sm, 0), g.param(p[1])},
                                          {index_scalar(g, sm, 2), g.param(p[2])}});
         return sum_all(g, activation(g, out, Act::TanhAct));
       }},
      {"structure_concat_subsample",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("a", gaussian(r, {1, 4, 4, 2})),
                                 s.add("b", gaussian(r, {1, 4, 4, 1}))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         const int cat = concat_channels(g, {g.param(p[0]), g.param(p[1])});
         return sum_all(g, activation(g, reshape(g, subsample2(g, cat), {1, 12}), Act::TanhAct));
       }},
      {"log_softmax_gather",
       [](ParameterStore<double>& s, Rng& r) {
         return std::vector<int>{s.add("l", gaussian(r, {3, 4}, 1.5))};
       },
       [](Graph<double>& g, const std::vector<int>& p) {
         return sum_all(g, gather_rows(g, log_softmax_rows(g, g.param(p[0])), {1, 0, 3}));
       }},
  };
  for (const auto& c : cases) {
    for (int rep = 0; rep < 20; ++rep) {
      ParameterStore<double> store;
      Rng rng(9000 + rep);
      const auto pids = c.setup(store, rng);
      for (int pid : pids) {
        const double err = grad_check(store, pid, [&](Graph<double>& g) { return c.build(g, pids); });
        if (err >= 1e-4) {
          expect(false, std::string(c.name) + " rep " + std::to_string(rep) +
                            " rel err " + std::to_string(err));
          return;
        }
      }
    }
  }

  // PPO loss over a tiny tanh encoder
  for (int rep = 0; rep < 20; ++rep) {
    ParameterStore<double> store;
    Rng rng(9500 + rep);
    const int x = store.add("x", gaussian(rng, {4, 3}));
    const int w = store.add("W", gaussian(rng, {3, 5}));
    const int b = store.add("b", gaussian(rng, {5}, 0.1));
    const int wv = store.add("Wv", gaussian(rng, {3, 1}));
    const int bv = store.add("bv", gaussian(rng, {1}, 0.1));
    PpoBatch<double> batch;
    batch.actions = {1, 0, 4, 2};
    batch.logp_old = Tensor<double>({4});
    for (int i = 0; i < 4; ++i) batch.logp_old.data[i] = std::log(0.2) + 0.05 * rng.normal();
    batch.advantages = gaussian(rng, {4}, 1.0);
    batch.returns = gaussian(rng, {4}, 1.0);
    auto build = [&](Graph<double>& g) {
      const int feat = activation(g, g.param(x), Act::TanhAct);
      const int logits = affine(g, feat, g.param(w), g.param(b));
      const int ls = log_softmax_rows(g, logits);
      for (int i = 0; i < 4; ++i) {
        const double ratio = std::exp(
            g.val(ls).data[i * 5 + batch.actions[static_cast<size_t>(i)]] -
            batch.logp_old.data[i]);
        if (std::fabs(ratio - 0.8) < 1e-3 || std::fabs(ratio - 1.2) < 1e-3)
          batch.logp_old.data[i] += 5e-3;
      }
      const int values = reshape(g, affine(g, feat, g.param(wv), g.param(bv)), {4});
      return ppo_loss(g, logits, values, batch, 0.2, 0.5, 0.01).total;
    };
    for (int pid : {x, w, b, wv, bv}) {
      const double err = grad_check(store, pid, build);
      if (err >= 1e-4) {
        expect(false, "ppo_loss rep " + std::to_string(rep) + " rel err " + std::to_string(err));
        return;
      }
    }
  }

  // dueling DQN loss
  for (int rep = 0; rep < 20; ++rep) {
    ParameterStore<double> store;
    Rng rng(9700 + rep);
    const int x = store.add("x", gaussian(rng, {4, 3}));
    const int wv = store.add("Wv", gaussian(rng, {3, 1}));
    const int bv = store.add("bv", gaussian(rng, {1}, 0.1));
    const int wa = store.add("Wa", gaussian(rng, {3, 4}));
    const int ba = store.add("ba", gaussian(rng, {4}, 0.1));
    Tensor<double> targets = gaussian(rng, {4}, 2.0);
    const std::vector<int> actions{0, 3, 1, 2};
    auto build = [&](Graph<double>& g) {
      const int feat = activation(g, g.param(x), Act::TanhAct);
      const int q = dueling_q(g, feat, wv, bv, wa, ba);
      for (int i = 0; i < 4; ++i) {
        const double e =
            g.val(q).data[i * 4 + actions[static_cast<size_t>(i)]] - targets.data[i];
        if (std::fabs(std::fabs(e) - 1.0) < 1e-3) targets.data[i] += 5e-3;
      }
      return dqn_loss(g, q, actions, targets);
    };
    for (int pid : {x, wv, bv, wa, ba}) {
      const double err = grad_check(store, pid, build);
      if (err >= 1e-4) {
        expect(false, "dqn_loss rep " + std::to_string(rep) + " rel err " + std::to_string(err));
        return;
      }
    }
  }
}

void criterion3() {
  SupernetConfig cfg;
  cfg.normal_cells = 1;
  cfg.reduction_cells = 0;
  cfg.intermediate_nodes = 4;
  cfg.blocks = 1;
  cfg.top_k = 2;
  cfg.depths = {6};
  cfg.normal_opset = "micro";
  cfg.temperature = 1.0;
  cfg.feature_dim = 32;
  const OpSet opset = builtin_opset("micro");
  Rng sample_rng(31415);
  int inverted = 0;
  double worst = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto cell = sample_random_cell(sample_rng, opset, cfg.topology(), cfg.merge);

    ParameterStore<double> sup_store;
    SupernetEncoder<double> sup(sup_store, cfg, {12, 12, 3}, Rng(100 + rep));
    sup.normal_alpha().set_one_hot_from_cell(sup_store, cell, 20.0);

    ParameterStore<double> dis_store;
    DiscreteEncoder<double> dis(dis_store, cfg, cell, std::nullopt, {12, 12, 3}, Rng(7000 + rep));
    copy_matching_params(sup_store, dis_store);

    Rng orng(rep);
    Tensor<double> obs({2, 12, 12, 3});
    for (long long i = 0; i < obs.size(); ++i) obs.data[i] = orng.uniform();
    Graph<double> gs(&sup_store), gd(&dis_store);
    const auto& a = gs.val(sup.forward(gs, gs.input(obs))).data;
    const auto& b = gd.val(dis.forward(gd, gd.input(obs))).data;
    const double rel = (a - b).abs().maxCoeff() / (b.abs().maxCoeff() + 1e-12);
    worst = std::max(worst, rel);
    if (discretize(sup.snapshot_alpha(0), cfg.top_k, cfg.merge).normal == cell) ++inverted;
  }
  expect(worst < 1e-5, "one-hot supernet vs discrete forward relative error " +
                           std::to_string(worst));
  expect(inverted == 100, "discretize must invert the encoding 100/100, got " +
                              std::to_string(inverted));
  char note[96];
  std::snprintf(note, sizeof(note), "max relative forward gap %.3g; inversions %d/100", worst,
                inverted);
  g_notes.push_back(note);
}

void criterion4() {
  const CellTopology topo{4, 2};
  const OpSet opset = builtin_opset("micro");
  Rng rng(2718);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<std::vector<double>> logits;
    for (int e = 0; e < topo.edge_count(); ++e) {
      std::vector<double> l(5);
      for (auto& v : l) v = 2.5 * rng.normal();
      logits.push_back(std::move(l));
    }
    std::vector<OpName> first_ops;
    for (double tau : {0.1, 0.2, 1.0}) {
      AlphaSnapshot snap;
      snap.step = 0;
      RoleProbs role;
      role.role = "normal";
      role.opset = "micro";
      const auto edges = topo.edges();
      for (size_t k = 0; k < edges.size(); ++k) {
        std::vector<double> p = logits[k];
        double mx = -1e300;
        for (double& v : p) {
          v /= tau;
          mx = std::max(mx, v);
        }
        double sum = 0;
        for (double& v : p) {
          v = std::exp(v - mx);
          sum += v;
        }
        for (double& v : p) v /= sum;
        role.edges.push_back({edges[k].first, edges[k].second, std::move(p)});
      }
      snap.roles.push_back(role);
      const auto picks = edge_picks(snap.roles[0]);
      const auto cell = discretize(snap, topo.top_k, MergeMode::ConcatConv1x1).normal;
      try {
        cell.validate(&opset);
      } catch (const std::exception& e) {
        expect(false, std::string("invariant violation: ") + e.what());
        return;
      }
      for (const auto& node : cell.nodes)
        for (const auto& edge : node)
          if (edge.op == OpName::Zero) {
            expect(false, "Zero op appeared in a discretized cell");
            return;
          }
      if (first_ops.empty()) {
        for (const auto& p : picks) first_ops.push_back(p.op);
      } else {
        for (size_t i = 0; i < picks.size(); ++i)
          if (picks[i].op != first_ops[i]) {
            expect(false, "per-edge op choice changed with temperature at rep " +
                              std::to_string(rep));
            return;
          }
      }
    }
  }
}

void criterion5() {
  Rng rng(1618);
  double worst = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    ParameterStore<double> store;
    const int wv = store.add("Wv", gaussian(rng, {6, 1}));
    const int bv = store.add("bv", gaussian(rng, {1}));
    const int wa = store.add("Wa", gaussian(rng, {6, 5}));
    const int ba = store.add("ba", gaussian(rng, {5}));
    Graph<double> g(&store);
    const int feat = g.constant(gaussian(rng, {2, 6}, 1.0));
    const int q = dueling_q(g, feat, wv, bv, wa, ba);
    const int v = affine(g, feat, g.param(wv), g.param(bv));
    for (int n = 0; n < 2; ++n) {
      double mean = 0;
      for (int a = 0; a < 5; ++a) mean += g.val(q).data[n * 5 + a];
      mean /= 5;
      const double err = std::fabs(mean - g.val(v).data[n]) /
                         (1.0 + std::fabs(g.val(v).data[n]));
      worst = std::max(worst, err);
    }
  }
  expect(worst < 1e-6, "dueling identity violated: " + std::to_string(worst));
}

// desk-scale end-to-end search (the long criterion)
void criterion6() {
  const int workers = env_workers();
  std::printf("       - running with %d workers\n", workers);
  std::fflush(stdout);
  const auto t0 = clk::now();

  SupernetConfig micro;
  micro.normal_cells = 2;
  micro.reduction_cells = 0;
  micro.intermediate_nodes = 4;
  micro.blocks = 2;
  micro.top_k = 2;
  micro.depths = {8, 8};
  micro.normal_opset = "micro";
  micro.temperature = 0.2;
  micro.feature_dim = 256;

  SupernetConfig classic = micro;
  classic.normal_cells = 1;
  classic.reduction_cells = 1;
  classic.normal_opset = "classic_normal";
  classic.reduction_opset = "classic_reduction";

  SupernetConfig norelu = classic;
  norelu.normal_opset = "classic_normal_norelu";

  SupernetConfig eval_cfg = micro;
  eval_cfg.depths = {16, 16};

  const long long kSearchBudget = 200000;
  const long long kEvalBudget = 100000;
  const EnvFactory envf = [](uint64_t s) { return make_env("chase", LevelMode::infinite(), s); };
  RlConfig rl;  // paper-style PPO defaults

  struct SearchOut {
    double final_return = 0;
    std::vector<AlphaSnapshot> snapshots;
  };
  auto search_job = [&](const SupernetConfig& cfg, bool frozen, uint64_t seed, SearchOut* out) {
    NetworkBundle net = NetworkBundle::make_supernet(cfg, {24, 24, 3},
                                                     derive_seed(seed, 0x616363), frozen);
    TrainOptions opt;
    opt.budget_steps = kSearchBudget;
    opt.seed = seed;
    opt.snapshot_every = 100;
    const RunResult r = train(Algorithm::Ppo, net, envf, rl, opt);
    out->final_return = r.final_return;
    out->snapshots = r.snapshots;
  };

  // (a) + search runs for (b): trainable vs frozen-uniform Micro supernets
  SearchOut sup[3], uni[3], relu[3], nor[3];
  {
    std::vector<std::function<void()>> jobs;
    for (int s = 0; s < 3; ++s) {
      jobs.push_back([&, s] { search_job(micro, false, 11 + s, &sup[s]); });
      jobs.push_back([&, s] { search_job(micro, true, 11 + s, &uni[s]); });
      jobs.push_back([&, s] { search_job(classic, false, 41 + s, &relu[s]); });
      jobs.push_back([&, s] { search_job(norelu, false, 41 + s, &nor[s]); });
    }
    run_parallel_jobs(jobs, workers);
  }
  auto mean3 = [](const SearchOut* r) {
    return (r[0].final_return + r[1].final_return + r[2].final_return) / 3.0;
  };
  const double sup_mean = mean3(sup), uni_mean = mean3(uni);
  const double relu_mean = mean3(relu), nor_mean = mean3(nor);
  std::printf("       - (a) trainable-alpha supernet mean %.3f vs uniform-alpha %.3f\n",
              sup_mean, uni_mean);
  std::printf("       - (c) with-ReLU Classic supernet mean %.3f vs no-ReLU %.3f\n", relu_mean,
              nor_mean);
  std::fflush(stdout);
  expect(sup_mean > uni_mean, "(a) trainable alpha must beat frozen uniform alpha");

  // (b): final distinct cell of the best search seed vs 10 random cells
  int best_seed = 0;
  for (int s = 1; s < 3; ++s)
    if (sup[s].final_return > sup[best_seed].final_return) best_seed = s;
  const auto seq = distinct_cell_sequence(sup[best_seed].snapshots, micro.top_k, micro.merge);
  const CellChoice final_cell = seq.back().second;

  Rng cell_rng(987);
  const OpSet micro_ops = builtin_opset("micro");
  std::vector<CellChoice> randoms;
  for (int i = 0; i < 10; ++i)
    randoms.push_back({sample_random_cell(cell_rng, micro_ops, micro.topology(), micro.merge),
                       std::nullopt});

  std::vector<double> final_scores(3), random_scores(10);
  {
    std::vector<std::function<void()>> jobs;
    for (int s = 0; s < 3; ++s)
      jobs.push_back([&, s] {
        NetworkBundle net = NetworkBundle::make_discrete(eval_cfg, final_cell, {24, 24, 3},
                                                         derive_seed(900 + s, 1));
        TrainOptions opt;
        opt.budget_steps = kEvalBudget;
        opt.seed = 900 + s;
        final_scores[static_cast<size_t>(s)] = train(Algorithm::Ppo, net, envf, rl, opt).final_return;
      });
    for (int i = 0; i < 10; ++i)
      jobs.push_back([&, i] {
        NetworkBundle net = NetworkBundle::make_discrete(eval_cfg, randoms[static_cast<size_t>(i)],
                                                         {24, 24, 3}, derive_seed(700 + i, 1));
        TrainOptions opt;
        opt.budget_steps = kEvalBudget;
        opt.seed = 700 + i;
        random_scores[static_cast<size_t>(i)] = train(Algorithm::Ppo, net, envf, rl, opt).final_return;
      });
    run_parallel_jobs(jobs, workers);
  }
  const double cell_mean = (final_scores[0] + final_scores[1] + final_scores[2]) / 3.0;
  double random_mean = 0;
  for (double v : random_scores) random_mean += v;
  random_mean /= 10.0;
  std::printf("       - (b) final cell mean %.3f vs mean of 10 random cells %.3f\n", cell_mean,
              random_mean);
  std::fflush(stdout);
  expect(cell_mean >= random_mean, "(b) searched cell must match or beat random cells");
  expect(relu_mean > nor_mean, "(c) removing ReLU must hurt the Classic supernet");

  const double hours = std::chrono::duration<double>(clk::now() - t0).count() / 3600.0;
  const int cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const double hours_8core = hours * std::min(8, cores) / 8.0;
  std::printf("       - wall %.2fh on %d cores (~%.2fh normalized to 8 cores)\n", hours, cores,
              hours_8core);
  expect(hours_8core <= 4.0, "runtime exceeds the 4-hour 8-core budget");
}

void criterion7() {
  const auto chase = chase_spec();
  expect(normalized_score(chase.r_max, chase.r_min, chase.r_max) == 1.0,
         "normalized_score(R_max) must be exactly 1");
  expect(normalized_score(chase.r_min, chase.r_min, chase.r_max) == 0.0,
         "normalized_score(R_min) must be exactly 0");
  expect(normalized_score(chase.r_min - 3.0, chase.r_min, chase.r_max) < 0.0,
         "scores below R_min must be negative (no clipping)");
  bool threw = false;
  try {
    normalized_score(1.0, 2.0, 2.0);
  } catch (const ConfigError&) {
    threw = true;
  }
  expect(threw, "R_max == R_min must be an error");
}

void criterion8() {
  const int B = 8, F = 16;
  Eigen::MatrixXd rows(B, F);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < F; ++j)
      rows(i, j) = __builtin_parity(static_cast<unsigned>((i + 1) & j)) ? -1.0 : 1.0;
  const double eps = 1e-5;
  const double score = jacobian_covariance_score(rows, eps);
  const double closed_form = -B * (std::log(1 + eps) + 1.0 / (1 + eps));
  expect(std::fabs(score - closed_form) < 1e-9,
         "orthogonal rows must match the closed form, got " + std::to_string(score));
  expect(std::fabs(score - (-static_cast<double>(B))) < 1e-6,
         "orthogonal-row score must be within 1e-6 of -B");
  const double scaled = jacobian_covariance_score(10.0 * rows, eps);
  expect(std::fabs(scaled - score) < 1e-9, "score must be invariant to row scaling");
}

void criterion9() {
  const std::string dir = "/tmp/rldarts_accept_repro";
  std::filesystem::remove_all(dir);
  const std::string cfg_text =
      "[run]\n"
      "phase = search\nalgorithm = ppo\ngame = chase\nseed = 13\n"
      "budget_steps = 2048\neval_budget_steps = 512\neval_seeds = 1\nworkers = 1\n"
      "snapshot_every = 4\nout_dir = " + dir + "\n"
      "[supernet]\n"
      "opset = micro\nN = 1\nR = 0\nI = 3\nD = 1\nK = 2\ndepths = 6\neval_depths = 6\n"
      "feature_dim = 32\n"
      "[ppo]\nrollout_len = 32\nn_envs = 4\nminibatch = 32\n";
  const RunConfig cfg = RunConfig::from_config(ConfigFile::parse(cfg_text));
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto rec1 = run_pipeline(cfg);
  const std::string metrics1 = slurp(dir + "/metrics.csv");
  const std::string alpha1 = slurp(dir + "/alpha_log.jsonl");
  std::filesystem::remove_all(dir);
  const auto rec2 = run_pipeline(cfg);
  expect(rec1.config_hash == rec2.config_hash, "config hash must be stable");
  expect(!metrics1.empty() && metrics1 == slurp(dir + "/metrics.csv"),
         "metrics CSV must be byte-identical across reruns");
  expect(alpha1 == slurp(dir + "/alpha_log.jsonl"),
         "alpha log must be byte-identical across reruns");
  expect(rec1.eval.has_value() && rec2.eval.has_value() &&
             rec1.eval->per_seed == rec2.eval->per_seed,
         "evaluation scores must reproduce exactly");
  std::filesystem::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  bool skip_long = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    if (std::strcmp(argv[i], "--skip-long") == 0) skip_long = true;
  }
  auto want = [&](int idx) { return only == 0 || only == idx; };

  if (want(1)) criterion(1, "search-space arithmetic", criterion1);
  if (want(2)) criterion(2, "gradient correctness (finite differences)", criterion2);
  if (want(3)) criterion(3, "one-hot / discretization consistency", criterion3);
  if (want(4)) criterion(4, "discretization contract over random alpha", criterion4);
  if (want(5)) criterion(5, "dueling identity", criterion5);
  if (want(6) && !skip_long) criterion(6, "desk-scale end-to-end search", criterion6);
  if (want(7)) criterion(7, "normalized-score algebra", criterion7);
  if (want(8)) criterion(8, "jacobian-covariance metric", criterion8);
  if (want(9)) criterion(9, "pipeline reproducibility", criterion9);

  if (g_failures == 0)
    std::printf("acceptance: all criteria passed\n");
  else
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
  return g_failures;
}
