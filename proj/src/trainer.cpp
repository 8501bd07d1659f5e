#include "rldarts/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>

#include "rldarts/cell_io.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace rldarts {

namespace {

// Training graphs allocate and free hundreds of MB per minibatch; keep glibc
// from handing those chunks back to the kernel every time.
void tune_allocator_once() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct PvHeads {
  int wpi = -1, bpi = -1, wv = -1, bv = -1;
};

PvHeads ensure_pv_heads(ParameterStore<float>& store, int fdim, int actions, Rng rng) {
  PvHeads h;
  if (store.find("pi/W") >= 0) {
    h.wpi = store.find("pi/W");
    h.bpi = store.find("pi/b");
    h.wv = store.find("v/W");
    h.bv = store.find("v/b");
    return h;
  }
  h.wpi = store.add("pi/W", detail::init_dense<float>(rng, fdim, actions));
  h.bpi = store.add("pi/b", Tensor<float>({actions}));
  h.wv = store.add("v/W", detail::init_dense<float>(rng, fdim, 1));
  h.bv = store.add("v/b", Tensor<float>({1}));
  return h;
}

struct DuelHeads {
  int wv = -1, bv = -1, wa = -1, ba = -1;
};

DuelHeads ensure_duel_heads(ParameterStore<float>& store, int fdim, int actions, Rng rng) {
  DuelHeads h;
  if (store.find("dueling/Wv") >= 0) {
    h.wv = store.find("dueling/Wv");
    h.bv = store.find("dueling/bv");
    h.wa = store.find("dueling/Wa");
    h.ba = store.find("dueling/ba");
    return h;
  }
  h.wv = store.add("dueling/Wv", detail::init_dense<float>(rng, fdim, 1));
  h.bv = store.add("dueling/bv", Tensor<float>({1}));
  h.wa = store.add("dueling/Wa", detail::init_dense<float>(rng, fdim, actions));
  h.ba = store.add("dueling/ba", Tensor<float>({actions}));
  return h;
}

Tensor<float> obs_batch(const std::vector<const Env*>& envs) {
  const auto s = envs[0]->obs_shape();
  Tensor<float> out({static_cast<int>(envs.size()), s[0], s[1], s[2]});
  const long long per = static_cast<long long>(s[0]) * s[1] * s[2];
  for (size_t e = 0; e < envs.size(); ++e)
    envs[e]->obs_float_into(out.data.data() + static_cast<long long>(e) * per);
  return out;
}

Tensor<float> obs_from_bytes(const std::vector<const std::vector<uint8_t>*>& rows,
                             std::array<int, 3> s) {
  Tensor<float> out({static_cast<int>(rows.size()), s[0], s[1], s[2]});
  const long long per = static_cast<long long>(s[0]) * s[1] * s[2];
  for (size_t e = 0; e < rows.size(); ++e)
    for (long long i = 0; i < per; ++i)
      out.data[static_cast<long long>(e) * per + i] =
          static_cast<float>((*rows[e])[static_cast<size_t>(i)]) * (1.0f / 255.0f);
  return out;
}

// categorical draw from a logit row; returns the index and fills logp
int sample_categorical(const float* logits, int n, Rng& rng, double* logp) {
  double mx = -1e300;
  for (int i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0;
  std::vector<double> p(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[static_cast<size_t>(i)];
  }
  const double u = rng.uniform() * sum;
  double acc = 0;
  int pick = n - 1;
  for (int i = 0; i < n; ++i) {
    acc += p[static_cast<size_t>(i)];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  if (logp) *logp = std::log(p[static_cast<size_t>(pick)] / sum);
  return pick;
}

int argmax_row(const float* v, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

class EpisodeTracker {
 public:
  void add_reward(int env, double r) { acc_.at(static_cast<size_t>(env)) += r; }
  void finish(int env) {
    returns_.push_back(acc_.at(static_cast<size_t>(env)));
    if (returns_.size() > 50) returns_.pop_front();
    acc_[static_cast<size_t>(env)] = 0;
    ++episodes_;
  }
  void resize(int n) { acc_.assign(static_cast<size_t>(n), 0.0); }
  long long episodes() const { return episodes_; }
  double mean_return() const {
    if (returns_.empty()) return 0;
    double s = 0;
    for (double r : returns_) s += r;
    return s / static_cast<double>(returns_.size());
  }

 private:
  std::vector<double> acc_;
  std::deque<double> returns_;
  long long episodes_ = 0;
};

void check_finite_or_abort(const NetworkBundle& net, double loss, long long step) {
  bool bad = !std::isfinite(loss);
  if (!bad && net.supernet) {
    for (int pid : net.supernet->normal_alpha().logits)
      if (!net.store.value(pid).all_finite()) bad = true;
    if (const auto* red = net.supernet->reduction_alpha())
      for (int pid : red->logits)
        if (!net.store.value(pid).all_finite()) bad = true;
  }
  if (bad) {
    std::string diag = "{}";
    if (net.supernet) diag = snapshot_to_json(net.supernet->snapshot_alpha(step));
    throw NanAbortError("non-finite loss at step " + std::to_string(step), diag);
  }
}

double rollout_policy(Algorithm algo, NetworkBundle& net, const EnvFactory& envf, int episodes,
                      uint64_t seed) {
  auto env = envf(derive_seed(seed, 500));
  const int actions = env->action_count();
  Rng rng = Rng(seed).derive(0x65766131);
  Rng head_rng = Rng(seed).derive(0x68656164);
  PvHeads pv;
  DuelHeads dh;
  if (algo == Algorithm::Ppo)
    pv = ensure_pv_heads(net.store, net.encoder->feature_dim(), actions, head_rng);
  else
    dh = ensure_duel_heads(net.store, net.encoder->feature_dim(), actions, head_rng);
  double total = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    double ret = 0;
    for (;;) {
      std::vector<const Env*> one{env.get()};
      Graph<float> g(&net.store);
      const int feat = net.encoder->forward(g, g.input(obs_batch(one)));
      int act;
      if (algo == Algorithm::Ppo) {
        const int logits = affine(g, feat, g.param(pv.wpi), g.param(pv.bpi));
        act = sample_categorical(g.val(logits).data.data(), actions, rng, nullptr);
      } else {
        const int q = dueling_q(g, feat, dh.wv, dh.bv, dh.wa, dh.ba);
        act = argmax_row(g.val(q).data.data(), actions);
      }
      const auto r = env->step(act);
      ret += r.reward;
      if (r.done) break;
    }
    env->reset();
    total += ret;
  }
  return total / std::max(1, episodes);
}

// 10 sampled episodes with the current policy, no learning
RunResult initial_evaluation(Algorithm algo, NetworkBundle& net, const EnvFactory& envf,
                             const TrainOptions& opt) {
  RunResult out;
  out.episodes = 10;
  out.final_return = rollout_policy(algo, net, envf, 10, opt.seed);
  MetricsRow row;
  row.episodes = out.episodes;
  row.mean_return = out.final_return;
  row.alpha_max_dev = net.supernet ? net.supernet->alpha_max_deviation() : 0.0;
  out.metrics.push_back(row);
  if (net.supernet) out.snapshots.push_back(net.supernet->snapshot_alpha(0));
  return out;
}

RunResult train_ppo(NetworkBundle& net, const EnvFactory& envf, const PpoConfig& cfg,
                    const TrainOptions& opt) {
  cfg.validate();
  const int E = cfg.n_envs;
  const int T = cfg.rollout_len;
  std::vector<std::unique_ptr<Env>> envs;
  for (int e = 0; e < E; ++e) envs.push_back(envf(derive_seed(opt.seed, 100 + static_cast<uint64_t>(e))));
  const int actions = envs[0]->action_count();
  const auto oshape = envs[0]->obs_shape();
  const long long obs_per = static_cast<long long>(oshape[0]) * oshape[1] * oshape[2];

  PvHeads heads = ensure_pv_heads(net.store, net.encoder->feature_dim(), actions,
                                  Rng(opt.seed).derive(0x68656164));
  AdamOptimizer<float> adam(static_cast<float>(cfg.lr), static_cast<float>(cfg.alpha_lr_mult));
  Rng rng = Rng(opt.seed).derive(0x70706f);

  RunResult out;
  EpisodeTracker tracker;
  tracker.resize(E);
  if (net.supernet) out.snapshots.push_back(net.supernet->snapshot_alpha(0));

  const long long B = static_cast<long long>(T) * E;
  std::vector<float> roll_obs(static_cast<size_t>(B * obs_per));
  std::vector<int> roll_act(static_cast<size_t>(B));
  std::vector<float> roll_logp(static_cast<size_t>(B));
  std::vector<double> roll_val(static_cast<size_t>(B));
  std::vector<double> roll_rew(static_cast<size_t>(B));
  std::vector<uint8_t> roll_done(static_cast<size_t>(B));

  while (out.steps < opt.budget_steps) {
    // ---- rollout
    for (int t = 0; t < T; ++t) {
      std::vector<const Env*> views;
      for (auto& e : envs) views.push_back(e.get());
      Tensor<float> ob = obs_batch(views);
      std::copy(ob.data.data(), ob.data.data() + E * obs_per,
                roll_obs.begin() + static_cast<long long>(t) * E * obs_per);
      Graph<float> g(&net.store);
      const int feat = net.encoder->forward(g, g.input(std::move(ob)));
      const int logits = affine(g, feat, g.param(heads.wpi), g.param(heads.bpi));
      const int values = affine(g, feat, g.param(heads.wv), g.param(heads.bv));
      for (int e = 0; e < E; ++e) {
        const long long i = static_cast<long long>(t) * E + e;
        double logp = 0;
        const int act = sample_categorical(g.val(logits).data.data() +
                                               static_cast<long long>(e) * actions,
                                           actions, rng, &logp);
        roll_act[static_cast<size_t>(i)] = act;
        roll_logp[static_cast<size_t>(i)] = static_cast<float>(logp);
        roll_val[static_cast<size_t>(i)] = g.val(values).data[e];
        const auto r = envs[static_cast<size_t>(e)]->step(act);
        roll_rew[static_cast<size_t>(i)] = r.reward;
        roll_done[static_cast<size_t>(i)] = r.done ? 1 : 0;
        tracker.add_reward(e, r.reward);
        if (r.done) {
          if (r.truncated) {
            // time-limit end: bootstrap through the cut by folding the value
            // of the final state into the last reward
            std::vector<const Env*> one{envs[static_cast<size_t>(e)].get()};
            Graph<float> gb(&net.store);
            const int bf = net.encoder->forward(gb, gb.input(obs_batch(one)));
            const int bv = affine(gb, bf, gb.param(heads.wv), gb.param(heads.bv));
            roll_rew[static_cast<size_t>(i)] +=
                cfg.gamma * static_cast<double>(gb.val(bv).data[0]);
          }
          tracker.finish(e);
          envs[static_cast<size_t>(e)]->reset();
        }
      }
      out.steps += E;
    }
    // bootstrap values for the step after the rollout
    std::vector<double> boot(static_cast<size_t>(E));
    {
      std::vector<const Env*> views;
      for (auto& e : envs) views.push_back(e.get());
      Graph<float> g(&net.store);
      const int feat = net.encoder->forward(g, g.input(obs_batch(views)));
      const int values = affine(g, feat, g.param(heads.wv), g.param(heads.bv));
      for (int e = 0; e < E; ++e) boot[static_cast<size_t>(e)] = g.val(values).data[e];
    }

    // ---- GAE per environment stream
    std::vector<float> adv_flat(static_cast<size_t>(B)), ret_flat(static_cast<size_t>(B));
    for (int e = 0; e < E; ++e) {
      std::vector<double> rews(static_cast<size_t>(T)), vals(static_cast<size_t>(T + 1));
      std::vector<uint8_t> dns(static_cast<size_t>(T));
      for (int t = 0; t < T; ++t) {
        const long long i = static_cast<long long>(t) * E + e;
        rews[static_cast<size_t>(t)] = roll_rew[static_cast<size_t>(i)];
        vals[static_cast<size_t>(t)] = roll_val[static_cast<size_t>(i)];
        dns[static_cast<size_t>(t)] = roll_done[static_cast<size_t>(i)];
      }
      vals[static_cast<size_t>(T)] = boot[static_cast<size_t>(e)];
      std::vector<double> adv, ret;
      gae_advantages(rews, vals, dns, cfg.gamma, cfg.lambda, adv, ret);
      for (int t = 0; t < T; ++t) {
        const long long i = static_cast<long long>(t) * E + e;
        adv_flat[static_cast<size_t>(i)] = static_cast<float>(adv[static_cast<size_t>(t)]);
        ret_flat[static_cast<size_t>(i)] = static_cast<float>(ret[static_cast<size_t>(t)]);
      }
    }

    // ---- optimize
    std::vector<long long> perm(static_cast<size_t>(B));
    std::iota(perm.begin(), perm.end(), 0);
    double it_loss = 0, it_pi = 0, it_vf = 0, it_ent = 0;
    int it_mb = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (long long i = B - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)],
                  perm[static_cast<size_t>(rng.uniform_int(static_cast<int>(i) + 1))]);
      for (long long start = 0; start + cfg.minibatch <= B; start += cfg.minibatch) {
        const int M = cfg.minibatch;
        Tensor<float> mob({M, oshape[0], oshape[1], oshape[2]});
        PpoBatch<float> batch;
        batch.logp_old = Tensor<float>({M});
        batch.advantages = Tensor<float>({M});
        batch.returns = Tensor<float>({M});
        for (int m = 0; m < M; ++m) {
          const long long i = perm[static_cast<size_t>(start + m)];
          std::copy(roll_obs.begin() + i * obs_per, roll_obs.begin() + (i + 1) * obs_per,
                    mob.data.data() + static_cast<long long>(m) * obs_per);
          batch.actions.push_back(roll_act[static_cast<size_t>(i)]);
          batch.logp_old.data[m] = roll_logp[static_cast<size_t>(i)];
          batch.advantages.data[m] = adv_flat[static_cast<size_t>(i)];
          batch.returns.data[m] = ret_flat[static_cast<size_t>(i)];
        }
        // per-minibatch advantage normalization
        const float amean = batch.advantages.data.mean();
        const float astd = std::sqrt((batch.advantages.data - amean).square().mean());
        batch.advantages.data = (batch.advantages.data - amean) / (astd + 1e-8f);

        Graph<float> g(&net.store);
        const int feat = net.encoder->forward(g, g.input(std::move(mob)));
        const int logits = affine(g, feat, g.param(heads.wpi), g.param(heads.bpi));
        const int values = reshape(g, affine(g, feat, g.param(heads.wv), g.param(heads.bv)), {M});
        const auto parts = ppo_loss(g, logits, values, batch, static_cast<float>(cfg.clip_eps),
                                    static_cast<float>(cfg.value_coef),
                                    static_cast<float>(cfg.entropy_coef));
        g.backward(parts.total);
        for (int p = 0; p < net.store.count(); ++p)
          if (!net.store.entry(p).trainable) net.store.grad(p).data.setZero();
        clip_gradients(net.store, cfg.grad_clip);
        adam.step(net.store);
        ++out.updates;
        ++it_mb;
        it_loss += g.val(parts.total).data[0];
        it_pi += g.val(parts.lclip).data[0];
        it_vf += g.val(parts.lvf).data[0];
        it_ent += g.val(parts.entropy).data[0];
        check_finite_or_abort(net, g.val(parts.total).data[0], out.steps);
        if (net.supernet && opt.snapshot_every > 0 && out.updates % opt.snapshot_every == 0)
          out.snapshots.push_back(net.supernet->snapshot_alpha(out.steps));
      }
    }

    MetricsRow row;
    row.step = out.steps;
    row.episodes = tracker.episodes();
    row.mean_return = tracker.mean_return();
    row.loss_total = it_loss / std::max(1, it_mb);
    row.loss_pi_or_td = it_pi / std::max(1, it_mb);
    row.loss_v = it_vf / std::max(1, it_mb);
    row.entropy = it_ent / std::max(1, it_mb);
    row.alpha_max_dev = net.supernet ? net.supernet->alpha_max_deviation() : 0.0;
    out.metrics.push_back(row);
  }

  out.episodes = tracker.episodes();
  out.final_return = tracker.mean_return();
  if (net.supernet &&
      (out.snapshots.empty() || out.snapshots.back().step != out.steps))
    out.snapshots.push_back(net.supernet->snapshot_alpha(out.steps));
  if (!opt.checkpoint_path.empty())
    save_checkpoint(net.store, rng.state(), out.steps, opt.checkpoint_path);
  return out;
}

RunResult train_dqn(NetworkBundle& net, const EnvFactory& envf, const DqnConfig& cfg,
                    const TrainOptions& opt) {
  cfg.validate();
  auto env = envf(derive_seed(opt.seed, 100));
  const int actions = env->action_count();
  const auto oshape = env->obs_shape();

  DuelHeads heads = ensure_duel_heads(net.store, net.encoder->feature_dim(), actions,
                                      Rng(opt.seed).derive(0x68656164));
  ParameterStore<float> target = net.store;  // target network weights
  AdamOptimizer<float> adam(static_cast<float>(cfg.lr), static_cast<float>(cfg.alpha_lr_mult));
  Rng rng = Rng(opt.seed).derive(0x64716e);
  ReplayBuffer replay(cfg.buffer_capacity, derive_seed(opt.seed, 7));

  RunResult out;
  EpisodeTracker tracker;
  tracker.resize(1);
  if (net.supernet) out.snapshots.push_back(net.supernet->snapshot_alpha(0));

  struct Pending {
    std::vector<uint8_t> obs;
    int action;
    float reward;
  };
  std::deque<Pending> pending;
  // episode_end flushes the queue; absorbing is false for time-limit ends so
  // the target still bootstraps from the final observation
  auto flush_pending = [&](const std::vector<uint8_t>& next_obs, bool episode_end,
                           bool absorbing) {
    while (!pending.empty() &&
           (episode_end || static_cast<int>(pending.size()) == cfg.n_step)) {
      std::vector<double> rews;
      for (const auto& p : pending) rews.push_back(p.reward);
      const double R = n_step_return(rews, cfg.gamma);
      Transition tr;
      tr.obs = pending.front().obs;
      tr.next_obs = next_obs;
      tr.action = pending.front().action;
      tr.reward = static_cast<float>(R);
      tr.done = absorbing;
      tr.steps = static_cast<int>(pending.size());
      replay.add(std::move(tr));
      pending.pop_front();
      if (!episode_end) break;
    }
  };

  const long long metrics_interval = 1024;
  long long next_metrics = metrics_interval;
  double last_loss = 0;

  while (out.steps < opt.budget_steps) {
    const double frac =
        std::min(1.0, static_cast<double>(out.steps) / std::max<long long>(1, cfg.eps_decay_steps));
    const double eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
    const std::vector<uint8_t> cur_obs = env->obs_bytes();
    int act;
    if (rng.uniform() < eps) {
      act = rng.uniform_int(actions);
    } else {
      std::vector<const Env*> one{env.get()};
      Graph<float> g(&net.store);
      const int feat = net.encoder->forward(g, g.input(obs_batch(one)));
      const int q = dueling_q(g, feat, heads.wv, heads.bv, heads.wa, heads.ba);
      act = argmax_row(g.val(q).data.data(), actions);
    }
    const auto r = env->step(act);
    ++out.steps;
    tracker.add_reward(0, r.reward);
    pending.push_back({cur_obs, act, r.reward});
    flush_pending(env->obs_bytes(), r.done, r.done && !r.truncated);
    if (r.done) {
      tracker.finish(0);
      env->reset();
    }

    if (out.steps >= cfg.learn_start && out.steps % cfg.train_interval == 0 &&
        replay.size() >= cfg.batch) {
      const auto idx = replay.sample_indices(cfg.batch);
      std::vector<const std::vector<uint8_t>*> obs_rows, next_rows;
      std::vector<int> acts;
      for (int i : idx) {
        obs_rows.push_back(&replay.item(i).obs);
        next_rows.push_back(&replay.item(i).next_obs);
        acts.push_back(replay.item(i).action);
      }
      // double-DQN target: online argmax, target evaluation
      Tensor<float> targets({cfg.batch});
      {
        Graph<float> go(&net.store);
        const int fo = net.encoder->forward(go, go.input(obs_from_bytes(next_rows, oshape)));
        const int qo = dueling_q(go, fo, heads.wv, heads.bv, heads.wa, heads.ba);
        Graph<float> gt(&target);
        const int ft = net.encoder->forward(gt, gt.input(obs_from_bytes(next_rows, oshape)));
        const int qt = dueling_q(gt, ft, heads.wv, heads.bv, heads.wa, heads.ba);
        for (int m = 0; m < cfg.batch; ++m) {
          const auto& tr = replay.item(idx[static_cast<size_t>(m)]);
          const int astar = argmax_row(go.val(qo).data.data() +
                                           static_cast<long long>(m) * actions,
                                       actions);
          targets.data[m] = static_cast<float>(
              dqn_target(tr.reward, tr.steps, cfg.gamma, tr.done,
                         gt.val(qt).data[static_cast<long long>(m) * actions + astar]));
        }
      }
      Graph<float> g(&net.store);
      const int feat = net.encoder->forward(g, g.input(obs_from_bytes(obs_rows, oshape)));
      const int q = dueling_q(g, feat, heads.wv, heads.bv, heads.wa, heads.ba);
      const int loss = dqn_loss(g, q, acts, std::move(targets));
      g.backward(loss);
      for (int p = 0; p < net.store.count(); ++p)
        if (!net.store.entry(p).trainable) net.store.grad(p).data.setZero();
      clip_gradients(net.store, cfg.grad_clip);
      adam.step(net.store);
      ++out.updates;
      last_loss = g.val(loss).data[0];
      check_finite_or_abort(net, last_loss, out.steps);
      if (out.updates % cfg.target_sync == 0) target = net.store;
      if (net.supernet && opt.snapshot_every > 0 && out.updates % opt.snapshot_every == 0)
        out.snapshots.push_back(net.supernet->snapshot_alpha(out.steps));
    }

    if (out.steps >= next_metrics) {
      MetricsRow row;
      row.step = out.steps;
      row.episodes = tracker.episodes();
      row.mean_return = tracker.mean_return();
      row.loss_total = last_loss;
      row.loss_pi_or_td = last_loss;
      row.alpha_max_dev = net.supernet ? net.supernet->alpha_max_deviation() : 0.0;
      out.metrics.push_back(row);
      next_metrics += metrics_interval;
    }
  }

  out.episodes = tracker.episodes();
  out.final_return = tracker.mean_return();
  if (net.supernet &&
      (out.snapshots.empty() || out.snapshots.back().step != out.steps))
    out.snapshots.push_back(net.supernet->snapshot_alpha(out.steps));
  if (!opt.checkpoint_path.empty())
    save_checkpoint(net.store, rng.state(), out.steps, opt.checkpoint_path);
  return out;
}

}  // namespace

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "ppo") return Algorithm::Ppo;
  if (s == "dqn") return Algorithm::Dqn;
  throw ConfigError("unknown algorithm: " + s);
}

const char* to_string(Algorithm a) { return a == Algorithm::Ppo ? "ppo" : "dqn"; }

std::string metrics_csv_header() {
  return "step,episodes,mean_return,loss_total,loss_pi_or_td,loss_v,entropy,alpha_max_dev";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::string out = std::to_string(r.step) + "," + std::to_string(r.episodes);
  for (double v : {r.mean_return, r.loss_total, r.loss_pi_or_td, r.loss_v, r.entropy,
                   r.alpha_max_dev})
    out += "," + fmt_double(v);
  return out;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << metrics_csv_header() << "\n";
  for (const auto& r : rows) out << metrics_csv_line(r) << "\n";
}

NetworkBundle NetworkBundle::make_supernet(const SupernetConfig& cfg, std::array<int, 3> obs,
                                           uint64_t init_seed, bool frozen_alpha) {
  NetworkBundle b;
  auto enc = std::make_unique<SupernetEncoder<float>>(b.store, cfg, obs, Rng(init_seed));
  b.supernet = enc.get();
  if (frozen_alpha) b.supernet->set_frozen_alpha(true);
  b.encoder = std::move(enc);
  return b;
}

NetworkBundle NetworkBundle::make_discrete(const SupernetConfig& cfg, const CellChoice& cells,
                                           std::array<int, 3> obs, uint64_t init_seed) {
  NetworkBundle b;
  b.encoder = std::make_unique<DiscreteEncoder<float>>(b.store, cfg, cells.normal,
                                                       cells.reduction, obs, Rng(init_seed));
  return b;
}

NetworkBundle NetworkBundle::make_baseline(const std::vector<int>& depths, int ksize,
                                           std::array<int, 3> obs, int feature_dim,
                                           uint64_t init_seed) {
  NetworkBundle b;
  b.encoder = std::make_unique<BaselineEncoder<float>>(b.store, depths, ksize, obs, feature_dim,
                                                       Rng(init_seed));
  return b;
}

RunResult train(Algorithm algo, NetworkBundle& net, const EnvFactory& envf, const RlConfig& cfg,
                const TrainOptions& opt) {
  tune_allocator_once();
  if (opt.budget_steps < 0) throw ConfigError("budget must be non-negative");
  if (opt.budget_steps == 0) return initial_evaluation(algo, net, envf, opt);
  return algo == Algorithm::Ppo ? train_ppo(net, envf, cfg.ppo, opt)
                                : train_dqn(net, envf, cfg.dqn, opt);
}

double evaluate_policy(Algorithm algo, NetworkBundle& net, const EnvFactory& envf, int episodes,
                       uint64_t seed) {
  tune_allocator_once();
  return rollout_policy(algo, net, envf, episodes, seed);
}

void save_checkpoint(const ParameterStore<float>& store, uint64_t rng_state_seed,
                     long long step, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  const char magic[8] = {'R', 'L', 'D', 'C', 'K', 'P', 'T', '1'};
  out.write(magic, 8);
  out.write(reinterpret_cast<const char*>(&step), sizeof(step));
  out.write(reinterpret_cast<const char*>(&rng_state_seed), sizeof(rng_state_seed));
  const int32_t count = store.count();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (int i = 0; i < count; ++i) {
    const auto& e = store.entry(i);
    const int32_t nlen = static_cast<int32_t>(e.name.size());
    out.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
    out.write(e.name.data(), nlen);
    const int64_t sz = e.value.size();
    out.write(reinterpret_cast<const char*>(&sz), sizeof(sz));
    out.write(reinterpret_cast<const char*>(e.value.data.data()),
              static_cast<std::streamsize>(sz * static_cast<int64_t>(sizeof(float))));
  }
}

Checkpoint load_checkpoint(ParameterStore<float>& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, "RLDCKPT1", 8) != 0) throw ConfigError("bad checkpoint file " + path);
  Checkpoint ck;
  in.read(reinterpret_cast<char*>(&ck.step), sizeof(ck.step));
  in.read(reinterpret_cast<char*>(&ck.rng_state_seed), sizeof(ck.rng_state_seed));
  int32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (int i = 0; i < count; ++i) {
    int32_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
    std::string name(static_cast<size_t>(nlen), '\0');
    in.read(name.data(), nlen);
    int64_t sz = 0;
    in.read(reinterpret_cast<char*>(&sz), sizeof(sz));
    const int pid = store.find(name);
    if (pid < 0) throw ConfigError("checkpoint parameter not in store: " + name);
    if (store.value(pid).size() != sz)
      throw ConfigError("checkpoint size mismatch for " + name);
    in.read(reinterpret_cast<char*>(store.value(pid).data.data()),
            static_cast<std::streamsize>(sz * static_cast<int64_t>(sizeof(float))));
  }
  if (!in) throw ConfigError("truncated checkpoint " + path);
  return ck;
}

EvalResult evaluate_cell(const SupernetConfig& eval_cfg, const CellChoice& cells,
                         std::array<int, 3> obs, Algorithm algo, const EnvFactory& envf,
                         const RlConfig& cfg, long long budget,
                         const std::vector<uint64_t>& seeds) {
  EvalResult out;
  for (uint64_t seed : seeds) {
    NetworkBundle net = NetworkBundle::make_discrete(eval_cfg, cells, obs,
                                                     derive_seed(seed, 0x696e6974));
    TrainOptions opt;
    opt.budget_steps = budget;
    opt.seed = seed;
    const RunResult r = train(algo, net, envf, cfg, opt);
    out.per_seed.push_back(r.final_return);
  }
  double mean = 0;
  for (double v : out.per_seed) mean += v;
  mean /= static_cast<double>(out.per_seed.size());
  double var = 0;
  for (double v : out.per_seed) var += (v - mean) * (v - mean);
  out.mean = mean;
  out.stddev = std::sqrt(var / static_cast<double>(out.per_seed.size()));
  return out;
}

RandomSearchResult random_search(int budget_cells, const SupernetConfig& search_cfg,
                                 std::array<int, 3> obs, Algorithm algo, const EnvFactory& envf,
                                 const RlConfig& cfg, long long per_cell_budget, Rng& rng) {
  if (budget_cells < 1) throw ConfigError("random search needs a budget of at least one cell");
  const OpSet normal_ops = builtin_opset(search_cfg.normal_opset);
  const auto topo = search_cfg.topology();
  auto cell_key = [](const CellChoice& c) {
    std::string k = cell_to_json(c.normal, -1);
    if (c.reduction) k += "|" + cell_to_json(*c.reduction, -1);
    return k;
  };
  std::set<std::string> seen;
  RandomSearchResult out;
  for (int i = 0; i < budget_cells; ++i) {
    CellChoice choice;
    for (int attempt = 0;; ++attempt) {
      choice.normal = sample_random_cell(rng, normal_ops, topo, search_cfg.merge);
      if (search_cfg.reduction_cells > 0)
        choice.reduction = sample_random_cell(rng, builtin_opset(search_cfg.reduction_opset),
                                              topo, search_cfg.merge);
      std::string key = cell_key(choice);
      if (seen.insert(key).second) break;
      if (attempt > 200) break;  // space smaller than the budget
    }
    NetworkBundle net = NetworkBundle::make_discrete(search_cfg, choice, obs, rng.next_u64());
    TrainOptions opt;
    opt.budget_steps = per_cell_budget;
    opt.seed = rng.next_u64();
    const RunResult r = train(algo, net, envf, cfg, opt);
    out.evaluated.emplace_back(choice, r.final_return);
    if (out.evaluated.size() == 1 || r.final_return > out.best_score) {
      out.best = choice;
      out.best_score = r.final_return;
    }
  }
  return out;
}

}  // namespace rldarts
