#pragma once

#include <cstdint>
#include <vector>

#include "rldarts/ops.hpp"

namespace rldarts {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;  // GAE
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lr = 2.5e-4;
  double alpha_lr_mult = 1.0;
  double grad_clip = 0.5;  // global gradient norm bound; <= 0 disables
  int rollout_len = 128;
  int n_envs = 8;
  int minibatch = 256;
  int epochs = 1;

  void validate() const {
    if (gamma <= 0 || gamma > 1 || lambda <= 0 || lambda > 1)
      throw ConfigError("ppo: gamma and lambda must be in (0, 1]");
    if (clip_eps <= 0) throw ConfigError("ppo: clip_eps must be positive");
    if (rollout_len < 1 || n_envs < 1 || minibatch < 1 || epochs < 1)
      throw ConfigError("ppo: sizes must be positive");
  }
};

struct DqnConfig {
  double gamma = 0.99;
  double lr = 5e-5;
  double alpha_lr_mult = 1.0;
  double grad_clip = 10.0;  // global gradient norm bound; <= 0 disables
  int n_step = 7;
  int batch = 64;
  int buffer_capacity = 20000;
  int target_sync = 1000;    // learner updates between target refreshes
  int train_interval = 4;    // env steps between learner updates
  int learn_start = 1000;    // env steps before learning begins
  double eps_start = 1.0;
  double eps_end = 0.05;
  long long eps_decay_steps = 50000;

  void validate() const {
    if (gamma <= 0 || gamma > 1) throw ConfigError("dqn: gamma must be in (0, 1]");
    if (n_step < 1 || batch < 1 || buffer_capacity < batch)
      throw ConfigError("dqn: batch/buffer sizes invalid");
    if (target_sync < 1 || train_interval < 1) throw ConfigError("dqn: periods must be positive");
  }
};

// ---------------------------------------------------------------------------
// generalized advantage estimation

// rewards/dones have length T, values length T+1 (bootstrap at the end).
// advantages[t] = sum_k (gamma*lambda)^k delta_{t+k}; returns = adv + values.
inline void gae_advantages(const std::vector<double>& rewards,
                           const std::vector<double>& values,
                           const std::vector<uint8_t>& dones, double gamma, double lambda,
                           std::vector<double>& advantages, std::vector<double>& returns) {
  const size_t T = rewards.size();
  if (values.size() != T + 1 || dones.size() != T)
    throw UsageError("gae_advantages: length mismatch");
  advantages.assign(T, 0.0);
  returns.assign(T, 0.0);
  double acc = 0.0;
  for (size_t t = T; t-- > 0;) {
    const double not_done = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * values[t + 1] * not_done - values[t];
    acc = delta + gamma * lambda * not_done * acc;
    advantages[t] = acc;
    returns[t] = acc + values[t];
  }
}

// ---------------------------------------------------------------------------
// PPO loss

template <typename S>
struct PpoBatch {
  std::vector<int> actions;
  Tensor<S> logp_old;    // [N]
  Tensor<S> advantages;  // [N], already normalized per minibatch
  Tensor<S> returns;     // [N]
};

template <typename S>
struct PpoLossParts {
  int total = -1;    // scalar node to minimize
  int lclip = -1;    // clipped surrogate (to maximize)
  int lvf = -1;      // value MSE
  int entropy = -1;  // mean policy entropy
};

// loss = -(L_CLIP - c_v * L_VF + c_H * H) with
// L_CLIP = E[min(rho*A, clip(rho, 1-eps, 1+eps)*A)], rho = exp(logp - logp_old)
template <typename S>
PpoLossParts<S> ppo_loss(Graph<S>& g, int policy_logits, int values_vec, const PpoBatch<S>& b,
                         S clip_eps, S value_coef, S entropy_coef) {
  const int n = g.val(policy_logits).dim(0);
  if (static_cast<int>(b.actions.size()) != n || b.logp_old.dim(0) != n ||
      b.advantages.dim(0) != n || b.returns.dim(0) != n)
    throw UsageError("ppo_loss: batch length mismatch");

  const int ls = log_softmax_rows(g, policy_logits);
  const int logp = gather_rows(g, ls, b.actions);
  const int ratio = exp_(g, sub(g, logp, g.constant(b.logp_old)));
  const int surr1 = mul_const(g, ratio, b.advantages);
  const int surr2 = mul_const(g, clip(g, ratio, 1 - clip_eps, 1 + clip_eps), b.advantages);
  const int lclip = mean_all(g, min_elem(g, surr1, surr2));

  const int verr = sub(g, values_vec, g.constant(b.returns));
  const int lvf = mean_all(g, mul(g, verr, verr));

  // H = -E[sum_a p log p]
  const int plogp = sum_rows(g, mul(g, exp_(g, ls), ls));
  const int entropy = scale(g, mean_all(g, plogp), static_cast<S>(-1));

  const int total = add_n(g, {scale(g, lclip, static_cast<S>(-1)),
                              scale(g, lvf, value_coef),
                              scale(g, entropy, -entropy_coef)});
  return {total, lclip, lvf, entropy};
}

// ---------------------------------------------------------------------------
// dueling Q head

// Q(s, a) = V(s) + A(s, a) - mean_a' A(s, a'). wv/bv/wa/ba are parameter
// store ids of the two projection heads.
template <typename S>
int dueling_q(Graph<S>& g, int features, int wv, int bv, int wa, int ba) {
  const int v = reshape(g, affine(g, features, g.param(wv), g.param(bv)),
                        {g.val(features).dim(0)});
  const int a = affine(g, features, g.param(wa), g.param(ba));
  const int n_actions = g.val(a).dim(1);
  const int centered = sub(g, a, broadcast_col(g, mean_rows(g, a), n_actions));
  return add(g, centered, broadcast_col(g, v, n_actions));
}

// mean Huber loss between Q(s, a_taken) and fixed targets
template <typename S>
int dqn_loss(Graph<S>& g, int q_values, const std::vector<int>& actions, Tensor<S> targets) {
  const int qa = gather_rows(g, q_values, actions);
  return mean_all(g, huber_to_target(g, qa, std::move(targets), static_cast<S>(1)));
}

inline double n_step_return(const std::vector<double>& rewards, double gamma) {
  double acc = 0, disc = 1;
  for (double r : rewards) {
    acc += disc * r;
    disc *= gamma;
  }
  return acc;
}

// r^(n) + gamma^n * Q_target(s_{t+n}, argmax_a Q_online) unless terminal
inline double dqn_target(double nstep_reward, int steps, double gamma, bool done,
                         double q_bootstrap) {
  return nstep_reward + (done ? 0.0 : std::pow(gamma, steps) * q_bootstrap);
}

// rescales all trainable gradients so their global L2 norm is at most
// max_norm; returns the pre-clip norm
template <typename S>
double clip_gradients(ParameterStore<S>& store, double max_norm) {
  double sq = 0;
  for (int i = 0; i < store.count(); ++i) {
    if (!store.entry(i).trainable) continue;
    sq += static_cast<double>(store.grad(i).data.square().sum());
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / (norm + 1e-12));
    for (int i = 0; i < store.count(); ++i) {
      if (!store.entry(i).trainable) continue;
      store.grad(i).data *= scale;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Adam over a parameter store

template <typename S>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(S lr, S alpha_lr_mult = 1, S beta1 = static_cast<S>(0.9),
                         S beta2 = static_cast<S>(0.999), S eps = static_cast<S>(1e-8))
      : lr_(lr), alpha_mult_(alpha_lr_mult), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore<S>& store) {
    if (m_.empty()) {
      m_.resize(static_cast<size_t>(store.count()));
      v_.resize(static_cast<size_t>(store.count()));
      for (int i = 0; i < store.count(); ++i) {
        m_[static_cast<size_t>(i)] = Tensor<S>(store.value(i).shape);
        v_[static_cast<size_t>(i)] = Tensor<S>(store.value(i).shape);
      }
    }
    if (static_cast<int>(m_.size()) != store.count())
      throw UsageError("optimizer bound to a different store");
    ++t_;
    const S bc1 = 1 - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = 1 - std::pow(beta2_, static_cast<S>(t_));
    for (int i = 0; i < store.count(); ++i) {
      auto& e = store.entry(i);
      if (!e.trainable) continue;
      const S lr = e.is_alpha ? lr_ * alpha_mult_ : lr_;
      auto& m = m_[static_cast<size_t>(i)].data;
      auto& v = v_[static_cast<size_t>(i)].data;
      m = beta1_ * m + (1 - beta1_) * e.grad.data;
      v = beta2_ * v + (1 - beta2_) * e.grad.data.square();
      e.value.data -= lr * (m / bc1) / ((v / bc2).sqrt() + eps_);
    }
  }

  long long steps_taken() const { return t_; }

 private:
  S lr_, alpha_mult_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

// ---------------------------------------------------------------------------
// uniform replay

struct Transition {
  std::vector<uint8_t> obs;       // encoded observation bytes
  std::vector<uint8_t> next_obs;  // observation n steps later
  int action = 0;
  float reward = 0;  // n-step discounted aggregate
  bool done = false;
  int steps = 1;  // effective n (shorter at episode ends)
};

class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, uint64_t seed) : capacity_(capacity), rng_(Rng(seed).derive(0x7265706c)) {
    if (capacity < 1) throw ConfigError("replay capacity must be positive");
    items_.reserve(static_cast<size_t>(capacity));
  }

  void add(Transition t) {
    if (static_cast<int>(items_.size()) < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[static_cast<size_t>(pos_)] = std::move(t);
    }
    pos_ = (pos_ + 1) % capacity_;
  }

  int size() const { return static_cast<int>(items_.size()); }
  const Transition& item(int i) const { return items_.at(static_cast<size_t>(i)); }

  // uniform sample of distinct indices (Floyd's algorithm)
  std::vector<int> sample_indices(int batch) {
    const int n = size();
    if (batch > n) throw UsageError("replay sample larger than buffer");
    std::vector<int> out;
    out.reserve(static_cast<size_t>(batch));
    for (int i = n - batch; i < n; ++i) {
      const int j = rng_.uniform_int(i + 1);
      bool dup = false;
      for (int x : out) {
        if (x == j) {
          dup = true;
          break;
        }
      }
      out.push_back(dup ? i : j);
    }
    return out;
  }

 private:
  int capacity_;
  int pos_ = 0;
  std::vector<Transition> items_;
  Rng rng_;
};

}  // namespace rldarts
