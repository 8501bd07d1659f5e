#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rldarts/discretize.hpp"
#include "rldarts/ops.hpp"
#include "rldarts/searchspace.hpp"

namespace rldarts {

// Network shape shared by the supernet, its discretized networks and the
// residual baseline: D blocks, each holding N normal and R reduction cells
// at a per-block channel depth. With R = 0 the block ends in the fixed
// Conv3x3 + MaxPool3x3(stride 2) reduction instead of searched cells.
struct SupernetConfig {
  int normal_cells = 2;        // N
  int reduction_cells = 0;     // R
  int intermediate_nodes = 4;  // I
  int blocks = 2;              // D
  int top_k = 2;               // K
  std::vector<int> depths;     // channel depth per block, length D
  MergeMode merge = MergeMode::ConcatConv1x1;
  std::string normal_opset = "micro";
  std::string reduction_opset = "classic_reduction";
  double temperature = 0.2;
  int feature_dim = 256;

  CellTopology topology() const { return CellTopology{intermediate_nodes, top_k}; }

  void validate() const {
    if (blocks < 1 || normal_cells < 0 || reduction_cells < 0 || intermediate_nodes < 1)
      throw ConfigError("supernet config: counts must be positive");
    if (top_k < 1 || top_k > 2) throw ConfigError("supernet config: K must be 1 or 2");
    if (static_cast<int>(depths.size()) != blocks)
      throw ConfigError("supernet config: depths length must equal block count");
    for (int d : depths)
      if (d < 1) throw ConfigError("supernet config: depths must be positive");
    if (temperature <= 0) throw ConfigError("supernet config: temperature must be positive");
    builtin_opset(normal_opset);
    if (reduction_cells > 0) builtin_opset(reduction_opset);
  }
};

// Trainable architecture logits for one cell role. All stacked cells of the
// role share this one instance (alpha weight sharing); probabilities are
// softmax(logits / temperature).
template <typename S>
struct ArchParams {
  OpSet opset;
  CellTopology topo;
  S temperature = 1;
  std::string role = "normal";
  std::vector<int> logits;  // store param id per edge, topo.edges() order
  bool frozen = false;

  static ArchParams create(ParameterStore<S>& store, OpSet opset, CellTopology topo,
                           S temperature, std::string role) {
    opset.validate();
    ArchParams a;
    a.opset = std::move(opset);
    a.topo = topo;
    a.temperature = temperature;
    a.role = std::move(role);
    for (auto [i, j] : topo.edges()) {
      const int pid = store.add("alpha/" + a.role + "/e" + std::to_string(i) + "_" +
                                    std::to_string(j),
                                Tensor<S>({a.opset.size()}));
      store.entry(pid).is_alpha = true;
      a.logits.push_back(pid);
    }
    return a;
  }

  int edge_param(int edge_index) const {
    if (edge_index < 0 || edge_index >= static_cast<int>(logits.size()))
      throw UsageError("unknown edge index " + std::to_string(edge_index));
    return logits[static_cast<size_t>(edge_index)];
  }

  // eager double-precision probabilities, used for snapshots and metrics
  std::vector<double> probs(const ParameterStore<S>& store, int edge_index) const {
    const auto& v = store.value(edge_param(edge_index)).data;
    std::vector<double> scaled(static_cast<size_t>(v.size()));
    double mx = -1e300;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      scaled[static_cast<size_t>(k)] = static_cast<double>(v[k]) / static_cast<double>(temperature);
      mx = std::max(mx, scaled[static_cast<size_t>(k)]);
    }
    double sum = 0;
    for (auto& x : scaled) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (auto& x : scaled) x /= sum;
    return scaled;
  }

  RoleProbs role_probs(const ParameterStore<S>& store) const {
    RoleProbs r;
    r.role = role;
    r.opset = opset.name;
    const auto edges = topo.edges();
    for (size_t k = 0; k < edges.size(); ++k)
      r.edges.push_back({edges[k].first, edges[k].second, probs(store, static_cast<int>(k))});
    return r;
  }

  double max_uniform_deviation(const ParameterStore<S>& store) const {
    const double u = 1.0 / static_cast<double>(opset.size());
    double dev = 0;
    for (size_t k = 0; k < logits.size(); ++k)
      for (double p : probs(store, static_cast<int>(k)))
        dev = std::max(dev, std::fabs(p - u));
    return dev;
  }

  // Writes logits encoding a cell: margin on the retained op of each cell
  // edge, margin on Zero for every other edge.
  void set_one_hot_from_cell(ParameterStore<S>& store, const DiscreteCell& cell, S margin) const {
    if (cell.intermediate_nodes() != topo.intermediate_nodes)
      throw UsageError("cell/topology mismatch in one-hot encoding");
    const int zero = opset.zero_index();
    const auto edges = topo.edges();
    for (size_t k = 0; k < edges.size(); ++k) {
      auto& v = store.value(logits[k]).data;
      v.setZero();
      const auto [i, j] = edges[k];
      int hit = -1;
      for (const auto& e : cell.nodes[static_cast<size_t>(j - 1)])
        if (e.from == i) hit = opset.find(e.op);
      if (hit >= 0)
        v[hit] = margin;
      else
        v[zero] = margin;
    }
  }

  void set_frozen(ParameterStore<S>& store, bool value) {
    frozen = value;
    for (int pid : logits) store.entry(pid).trainable = !value;
  }
};

// softmax(logits / temperature) node for one edge; differentiable w.r.t. the
// logits unless the alpha is frozen
template <typename S>
int edge_probs(Graph<S>& g, const ArchParams<S>& arch, int edge_index) {
  return softmax_vec(g, g.param(arch.edge_param(edge_index), !arch.frozen), arch.temperature);
}

// kernel + bias ids of one weighted op instance (-1 when weightless)
struct OpParams {
  int k = -1;
  int b = -1;
};

// Applies a vocabulary op to a feature map. stride comes from the edge
// (reduction cells stride only the edges leaving the cell input).
template <typename S>
int apply_op(Graph<S>& g, int x, OpName op, int stride, const OpParams& w) {
  switch (op) {
    case OpName::Zero:
      throw UsageError("Zero is never materialized as a node");
    case OpName::Skip:
      return stride == 1 ? x : subsample2(g, x);
    case OpName::MaxPool3x3:
      return pool2d(g, x, PoolKind::Max, stride);
    case OpName::AvgPool3x3:
      return pool2d(g, x, PoolKind::Avg, stride);
    case OpName::ReLU:
      return activation(g, stride == 1 ? x : subsample2(g, x), Act::Relu);
    case OpName::Tanh:
      return activation(g, stride == 1 ? x : subsample2(g, x), Act::TanhAct);
    default: {
      const ConvSpec spec = conv_spec(op);
      int y = bias_add(g, conv2d(g, x, g.param(w.k), stride, spec.dilation), g.param(w.b));
      if (spec.relu_after) y = activation(g, y, Act::Relu);
      return y;
    }
  }
}

// Continuous relaxation of one edge: sum over non-Zero ops of p_o * o(x).
// Zero contributes exactly nothing to the sum but still owns probability
// mass, so its logit shapes the softmax.
template <typename S>
int mixed_edge_forward(Graph<S>& g, int x, const ArchParams<S>& arch, int edge_index,
                       const std::vector<OpParams>& per_op, int stride) {
  const int p = edge_probs(g, arch, edge_index);
  std::vector<std::pair<int, int>> terms;
  for (int k = 0; k < arch.opset.size(); ++k) {
    const OpName op = arch.opset.ops[static_cast<size_t>(k)].name;
    if (op == OpName::Zero) continue;
    terms.emplace_back(index_scalar(g, p, k),
                       apply_op(g, x, op, stride, per_op[static_cast<size_t>(k)]));
  }
  return weighted_sum(g, terms);
}

template <typename S>
class EncoderBase {
 public:
  virtual ~EncoderBase() = default;
  // input: N x H x W x C node; returns the N x feature_dim node
  virtual int forward(Graph<S>& g, int input) const = 0;
  virtual int feature_dim() const = 0;
};

namespace detail {

template <typename S>
Tensor<S> init_conv(Rng& rng, int kh, int kw, int cin, int cout) {
  Tensor<S> t({kh, kw, cin, cout});
  const double stddev = std::sqrt(1.0 / (kh * kw * cin));
  for (long long i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<S>(stddev * rng.truncated_normal());
  return t;
}

template <typename S>
Tensor<S> init_dense(Rng& rng, int fin, int fout) {
  Tensor<S> t({fin, fout});
  const double stddev = std::sqrt(1.0 / fin);
  for (long long i = 0; i < t.size(); ++i)
    t.data[i] = static_cast<S>(stddev * rng.truncated_normal());
  return t;
}

inline void step_reduction(int& h, int& w) {
  if (h == 1 && w == 1)
    throw ConfigError("network has more reductions than the input resolution supports");
  h = (h + 1) / 2;
  w = (w + 1) / 2;
}

}  // namespace detail

// Weight-shared supernet encoder: every edge carries all ops of its role's
// vocabulary, combined by the shared alpha. Per-edge op weights are
// independent across cells; only alpha is shared.
template <typename S>
class SupernetEncoder : public EncoderBase<S> {
 public:
  SupernetEncoder(ParameterStore<S>& store, SupernetConfig cfg, std::array<int, 3> obs_hwc,
                  Rng rng)
      : cfg_(std::move(cfg)), store_(&store), obs_(obs_hwc) {
    cfg_.validate();
    normal_alpha_ = ArchParams<S>::create(store, builtin_opset(cfg_.normal_opset),
                                          cfg_.topology(),
                                          static_cast<S>(cfg_.temperature), "normal");
    if (cfg_.reduction_cells > 0)
      reduction_alpha_ = ArchParams<S>::create(store, builtin_opset(cfg_.reduction_opset),
                                               cfg_.topology(),
                                               static_cast<S>(cfg_.temperature), "reduction");
    build(store, rng);
  }

  int forward(Graph<S>& g, int input) const override {
    int x = input;
    if (pre_.k >= 0)
      x = bias_add(g, conv2d(g, x, g.param(pre_.k), 1, 1), g.param(pre_.b));
    for (const auto& blk : blocks_) {
      if (blk.adjust.k >= 0)
        x = bias_add(g, conv2d(g, x, g.param(blk.adjust.k), 1, 1), g.param(blk.adjust.b));
      for (const auto& cell : blk.cells) x = cell_forward(g, cell, x);
      if (blk.fixed_reduction) {
        x = bias_add(g, conv2d(g, x, g.param(blk.red.k), 1, 1), g.param(blk.red.b));
        x = pool2d(g, x, PoolKind::Max, 2);
      }
    }
    return head_forward(g, x);
  }

  int feature_dim() const override { return cfg_.feature_dim; }
  const SupernetConfig& config() const { return cfg_; }
  ArchParams<S>& normal_alpha() { return normal_alpha_; }
  const ArchParams<S>& normal_alpha() const { return normal_alpha_; }
  ArchParams<S>* reduction_alpha() {
    return reduction_alpha_ ? &*reduction_alpha_ : nullptr;
  }
  const ArchParams<S>* reduction_alpha() const {
    return reduction_alpha_ ? &*reduction_alpha_ : nullptr;
  }

  void set_frozen_alpha(bool value) {
    normal_alpha_.set_frozen(*store_, value);
    if (reduction_alpha_) reduction_alpha_->set_frozen(*store_, value);
  }

  AlphaSnapshot snapshot_alpha(long long step) const {
    AlphaSnapshot snap;
    snap.step = step;
    snap.roles.push_back(normal_alpha_.role_probs(*store_));
    if (reduction_alpha_) snap.roles.push_back(reduction_alpha_->role_probs(*store_));
    return snap;
  }

  double alpha_max_deviation() const {
    double dev = normal_alpha_.max_uniform_deviation(*store_);
    if (reduction_alpha_)
      dev = std::max(dev, reduction_alpha_->max_uniform_deviation(*store_));
    return dev;
  }

 private:
  struct Cell {
    bool reduction = false;
    // per topology edge, OpParams per op-set index
    std::vector<std::vector<OpParams>> edge_ops;
    OpParams merge;
  };
  struct Block {
    OpParams adjust;
    std::vector<Cell> cells;
    bool fixed_reduction = false;
    OpParams red;
  };

  void build(ParameterStore<S>& store, Rng& rng) {
    int h = obs_[0], w = obs_[1], c = obs_[2];
    if (cfg_.reduction_cells > 0) {
      pre_.k = store.add("pre/k", detail::init_conv<S>(rng, 3, 3, c, cfg_.depths[0]));
      pre_.b = store.add("pre/b", Tensor<S>({cfg_.depths[0]}));
      c = cfg_.depths[0];
    }
    const auto edges = cfg_.topology().edges();
    for (int d = 0; d < cfg_.blocks; ++d) {
      Block blk;
      const int depth = cfg_.depths[static_cast<size_t>(d)];
      const std::string bp = "blk" + std::to_string(d) + "/";
      if (c != depth) {
        blk.adjust.k = store.add(bp + "adjust/k", detail::init_conv<S>(rng, 1, 1, c, depth));
        blk.adjust.b = store.add(bp + "adjust/b", Tensor<S>({depth}));
        c = depth;
      }
      const int total_cells = cfg_.normal_cells + cfg_.reduction_cells;
      for (int cc = 0; cc < total_cells; ++cc) {
        const bool reduction = cc >= cfg_.normal_cells;
        const OpSet& opset = reduction ? reduction_alpha_->opset : normal_alpha_.opset;
        Cell cell;
        cell.reduction = reduction;
        const std::string cp = bp + "cell" + std::to_string(cc) + "/";
        for (const auto& [i, j] : edges) {
          std::vector<OpParams> per_op(static_cast<size_t>(opset.size()));
          for (int k = 0; k < opset.size(); ++k) {
            const OpKind& op = opset.ops[static_cast<size_t>(k)];
            if (!op.has_weights) continue;
            const ConvSpec spec = conv_spec(op.name);
            const std::string ep = cp + "e" + std::to_string(i) + "_" + std::to_string(j) +
                                   "/" + to_string(op.name);
            per_op[static_cast<size_t>(k)].k =
                store.add(ep + "/k", detail::init_conv<S>(rng, spec.ksize, spec.ksize, depth, depth));
            per_op[static_cast<size_t>(k)].b = store.add(ep + "/b", Tensor<S>({depth}));
          }
          cell.edge_ops.push_back(std::move(per_op));
        }
        if (cfg_.merge == MergeMode::ConcatConv1x1) {
          cell.merge.k = store.add(cp + "merge/k",
                                   detail::init_conv<S>(rng, 1, 1,
                                                        cfg_.intermediate_nodes * depth, depth));
          cell.merge.b = store.add(cp + "merge/b", Tensor<S>({depth}));
        }
        if (reduction) detail::step_reduction(h, w);
        blk.cells.push_back(std::move(cell));
      }
      if (cfg_.reduction_cells == 0) {
        blk.fixed_reduction = true;
        blk.red.k = store.add(bp + "red/k", detail::init_conv<S>(rng, 3, 3, depth, depth));
        blk.red.b = store.add(bp + "red/b", Tensor<S>({depth}));
        detail::step_reduction(h, w);
      }
      blocks_.push_back(std::move(blk));
    }
    flat_ = h * w * c;
    head_w_ = store.add("head/W", detail::init_dense<S>(rng, flat_, cfg_.feature_dim));
    head_b_ = store.add("head/b", Tensor<S>({cfg_.feature_dim}));
  }

  int cell_forward(Graph<S>& g, const Cell& cell, int input) const {
    const ArchParams<S>& alpha = cell.reduction ? *reduction_alpha_ : normal_alpha_;
    const auto edges = cfg_.topology().edges();
    std::vector<int> nodes{input};
    for (int j = 1; j <= cfg_.intermediate_nodes; ++j) {
      std::vector<int> contribs;
      for (size_t k = 0; k < edges.size(); ++k) {
        if (edges[k].second != j) continue;
        const int from = edges[k].first;
        const int stride = (cell.reduction && from == 0) ? 2 : 1;
        contribs.push_back(mixed_edge_forward(g, nodes[static_cast<size_t>(from)], alpha,
                                              static_cast<int>(k), cell.edge_ops[k], stride));
      }
      nodes.push_back(contribs.size() == 1 ? contribs[0] : add_n(g, contribs));
    }
    return merge_nodes(g, cell.merge, cfg_, nodes);
  }

  int head_forward(Graph<S>& g, int x) const {
    const auto& s = g.val(x).shape;
    const int flat = s[1] * s[2] * s[3];
    if (flat != flat_) throw ConfigError("input resolution does not match the built network");
    const int f = reshape(g, x, {s[0], flat});
    return affine(g, activation(g, f, Act::Relu), g.param(head_w_), g.param(head_b_));
  }

 public:
  // merge rule shared with the discrete network builder
  static int merge_nodes(Graph<S>& g, const OpParams& merge, const SupernetConfig& cfg,
                         const std::vector<int>& nodes) {
    if (cfg.merge == MergeMode::LastNode) return nodes.back();
    std::vector<int> feats(nodes.begin() + 1, nodes.end());
    const int cat = concat_channels(g, feats);
    return bias_add(g, conv2d(g, cat, g.param(merge.k), 1, 1), g.param(merge.b));
  }

 private:
  SupernetConfig cfg_;
  ParameterStore<S>* store_;
  std::array<int, 3> obs_;
  OpParams pre_;
  std::vector<Block> blocks_;
  int head_w_ = -1, head_b_ = -1;
  int flat_ = 0;
  ArchParams<S> normal_alpha_;
  std::optional<ArchParams<S>> reduction_alpha_;
};

// Sparse network built from discretized cells; same stacking and naming as
// the supernet so weights can be copied across by name.
template <typename S>
class DiscreteEncoder : public EncoderBase<S> {
 public:
  DiscreteEncoder(ParameterStore<S>& store, SupernetConfig cfg, DiscreteCell normal_cell,
                  std::optional<DiscreteCell> reduction_cell, std::array<int, 3> obs_hwc,
                  Rng rng)
      : cfg_(std::move(cfg)), obs_(obs_hwc), normal_cell_(std::move(normal_cell)),
        reduction_cell_(std::move(reduction_cell)) {
    cfg_.validate();
    const OpSet normal_ops = builtin_opset(cfg_.normal_opset);
    normal_cell_.validate(&normal_ops);
    if (normal_cell_.intermediate_nodes() != cfg_.intermediate_nodes)
      throw ConfigError("normal cell does not match the configured topology");
    if (cfg_.reduction_cells > 0) {
      if (!reduction_cell_) throw ConfigError("config has reduction cells but no reduction cell given");
      const OpSet red_ops = builtin_opset(cfg_.reduction_opset);
      reduction_cell_->validate(&red_ops);
      if (reduction_cell_->intermediate_nodes() != cfg_.intermediate_nodes)
        throw ConfigError("reduction cell does not match the configured topology");
    }
    build(store, rng);
  }

  int forward(Graph<S>& g, int input) const override {
    int x = input;
    if (pre_.k >= 0)
      x = bias_add(g, conv2d(g, x, g.param(pre_.k), 1, 1), g.param(pre_.b));
    for (const auto& blk : blocks_) {
      if (blk.adjust.k >= 0)
        x = bias_add(g, conv2d(g, x, g.param(blk.adjust.k), 1, 1), g.param(blk.adjust.b));
      for (const auto& cell : blk.cells) x = cell_forward(g, cell, x);
      if (blk.fixed_reduction) {
        x = bias_add(g, conv2d(g, x, g.param(blk.red.k), 1, 1), g.param(blk.red.b));
        x = pool2d(g, x, PoolKind::Max, 2);
      }
    }
    const auto& s = g.val(x).shape;
    const int flat = s[1] * s[2] * s[3];
    if (flat != flat_) throw ConfigError("input resolution does not match the built network");
    const int f = reshape(g, x, {s[0], flat});
    return affine(g, activation(g, f, Act::Relu), g.param(head_w_), g.param(head_b_));
  }

  int feature_dim() const override { return cfg_.feature_dim; }
  const SupernetConfig& config() const { return cfg_; }

 private:
  struct Edge {
    int from = 0, to = 1, stride = 1;
    OpName op = OpName::Skip;
    OpParams w;
  };
  struct Cell {
    std::vector<Edge> edges;
    OpParams merge;
  };
  struct Block {
    OpParams adjust;
    std::vector<Cell> cells;
    bool fixed_reduction = false;
    OpParams red;
  };

  void build(ParameterStore<S>& store, Rng& rng) {
    int h = obs_[0], w = obs_[1], c = obs_[2];
    if (cfg_.reduction_cells > 0) {
      pre_.k = store.add("pre/k", detail::init_conv<S>(rng, 3, 3, c, cfg_.depths[0]));
      pre_.b = store.add("pre/b", Tensor<S>({cfg_.depths[0]}));
      c = cfg_.depths[0];
    }
    for (int d = 0; d < cfg_.blocks; ++d) {
      Block blk;
      const int depth = cfg_.depths[static_cast<size_t>(d)];
      const std::string bp = "blk" + std::to_string(d) + "/";
      if (c != depth) {
        blk.adjust.k = store.add(bp + "adjust/k", detail::init_conv<S>(rng, 1, 1, c, depth));
        blk.adjust.b = store.add(bp + "adjust/b", Tensor<S>({depth}));
        c = depth;
      }
      const int total_cells = cfg_.normal_cells + cfg_.reduction_cells;
      for (int cc = 0; cc < total_cells; ++cc) {
        const bool reduction = cc >= cfg_.normal_cells;
        const DiscreteCell& proto = reduction ? *reduction_cell_ : normal_cell_;
        Cell cell;
        const std::string cp = bp + "cell" + std::to_string(cc) + "/";
        for (int j = 1; j <= proto.intermediate_nodes(); ++j) {
          for (const auto& e : proto.nodes[static_cast<size_t>(j - 1)]) {
            Edge edge;
            edge.from = e.from;
            edge.to = j;
            edge.op = e.op;
            edge.stride = (reduction && e.from == 0) ? 2 : 1;
            if (make_op(e.op).has_weights) {
              const ConvSpec spec = conv_spec(e.op);
              const std::string ep = cp + "e" + std::to_string(e.from) + "_" +
                                     std::to_string(j) + "/" + to_string(e.op);
              edge.w.k = store.add(ep + "/k",
                                   detail::init_conv<S>(rng, spec.ksize, spec.ksize, depth, depth));
              edge.w.b = store.add(ep + "/b", Tensor<S>({depth}));
            }
            cell.edges.push_back(edge);
          }
        }
        if (cfg_.merge == MergeMode::ConcatConv1x1) {
          cell.merge.k = store.add(cp + "merge/k",
                                   detail::init_conv<S>(rng, 1, 1,
                                                        cfg_.intermediate_nodes * depth, depth));
          cell.merge.b = store.add(cp + "merge/b", Tensor<S>({depth}));
        }
        if (reduction) detail::step_reduction(h, w);
        blk.cells.push_back(std::move(cell));
      }
      if (cfg_.reduction_cells == 0) {
        blk.fixed_reduction = true;
        blk.red.k = store.add(bp + "red/k", detail::init_conv<S>(rng, 3, 3, depth, depth));
        blk.red.b = store.add(bp + "red/b", Tensor<S>({depth}));
        detail::step_reduction(h, w);
      }
      blocks_.push_back(std::move(blk));
    }
    flat_ = h * w * c;
    head_w_ = store.add("head/W", detail::init_dense<S>(rng, flat_, cfg_.feature_dim));
    head_b_ = store.add("head/b", Tensor<S>({cfg_.feature_dim}));
  }

  int cell_forward(Graph<S>& g, const Cell& cell, int input) const {
    std::vector<int> nodes{input};
    for (int j = 1; j <= cfg_.intermediate_nodes; ++j) {
      std::vector<int> contribs;
      for (const auto& e : cell.edges) {
        if (e.to != j) continue;
        contribs.push_back(apply_op(g, nodes[static_cast<size_t>(e.from)], e.op, e.stride, e.w));
      }
      if (contribs.empty())
        throw ConfigError("discrete cell node " + std::to_string(j) + " has no incoming edges");
      nodes.push_back(contribs.size() == 1 ? contribs[0] : add_n(g, contribs));
    }
    return SupernetEncoder<S>::merge_nodes(g, cell.merge, cfg_, nodes);
  }

  SupernetConfig cfg_;
  std::array<int, 3> obs_;
  DiscreteCell normal_cell_;
  std::optional<DiscreteCell> reduction_cell_;
  OpParams pre_;
  std::vector<Block> blocks_;
  int head_w_ = -1, head_b_ = -1;
  int flat_ = 0;
};

// Residual conv encoder baseline. Per block: Conv -> MaxPool3x3 (stride 2)
// -> two residual units of [ReLU, Conv, ReLU, Conv] + skip, with the kernel
// size chosen by the variant.
template <typename S>
class BaselineEncoder : public EncoderBase<S> {
 public:
  BaselineEncoder(ParameterStore<S>& store, std::vector<int> depths, int ksize,
                  std::array<int, 3> obs_hwc, int feature_dim, Rng rng)
      : depths_(std::move(depths)), ksize_(ksize), obs_(obs_hwc), feature_dim_(feature_dim) {
    if (ksize_ != 3 && ksize_ != 5) throw ConfigError("baseline variant must be conv3x3 or conv5x5");
    int h = obs_[0], w = obs_[1], c = obs_[2];
    for (size_t d = 0; d < depths_.size(); ++d) {
      Block blk;
      const int depth = depths_[d];
      const std::string bp = "blk" + std::to_string(d) + "/";
      blk.lead.k = store.add(bp + "conv/k", detail::init_conv<S>(rng, ksize_, ksize_, c, depth));
      blk.lead.b = store.add(bp + "conv/b", Tensor<S>({depth}));
      c = depth;
      for (int r = 0; r < 2; ++r) {
        const std::string rp = bp + "res" + std::to_string(r) + "/";
        Res res;
        res.c1.k = store.add(rp + "conv1/k", detail::init_conv<S>(rng, ksize_, ksize_, depth, depth));
        res.c1.b = store.add(rp + "conv1/b", Tensor<S>({depth}));
        res.c2.k = store.add(rp + "conv2/k", detail::init_conv<S>(rng, ksize_, ksize_, depth, depth));
        res.c2.b = store.add(rp + "conv2/b", Tensor<S>({depth}));
        blk.res[static_cast<size_t>(r)] = res;
      }
      detail::step_reduction(h, w);
      blocks_.push_back(blk);
    }
    flat_ = h * w * c;
    head_w_ = store.add("head/W", detail::init_dense<S>(rng, flat_, feature_dim_));
    head_b_ = store.add("head/b", Tensor<S>({feature_dim_}));
  }

  int forward(Graph<S>& g, int input) const override {
    int x = input;
    for (const auto& blk : blocks_) {
      x = bias_add(g, conv2d(g, x, g.param(blk.lead.k), 1, 1), g.param(blk.lead.b));
      x = pool2d(g, x, PoolKind::Max, 2);
      for (const auto& res : blk.res) {
        int t = activation(g, x, Act::Relu);
        t = bias_add(g, conv2d(g, t, g.param(res.c1.k), 1, 1), g.param(res.c1.b));
        t = activation(g, t, Act::Relu);
        t = bias_add(g, conv2d(g, t, g.param(res.c2.k), 1, 1), g.param(res.c2.b));
        x = add(g, x, t);
      }
    }
    const auto& s = g.val(x).shape;
    const int flat = s[1] * s[2] * s[3];
    if (flat != flat_) throw ConfigError("input resolution does not match the built network");
    const int f = reshape(g, x, {s[0], flat});
    return affine(g, activation(g, f, Act::Relu), g.param(head_w_), g.param(head_b_));
  }

  int feature_dim() const override { return feature_dim_; }

 private:
  struct Res {
    OpParams c1, c2;
  };
  struct Block {
    OpParams lead;
    std::array<Res, 2> res;
  };

  std::vector<int> depths_;
  int ksize_;
  std::array<int, 3> obs_;
  int feature_dim_;
  std::vector<Block> blocks_;
  int head_w_ = -1, head_b_ = -1;
  int flat_ = 0;
};

// Copies every destination parameter whose name exists in the source.
// Returns the number of tensors copied.
template <typename S>
int copy_matching_params(const ParameterStore<S>& src, ParameterStore<S>& dst) {
  int copied = 0;
  for (int i = 0; i < dst.count(); ++i) {
    const int j = src.find(dst.entry(i).name);
    if (j < 0) continue;
    if (src.value(j).shape != dst.value(i).shape)
      throw UsageError("parameter shape mismatch for " + dst.entry(i).name);
    dst.value(i).data = src.value(j).data;
    ++copied;
  }
  return copied;
}

}  // namespace rldarts
