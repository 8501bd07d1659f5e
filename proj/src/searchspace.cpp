#include "rldarts/searchspace.hpp"

#include <algorithm>
#include <limits>

namespace rldarts {

const char* to_string(OpName op) {
  switch (op) {
    case OpName::Zero: return "Zero";
    case OpName::Skip: return "Skip";
    case OpName::Conv3x3ReLU: return "Conv3x3ReLU";
    case OpName::Conv5x5ReLU: return "Conv5x5ReLU";
    case OpName::DilConv3x3ReLU: return "DilConv3x3ReLU";
    case OpName::DilConv5x5ReLU: return "DilConv5x5ReLU";
    case OpName::Conv3x3: return "Conv3x3";
    case OpName::Conv5x5: return "Conv5x5";
    case OpName::DilConv3x3: return "DilConv3x3";
    case OpName::DilConv5x5: return "DilConv5x5";
    case OpName::MaxPool3x3: return "MaxPool3x3";
    case OpName::AvgPool3x3: return "AvgPool3x3";
    case OpName::ReLU: return "ReLU";
    case OpName::Tanh: return "Tanh";
  }
  throw UsageError("unknown OpName");
}

OpName op_from_string(const std::string& s) {
  static const OpName all[] = {
      OpName::Zero,        OpName::Skip,        OpName::Conv3x3ReLU,
      OpName::Conv5x5ReLU, OpName::DilConv3x3ReLU, OpName::DilConv5x5ReLU,
      OpName::Conv3x3,     OpName::Conv5x5,     OpName::DilConv3x3,
      OpName::DilConv5x5,  OpName::MaxPool3x3,  OpName::AvgPool3x3,
      OpName::ReLU,        OpName::Tanh,
  };
  for (OpName op : all)
    if (s == to_string(op)) return op;
  throw ConfigError("unknown op name: " + s);
}

OpKind make_op(OpName name, int stride) {
  bool weights = false;
  switch (name) {
    case OpName::Conv3x3ReLU:
    case OpName::Conv5x5ReLU:
    case OpName::DilConv3x3ReLU:
    case OpName::DilConv5x5ReLU:
    case OpName::Conv3x3:
    case OpName::Conv5x5:
    case OpName::DilConv3x3:
    case OpName::DilConv5x5:
      weights = true;
      break;
    default:
      break;
  }
  return OpKind{name, stride, weights};
}

ConvSpec conv_spec(OpName op) {
  switch (op) {
    case OpName::Conv3x3ReLU: return {3, 1, true};
    case OpName::Conv5x5ReLU: return {5, 1, true};
    case OpName::DilConv3x3ReLU: return {3, 2, true};
    case OpName::DilConv5x5ReLU: return {5, 2, true};
    case OpName::Conv3x3: return {3, 1, false};
    case OpName::Conv5x5: return {5, 1, false};
    case OpName::DilConv3x3: return {3, 2, false};
    case OpName::DilConv5x5: return {5, 2, false};
    default: throw UsageError(std::string("op has no conv spec: ") + to_string(op));
  }
}

int OpSet::zero_index() const { return find(OpName::Zero); }
int OpSet::skip_index() const { return find(OpName::Skip); }

int OpSet::find(OpName op) const {
  for (int i = 0; i < size(); ++i)
    if (ops[static_cast<size_t>(i)].name == op) return i;
  return -1;
}

std::vector<int> OpSet::nonzero_indices() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (ops[static_cast<size_t>(i)].name != OpName::Zero) out.push_back(i);
  return out;
}

void OpSet::validate() const {
  int zeros = 0, skips = 0;
  for (const auto& op : ops) {
    if (op.name == OpName::Zero) ++zeros;
    if (op.name == OpName::Skip) ++skips;
  }
  if (zeros != 1 || skips != 1)
    throw ConfigError("op set '" + name + "' must contain Zero and Skip exactly once");
  for (size_t i = 0; i < ops.size(); ++i)
    for (size_t j = i + 1; j < ops.size(); ++j)
      if (ops[i].name == ops[j].name)
        throw ConfigError("op set '" + name + "' has a duplicate op");
}

OpSet builtin_opset(const std::string& name) {
  OpSet s;
  s.name = name;
  if (name == "classic_normal") {
    s.ops = {make_op(OpName::Zero), make_op(OpName::Skip), make_op(OpName::Conv3x3ReLU),
             make_op(OpName::Conv5x5ReLU), make_op(OpName::DilConv3x3ReLU),
             make_op(OpName::DilConv5x5ReLU)};
  } else if (name == "classic_normal_norelu") {
    s.ops = {make_op(OpName::Zero), make_op(OpName::Skip), make_op(OpName::Conv3x3),
             make_op(OpName::Conv5x5), make_op(OpName::DilConv3x3),
             make_op(OpName::DilConv5x5)};
  } else if (name == "classic_reduction") {
    s.ops = {make_op(OpName::Zero, 2), make_op(OpName::Skip, 2), make_op(OpName::Conv3x3, 2),
             make_op(OpName::MaxPool3x3, 2), make_op(OpName::AvgPool3x3, 2)};
  } else if (name == "micro") {
    s.ops = {make_op(OpName::Zero), make_op(OpName::Skip), make_op(OpName::Conv3x3),
             make_op(OpName::ReLU), make_op(OpName::Tanh)};
  } else {
    throw ConfigError("unknown op set: " + name);
  }
  s.validate();
  return s;
}

std::vector<std::pair<int, int>> CellTopology::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(edge_count()));
  for (int j = 1; j <= intermediate_nodes; ++j)
    for (int i = 0; i < j; ++i) out.emplace_back(i, j);
  return out;
}

int CellTopology::edge_index(int i, int j) const {
  if (j < 1 || j > intermediate_nodes || i < 0 || i >= j)
    throw UsageError("unknown edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  return j * (j - 1) / 2 + i;
}

const char* to_string(MergeMode m) {
  return m == MergeMode::ConcatConv1x1 ? "concat_conv1x1" : "last_node";
}

MergeMode merge_from_string(const std::string& s) {
  if (s == "concat_conv1x1") return MergeMode::ConcatConv1x1;
  if (s == "last_node") return MergeMode::LastNode;
  throw ConfigError("unknown merge mode: " + s);
}

void DiscreteCell::validate(const OpSet* opset) const {
  const int icount = intermediate_nodes();
  if (icount < 1) throw ConfigError("cell must have at least one intermediate node");
  int inferred_k = 0;
  for (const auto& edges : nodes)
    inferred_k = std::max(inferred_k, static_cast<int>(edges.size()));
  for (int j = 1; j <= icount; ++j) {
    const auto& edges = nodes[static_cast<size_t>(j - 1)];
    if (static_cast<int>(edges.size()) != std::min(inferred_k, j))
      throw ConfigError("node " + std::to_string(j) + " must keep min(K, j) incoming edges");
    for (size_t a = 0; a < edges.size(); ++a) {
      const auto& e = edges[a];
      if (e.from < 0 || e.from >= j)
        throw ConfigError("node " + std::to_string(j) + " has a predecessor out of range");
      if (e.op == OpName::Zero) throw ConfigError("discrete cells must not contain Zero ops");
      if (opset && opset->find(e.op) < 0)
        throw ConfigError(std::string("op not in set: ") + to_string(e.op));
      for (size_t b = a + 1; b < edges.size(); ++b)
        if (edges[b].from == e.from)
          throw ConfigError("node " + std::to_string(j) + " has duplicate edges from node " +
                            std::to_string(e.from));
    }
  }
}

namespace {

uint64_t binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<uint64_t>(n - k + i) / static_cast<uint64_t>(i);
  return r;
}

uint64_t checked_mul(uint64_t a, uint64_t b) {
  if (a != 0 && b > std::numeric_limits<uint64_t>::max() / a)
    throw UsageError("search_space_size overflows uint64");
  return a * b;
}

// lexicographic unranking of an m-subset of {0..n-1}
std::vector<int> unrank_combination(uint64_t rank, int n, int m) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(m));
  int next = 0;
  for (int k = m; k >= 1; --k) {
    for (int c = next;; ++c) {
      const uint64_t block = binom(n - 1 - c, k - 1);
      if (rank < block) {
        out.push_back(c);
        next = c + 1;
        break;
      }
      rank -= block;
    }
  }
  return out;
}

}  // namespace

uint64_t search_space_size(int o_nz, int intermediate_nodes, int top_k) {
  if (o_nz < 1 || intermediate_nodes < 1 || top_k < 1 || top_k > 2)
    throw UsageError("search_space_size: need O_nz >= 1, I >= 1, 1 <= K <= 2");
  uint64_t total = static_cast<uint64_t>(o_nz);
  for (int i = 2; i <= intermediate_nodes; ++i) {
    const int m = std::min(top_k, i);
    uint64_t node_choices = binom(i, m);
    for (int t = 0; t < m; ++t) node_choices = checked_mul(node_choices, static_cast<uint64_t>(o_nz));
    total = checked_mul(total, node_choices);
  }
  return total;
}

DiscreteCell sample_random_cell(Rng& rng, const OpSet& opset, const CellTopology& topo,
                                MergeMode merge) {
  opset.validate();
  const auto nz = opset.nonzero_indices();
  DiscreteCell cell;
  cell.merge = merge;
  cell.nodes.resize(static_cast<size_t>(topo.intermediate_nodes));
  for (int j = 1; j <= topo.intermediate_nodes; ++j) {
    const int m = topo.in_degree(j);
    const uint64_t total = binom(j, m);
    const uint64_t rank = total == 1 ? 0
                                     : static_cast<uint64_t>(rng.uniform_int(static_cast<int>(total)));
    auto preds = unrank_combination(rank, j, m);
    auto& edges = cell.nodes[static_cast<size_t>(j - 1)];
    for (int p : preds) {
      const int k = nz[static_cast<size_t>(rng.uniform_int(static_cast<int>(nz.size())))];
      edges.push_back({p, opset.ops[static_cast<size_t>(k)].name});
    }
  }
  cell.validate(&opset);
  return cell;
}

std::vector<DiscreteCell> enumerate_cells(const OpSet& opset, const CellTopology& topo,
                                          MergeMode merge) {
  opset.validate();
  const uint64_t size = search_space_size(opset.nonzero_count(), topo.intermediate_nodes,
                                          topo.top_k);
  if (size > 1000000ULL)
    throw UsageError("enumerate_cells: space has " + std::to_string(size) +
                     " cells, refusing above 1000000");
  const auto nz = opset.nonzero_indices();
  std::vector<DiscreteCell> out;
  out.reserve(static_cast<size_t>(size));
  DiscreteCell cur;
  cur.merge = merge;
  cur.nodes.resize(static_cast<size_t>(topo.intermediate_nodes));

  auto rec = [&](auto&& self, int j) -> void {
    if (j > topo.intermediate_nodes) {
      out.push_back(cur);
      return;
    }
    const int m = topo.in_degree(j);
    const uint64_t combos = binom(j, m);
    for (uint64_t r = 0; r < combos; ++r) {
      const auto preds = unrank_combination(r, j, m);
      std::vector<int> ops(static_cast<size_t>(m), 0);
      for (;;) {
        auto& edges = cur.nodes[static_cast<size_t>(j - 1)];
        edges.clear();
        for (int t = 0; t < m; ++t)
          edges.push_back({preds[static_cast<size_t>(t)],
                           opset.ops[static_cast<size_t>(nz[static_cast<size_t>(
                               ops[static_cast<size_t>(t)])])].name});
        self(self, j + 1);
        int d = m - 1;
        while (d >= 0) {
          if (++ops[static_cast<size_t>(d)] < static_cast<int>(nz.size())) break;
          ops[static_cast<size_t>(d)] = 0;
          --d;
        }
        if (d < 0) break;
      }
    }
  };
  rec(rec, 1);
  return out;
}

}  // namespace rldarts
