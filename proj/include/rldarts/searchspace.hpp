#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rldarts/common.hpp"

namespace rldarts {

// Operation vocabulary. Cells route feature maps through these; every op
// preserves the channel count within a cell.
enum class OpName {
  Zero,
  Skip,
  Conv3x3ReLU,
  Conv5x5ReLU,
  DilConv3x3ReLU,
  DilConv5x5ReLU,
  Conv3x3,
  Conv5x5,
  DilConv3x3,
  DilConv5x5,
  MaxPool3x3,
  AvgPool3x3,
  ReLU,
  Tanh,
};

const char* to_string(OpName op);
OpName op_from_string(const std::string& s);

struct OpKind {
  OpName name = OpName::Zero;
  int stride = 1;
  bool has_weights = false;

  bool operator==(const OpKind&) const = default;
};

OpKind make_op(OpName name, int stride = 1);

// kernel spatial extent and dilation for weighted ops
struct ConvSpec {
  int ksize = 0;
  int dilation = 1;
  bool relu_after = false;
};
ConvSpec conv_spec(OpName op);

// Ordered op vocabulary; the alpha logit at index k always refers to ops[k].
// Must contain Zero and Skip exactly once each.
struct OpSet {
  std::string name;
  std::vector<OpKind> ops;

  int size() const { return static_cast<int>(ops.size()); }
  int zero_index() const;
  int skip_index() const;
  int nonzero_count() const { return size() - 1; }
  int find(OpName op) const;
  // ops except Zero, in set order
  std::vector<int> nonzero_indices() const;
  void validate() const;
};

// classic_normal, classic_reduction, classic_normal_norelu, micro
OpSet builtin_opset(const std::string& name);

// Single-input cell DAG: node 0 is the cell input, nodes 1..I are
// intermediate. Node j may receive edges from any node index below j.
struct CellTopology {
  int intermediate_nodes = 4;
  int top_k = 2;

  int edge_count() const {
    return intermediate_nodes * (intermediate_nodes + 1) / 2;
  }
  int in_degree(int j) const { return std::min(top_k, j); }
  // all (i, j) pairs in the fixed order used for alpha indexing
  std::vector<std::pair<int, int>> edges() const;
  int edge_index(int i, int j) const;
};

enum class MergeMode { ConcatConv1x1, LastNode };
const char* to_string(MergeMode m);
MergeMode merge_from_string(const std::string& s);

struct CellEdge {
  int from = 0;
  OpName op = OpName::Skip;
  bool operator==(const CellEdge&) const = default;
};

// Sparse cell produced by discretization: per intermediate node j, its
// retained (predecessor, op) pairs. Never contains Zero.
struct DiscreteCell {
  MergeMode merge = MergeMode::ConcatConv1x1;
  std::vector<std::vector<CellEdge>> nodes;  // nodes[j-1] holds node j's edges

  int intermediate_nodes() const { return static_cast<int>(nodes.size()); }
  void validate(const OpSet* opset = nullptr) const;
  bool operator==(const DiscreteCell&) const = default;
};

// Number of distinct discrete cells: O_nz * prod_{i=2}^{I} (O_nz^K * C(i,K)).
// Throws on uint64 overflow.
uint64_t search_space_size(int o_nz, int intermediate_nodes, int top_k);

DiscreteCell sample_random_cell(Rng& rng, const OpSet& opset, const CellTopology& topo,
                                MergeMode merge = MergeMode::ConcatConv1x1);

// Exhaustive duplicate-free enumeration; refuses spaces above 10^6 cells with
// the computed size in the error message.
std::vector<DiscreteCell> enumerate_cells(const OpSet& opset, const CellTopology& topo,
                                          MergeMode merge = MergeMode::ConcatConv1x1);

}  // namespace rldarts
