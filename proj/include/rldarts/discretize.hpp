#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rldarts/searchspace.hpp"

namespace rldarts {

// Post-softmax operation probabilities for one edge (i, j).
struct EdgeProbs {
  int from = 0;
  int to = 1;
  std::vector<double> p;  // indexed by OpSet order, sums to 1
};

// One cell role's probabilities (normal or reduction).
struct RoleProbs {
  std::string role;   // "normal" | "reduction"
  std::string opset;  // builtin op set name
  std::vector<EdgeProbs> edges;
};

// Architecture state at a training step, recorded post-softmax.
struct AlphaSnapshot {
  long long step = 0;
  std::vector<RoleProbs> roles;

  const RoleProbs* find_role(const std::string& role) const;
  void validate() const;  // probability vectors sum to 1 +- 1e-9
};

// Discretized normal cell plus the reduction cell when the config has one.
struct CellChoice {
  DiscreteCell normal;
  std::optional<DiscreteCell> reduction;

  bool operator==(const CellChoice&) const = default;
};

// Argmax step of the discretization: per edge, the strongest non-Zero op and
// its raw probability (no renormalization after excluding Zero). The op
// choice is temperature invariant; the strength ORDER across edges is not.
struct EdgePick {
  int from = 0;
  int to = 1;
  OpName op = OpName::Skip;
  double strength = 0;
};
std::vector<EdgePick> edge_picks(const RoleProbs& probs);

// Argmax + top-K pruning: per edge the strongest non-Zero op (strength =
// that op's probability, no renormalization); per node j the min(K, j)
// strongest incoming edges. Ties: lowest op-set index, then lowest
// predecessor index.
DiscreteCell discretize_role(const RoleProbs& probs, int top_k, MergeMode merge);

CellChoice discretize(const AlphaSnapshot& snap, int top_k, MergeMode merge);

// Discretize each snapshot in step order and keep only entries that differ
// from the previously emitted cell; the first snapshot is always emitted.
std::vector<std::pair<long long, CellChoice>> distinct_cell_sequence(
    const std::vector<AlphaSnapshot>& snapshots, int top_k, MergeMode merge);

// one snapshot per line
std::string snapshot_to_json(const AlphaSnapshot& snap);
AlphaSnapshot snapshot_from_json(const std::string& text);
void write_snapshot_jsonl(const std::vector<AlphaSnapshot>& snaps, const std::string& path);
std::vector<AlphaSnapshot> read_snapshot_jsonl(const std::string& path);

}  // namespace rldarts
