#include "rldarts/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace rldarts {

using nlohmann::json;

const RoleProbs* AlphaSnapshot::find_role(const std::string& role) const {
  for (const auto& r : roles)
    if (r.role == role) return &r;
  return nullptr;
}

void AlphaSnapshot::validate() const {
  for (const auto& r : roles)
    for (const auto& e : r.edges) {
      double s = 0;
      for (double v : e.p) s += v;
      if (std::fabs(s - 1.0) > 1e-9)
        throw UsageError("alpha snapshot edge probabilities must sum to 1");
    }
}

std::vector<EdgePick> edge_picks(const RoleProbs& probs) {
  const OpSet opset = builtin_opset(probs.opset);
  const int zero = opset.zero_index();
  std::vector<EdgePick> picks;
  picks.reserve(probs.edges.size());
  for (const auto& e : probs.edges) {
    if (static_cast<int>(e.p.size()) != opset.size())
      throw UsageError("edge probability vector length does not match op set");
    int best = -1;
    for (int k = 0; k < opset.size(); ++k) {
      if (k == zero) continue;
      // strict inequality keeps the lowest op-set index on ties
      if (best < 0 || e.p[static_cast<size_t>(k)] > e.p[static_cast<size_t>(best)]) best = k;
    }
    picks.push_back({e.from, e.to, opset.ops[static_cast<size_t>(best)].name,
                     e.p[static_cast<size_t>(best)]});
  }
  return picks;
}

DiscreteCell discretize_role(const RoleProbs& probs, int top_k, MergeMode merge) {
  const OpSet opset = builtin_opset(probs.opset);

  struct Pick {
    int from;
    OpName op;
    double strength;
  };
  std::map<int, std::vector<Pick>> by_node;
  int icount = 0;
  for (const auto& pick : edge_picks(probs)) {
    by_node[pick.to].push_back({pick.from, pick.op, pick.strength});
    icount = std::max(icount, pick.to);
  }

  DiscreteCell cell;
  cell.merge = merge;
  cell.nodes.resize(static_cast<size_t>(icount));
  for (auto& [node, picks] : by_node) {
    // strongest first; equal strengths fall back to the lower predecessor
    std::stable_sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
      if (a.strength != b.strength) return a.strength > b.strength;
      return a.from < b.from;
    });
    const int keep = std::min(top_k, node);
    picks.resize(static_cast<size_t>(std::min<size_t>(picks.size(), static_cast<size_t>(keep))));
    std::sort(picks.begin(), picks.end(),
              [](const Pick& a, const Pick& b) { return a.from < b.from; });
    for (const auto& p : picks)
      cell.nodes[static_cast<size_t>(node - 1)].push_back({p.from, p.op});
  }
  cell.validate(&opset);
  return cell;
}

CellChoice discretize(const AlphaSnapshot& snap, int top_k, MergeMode merge) {
  const RoleProbs* normal = snap.find_role("normal");
  if (!normal) throw UsageError("alpha snapshot has no normal role");
  CellChoice out;
  out.normal = discretize_role(*normal, top_k, merge);
  if (const RoleProbs* red = snap.find_role("reduction"))
    out.reduction = discretize_role(*red, top_k, merge);
  return out;
}

std::vector<std::pair<long long, CellChoice>> distinct_cell_sequence(
    const std::vector<AlphaSnapshot>& snapshots, int top_k, MergeMode merge) {
  std::vector<std::pair<long long, CellChoice>> out;
  for (const auto& snap : snapshots) {
    CellChoice c = discretize(snap, top_k, merge);
    if (out.empty() || !(out.back().second == c)) out.emplace_back(snap.step, std::move(c));
  }
  return out;
}

std::string snapshot_to_json(const AlphaSnapshot& snap) {
  json j;
  j["step"] = snap.step;
  j["roles"] = json::array();
  for (const auto& r : snap.roles) {
    json jr;
    jr["role"] = r.role;
    jr["opset"] = r.opset;
    jr["edges"] = json::array();
    for (const auto& e : r.edges)
      jr["edges"].push_back({{"from", e.from}, {"to", e.to}, {"p", e.p}});
    j["roles"].push_back(std::move(jr));
  }
  return j.dump();
}

AlphaSnapshot snapshot_from_json(const std::string& text) {
  AlphaSnapshot snap;
  try {
    const json j = json::parse(text);
    snap.step = j.at("step").get<long long>();
    for (const auto& jr : j.at("roles")) {
      RoleProbs r;
      r.role = jr.at("role").get<std::string>();
      r.opset = jr.at("opset").get<std::string>();
      for (const auto& je : jr.at("edges")) {
        EdgeProbs e;
        e.from = je.at("from").get<int>();
        e.to = je.at("to").get<int>();
        e.p = je.at("p").get<std::vector<double>>();
        r.edges.push_back(std::move(e));
      }
      snap.roles.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("alpha snapshot parse error: ") + e.what());
  }
  return snap;
}

void write_snapshot_jsonl(const std::vector<AlphaSnapshot>& snaps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  for (const auto& s : snaps) out << snapshot_to_json(s) << "\n";
}

std::vector<AlphaSnapshot> read_snapshot_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::vector<AlphaSnapshot> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(snapshot_from_json(line));
  }
  return out;
}

}  // namespace rldarts
