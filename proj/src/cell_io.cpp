#include "rldarts/cell_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rldarts {

using nlohmann::json;

std::string cell_to_json(const DiscreteCell& cell, int indent) {
  json j;
  j["merge"] = to_string(cell.merge);
  j["nodes"] = json::array();
  for (int n = 1; n <= cell.intermediate_nodes(); ++n) {
    json node;
    node["node"] = n;
    node["edges"] = json::array();
    for (const auto& e : cell.nodes[static_cast<size_t>(n - 1)]) {
      node["edges"].push_back({{"from", e.from}, {"op", to_string(e.op)}});
    }
    j["nodes"].push_back(std::move(node));
  }
  return j.dump(indent);
}

DiscreteCell cell_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("cell JSON parse error: ") + e.what());
  }
  DiscreteCell cell;
  try {
    cell.merge = merge_from_string(j.at("merge").get<std::string>());
    const auto& nodes = j.at("nodes");
    cell.nodes.resize(nodes.size());
    for (const auto& node : nodes) {
      const int n = node.at("node").get<int>();
      if (n < 1 || n > static_cast<int>(nodes.size()))
        throw ConfigError("cell JSON: node index " + std::to_string(n) + " out of range");
      auto& edges = cell.nodes[static_cast<size_t>(n - 1)];
      if (!edges.empty()) throw ConfigError("cell JSON: duplicate node " + std::to_string(n));
      for (const auto& e : node.at("edges")) {
        edges.push_back({e.at("from").get<int>(),
                         op_from_string(e.at("op").get<std::string>())});
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cell JSON structure error: ") + e.what());
  }
  cell.validate();
  return cell;
}

void write_cell_json(const DiscreteCell& cell, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << cell_to_json(cell) << "\n";
}

DiscreteCell read_cell_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return cell_from_json(ss.str());
}

std::string cell_to_dot(const DiscreteCell& cell, const std::string& title) {
  std::ostringstream os;
  os << "digraph \"" << title << "\" {\n";
  os << "  rankdir=LR;\n";
  os << "  node [shape=box, style=rounded, fontsize=10];\n";
  os << "  n0 [label=\"input\", style=filled, fillcolor=lightgray];\n";
  for (int n = 1; n <= cell.intermediate_nodes(); ++n)
    os << "  n" << n << " [label=\"node " << n << "\"];\n";
  for (int n = 1; n <= cell.intermediate_nodes(); ++n)
    for (const auto& e : cell.nodes[static_cast<size_t>(n - 1)])
      os << "  n" << e.from << " -> n" << n << " [label=\"" << to_string(e.op) << "\"];\n";
  os << "  out [label=\"" << to_string(cell.merge) << "\", style=filled, fillcolor=lightblue];\n";
  if (cell.merge == MergeMode::ConcatConv1x1) {
    for (int n = 1; n <= cell.intermediate_nodes(); ++n) os << "  n" << n << " -> out;\n";
  } else {
    os << "  n" << cell.intermediate_nodes() << " -> out;\n";
  }
  os << "}\n";
  return os.str();
}

void write_cell_dot(const DiscreteCell& cell, const std::string& path, const std::string& title) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << cell_to_dot(cell, title);
}

}  // namespace rldarts
