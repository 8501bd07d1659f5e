#pragma once

#include <string>

#include "rldarts/searchspace.hpp"

namespace rldarts {

// {"merge": "...", "nodes": [{"node": j, "edges": [{"from": i, "op": "..."}]}]}
std::string cell_to_json(const DiscreteCell& cell, int indent = 2);
DiscreteCell cell_from_json(const std::string& text);

void write_cell_json(const DiscreteCell& cell, const std::string& path);
DiscreteCell read_cell_json(const std::string& path);

// Graphviz drawing of the cell DAG (input, intermediate nodes, merge).
std::string cell_to_dot(const DiscreteCell& cell, const std::string& title = "cell");
void write_cell_dot(const DiscreteCell& cell, const std::string& path,
                    const std::string& title = "cell");

}  // namespace rldarts
