#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rldarts/tensor.hpp"

namespace rldarts {

// Named leaf tensors with gradient slots. Parameters persist across graph
// instances; a Graph binds to a store for one forward/backward pass.
template <typename S>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
    bool trainable = true;
    bool is_alpha = false;  // architecture logits get the alpha lr multiplier
  };

  int add(std::string name, Tensor<S> value) {
    if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
    Entry e;
    e.name = std::move(name);
    e.grad = Tensor<S>(value.shape);
    e.value = std::move(value);
    entries_.push_back(std::move(e));
    index_[entries_.back().name] = static_cast<int>(entries_.size()) - 1;
    return static_cast<int>(entries_.size()) - 1;
  }

  int count() const { return static_cast<int>(entries_.size()); }
  Entry& entry(int id) { return entries_.at(static_cast<size_t>(id)); }
  const Entry& entry(int id) const { return entries_.at(static_cast<size_t>(id)); }
  Tensor<S>& value(int id) { return entry(id).value; }
  const Tensor<S>& value(int id) const { return entry(id).value; }
  Tensor<S>& grad(int id) { return entry(id).grad; }
  const Tensor<S>& grad(int id) const { return entry(id).grad; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  void zero_grads() {
    for (auto& e : entries_) e.grad.data.setZero();
  }

  long long parameter_count() const {
    long long n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Reverse-mode tape. Nodes are primitive applications with input indices;
// insertion order is the topological order. Values are computed eagerly at
// node creation; backward() walks the tape in reverse and accumulates exact
// gradients, writing parameter gradients back to the bound store.
//
// A graph is single-threaded during a forward/backward pass; distinct graphs
// share no mutable state and may run on distinct threads.
template <typename S>
class Graph {
 public:
  using BackFn = std::function<void(Graph&, int)>;

  explicit Graph(ParameterStore<S>* store = nullptr) : store_(store) {}

  int constant(Tensor<S> v) { return push(std::move(v), {}, nullptr, false, -1); }

  int input(Tensor<S> v, bool needs_grad = false) {
    return push(std::move(v), {}, nullptr, needs_grad, -1);
  }

  // leaf bound to a store entry; value is copied at bind time
  int param(int param_id, bool needs_grad = true) {
    if (!store_) throw UsageError("graph has no parameter store");
    return push(store_->value(param_id), {}, nullptr, needs_grad, param_id);
  }

  int make(Tensor<S> value, std::vector<int> ins, BackFn back) {
    bool needs = false;
    for (int i : ins) needs = needs || node(i).needs_grad;
    return push(std::move(value), std::move(ins), std::move(back), needs, -1);
  }

  const Tensor<S>& val(int id) const { return node(id).val; }
  int in(int id, int k) const { return node(id).ins.at(static_cast<size_t>(k)); }
  int num_inputs(int id) const { return static_cast<int>(node(id).ins.size()); }
  bool needs_grad(int id) const { return node(id).needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // gradient read-back after backward(); zero tensor if the node was untouched
  Tensor<S> grad_or_zero(int id) const {
    const Node& n = node(id);
    if (n.grad_set) return n.grad;
    return Tensor<S>(n.val.shape);
  }
  bool grad_set(int id) const { return node(id).grad_set; }
  const Tensor<S>& grad_ref(int id) const {
    if (!node(id).grad_set) throw UsageError("gradient not set for node");
    return node(id).grad;
  }

  // accumulate into a node's gradient slot (no-op when grads are not tracked)
  template <typename Expr>
  void accum(int id, const Expr& expr) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) return;
    if (!n.grad_set) {
      n.grad = Tensor<S>(n.val.shape);
      n.grad_set = true;
    }
    n.grad.data += expr;
  }

  // Exact reverse-mode gradients of a scalar loss node. Parameter gradients
  // land in the store; parameters untouched by this graph get zeros.
  void backward(int loss_node) {
    Node& loss = nodes_.at(static_cast<size_t>(loss_node));
    if (loss.val.size() != 1) throw UsageError("backward: loss node must be scalar");
    loss.grad = Tensor<S>::scalar(static_cast<S>(1));
    loss.grad_set = true;
    for (int id = loss_node; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.grad_set && n.back) n.back(*this, id);
    }
    if (store_) {
      store_->zero_grads();
      for (const Node& n : nodes_) {
        if (n.param_id >= 0 && n.grad_set) store_->grad(n.param_id).data += n.grad.data;
      }
    }
  }

  ParameterStore<S>* store() const { return store_; }

 private:
  struct Node {
    Tensor<S> val;
    Tensor<S> grad;
    std::vector<int> ins;
    BackFn back;
    bool needs_grad = false;
    bool grad_set = false;
    int param_id = -1;
  };

  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  Node& node(int id) { return nodes_.at(static_cast<size_t>(id)); }

  int push(Tensor<S> v, std::vector<int> ins, BackFn back, bool needs, int pid) {
    Node n;
    n.val = std::move(v);
    n.ins = std::move(ins);
    n.back = std::move(back);
    n.needs_grad = needs;
    n.param_id = pid;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::deque<Node> nodes_;
  ParameterStore<S>* store_;
};

}  // namespace rldarts
