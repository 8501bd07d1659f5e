#pragma once

#include <utility>

#include "rldarts/graph.hpp"

namespace rldarts {

// Central finite-difference gradient checking, float64 only. The builder is
// called with a fresh graph bound to the store for every evaluation, so the
// loss is re-derived from the perturbed parameter each time.
//
// Returns max over parameter entries of
//   |analytic - (f(p+h) - f(p-h)) / 2h| / (|analytic| + 1e-8).
//
// Nondifferentiable points (max-pool ties, relu/clip kinks) are not handled
// here; callers nudge inputs away from them before checking.
template <typename Builder>
double grad_check(ParameterStore<double>& store, int pid, Builder&& build, double h = 1e-5) {
  auto eval = [&]() -> double {
    Graph<double> g(&store);
    const int loss = build(g);
    if (g.val(loss).size() != 1) throw UsageError("grad_check: loss must be scalar");
    return g.val(loss).data[0];
  };

  Tensor<double> analytic;
  {
    Graph<double> g(&store);
    const int loss = build(g);
    g.backward(loss);
    analytic = store.grad(pid);
  }

  double max_rel = 0.0;
  auto& value = store.value(pid).data;
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    const double orig = value[i];
    value[i] = orig + h;
    const double fp = eval();
    value[i] = orig - h;
    const double fm = eval();
    value[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::fabs(analytic.data[i] - fd) / (std::fabs(analytic.data[i]) + 1e-8);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace rldarts
