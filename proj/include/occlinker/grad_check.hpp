#pragma once

#include <functional>

#include "occlinker/ops.hpp"

namespace occlinker {

struct GradCheckReport {
  Real max_rel_err = 0;
  int64_t checked = 0;  // elements compared
  std::string worst;    // "input#k[i]" of the worst element
};

// Compares the analytic gradient of a scalar-valued graph against central
// finite differences, element by element over the given leaf inputs.
// Inputs without requires_grad (frozen parameters) are skipped. The relative
// error denominator is floored at 1e-8.
inline GradCheckReport grad_check_report(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                                         Real h = Real(1e-5)) {
  Tensor out = f();
  if (out.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued (sum-reduce first)");
  out.backward();

  std::vector<std::vector<Real>> analytic;
  for (const auto& in : inputs) {
    if (!in.requires_grad()) {
      analytic.emplace_back();  // skipped (frozen)
      continue;
    }
    if (!in.has_grad())
      analytic.emplace_back(in.data().size(), Real(0));  // unused input: zero grad
    else {
      for (Real g : in.grad())
        if (!std::isfinite(g))
          throw ValueError("grad_check: non-finite analytic gradient produced by '" +
                           (in.node()->op.empty() ? std::string("leaf") : in.node()->op) + "'");
      analytic.push_back(in.grad());
    }
  }

  GradCheckReport rep;
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (analytic[k].empty() && inputs[k].numel() > 0 && !inputs[k].requires_grad()) continue;
    Tensor in = inputs[k];
    auto& vals = in.mutable_data();
    for (size_t i = 0; i < vals.size(); ++i) {
      const Real orig = vals[i];
      Real fp, fm;
      {
        NoGradGuard ng;
        vals[i] = orig + h;
        fp = f().item();
        vals[i] = orig - h;
        fm = f().item();
        vals[i] = orig;
      }
      const Real numeric = (fp - fm) / (2 * h);
      const Real a = analytic[k][i];
      const Real denom = std::max(std::max(std::fabs(a), std::fabs(numeric)), Real(1e-8));
      const Real rel = std::fabs(a - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input#" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

inline Real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, Real h = Real(1e-5)) {
  return grad_check_report(f, inputs, h).max_rel_err;
}

}  // namespace occlinker
