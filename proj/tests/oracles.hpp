#pragma once

// Independent reference implementations used by the test suite only.

#include <cmath>
#include <functional>
#include <vector>

#include "atk/rng.hpp"
#include "atk/tensor.hpp"

namespace oracles {

// Builds the scalar loss from scratch on a fresh tape; inputs are captured by
// the callable so finite differences can perturb them between evaluations.
using ScalarFn = std::function<atk::TensorPtr(atk::Tape&)>;

inline double eval_scalar(const ScalarFn& fn) {
  atk::Tape tape;
  return fn(tape)->data[0];
}

inline std::vector<double> analytic_gradient(const ScalarFn& fn, const atk::TensorPtr& x) {
  atk::Tape tape;
  auto loss = fn(tape);
  tape.backward(loss);
  return x->grad;
}

inline std::vector<double> fd_gradient(const ScalarFn& fn, const atk::TensorPtr& x,
                                       double h = 1e-5) {
  std::vector<double> g(x->data.size());
  for (size_t i = 0; i < x->data.size(); ++i) {
    const double orig = x->data[i];
    x->data[i] = orig + h;
    const double fp = eval_scalar(fn);
    x->data[i] = orig - h;
    const double fm = eval_scalar(fn);
    x->data[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct GradCheck {
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  bool ok = true;
};

// Tolerance rule: relative error <= 1e-4, falling back to an absolute bound of
// 1e-6 wherever the analytic gradient is below 1e-8 in magnitude.
inline GradCheck compare_gradients(const std::vector<double>& analytic,
                                   const std::vector<double>& fd, double rel_tol = 1e-4,
                                   double abs_tol = 1e-6) {
  GradCheck r;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], f = fd[i];
    const double diff = std::fabs(a - f);
    if (std::fabs(a) < 1e-8) {
      r.worst_abs = std::max(r.worst_abs, diff);
      if (diff > abs_tol) r.ok = false;
    } else {
      const double rel = diff / std::max(std::fabs(a), std::fabs(f));
      r.worst_rel = std::max(r.worst_rel, rel);
      if (rel > rel_tol) r.ok = false;
    }
  }
  return r;
}

inline GradCheck gradcheck(const ScalarFn& fn, const atk::TensorPtr& x, double h = 1e-5) {
  return compare_gradients(analytic_gradient(fn, x), fd_gradient(fn, x, h));
}

inline atk::TensorPtr random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = true) {
  atk::Rng rng(seed);
  auto t = atk::make_tensor(std::move(shape), 0.0, requires_grad);
  for (auto& v : t->data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracles
