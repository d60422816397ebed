#pragma once

#include <cstdint>
#include <vector>

#include "atk/model.hpp"

namespace atk {

struct OptimConfig {
  double lr = 0.2;  // peak rate, decayed by the cosine schedule
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double ema_tau = 0.995;
  void validate() const;
};

// eta0 * 0.5 * (1 + cos(pi * t / total)), one half-cosine over the run
double cosine_lr(double eta0, int64_t t, int64_t total);

// SGD with Nesterov momentum and decoupled-from-schedule weight decay:
//   g = grad + wd * p;  v = mu * v + g;  p -= lr * (g + mu * v)
class SgdState {
 public:
  SgdState(const Classifier& model, const OptimConfig& cfg);
  void step(Classifier& model, double lr);

 private:
  OptimConfig cfg_;
  std::vector<std::vector<double>> velocity_;
};

// Exponential moving average of the weights, seeded from the live weights:
//   shadow = tau * shadow + (1 - tau) * p
class EmaState {
 public:
  EmaState(const Classifier& model, double tau);
  void update(const Classifier& model);
  const std::vector<std::vector<double>>& shadow() const { return shadow_; }
  // frozen classifier carrying the averaged weights
  Classifier snapshot(const Classifier& model) const;
  void restore(const std::vector<std::vector<double>>& values) { shadow_ = values; }

 private:
  double tau_;
  std::vector<std::vector<double>> shadow_;
};

}  // namespace atk
