#include "atk/optim.hpp"

#include <cmath>

#include "atk/error.hpp"

namespace atk {

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optim: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("optim: momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be nonnegative");
  if (ema_tau < 0.0 || ema_tau >= 1.0) throw ConfigError("optim: ema_tau must lie in [0,1)");
}

double cosine_lr(double eta0, int64_t t, int64_t total) {
  if (total < 1) throw ConfigError("cosine_lr: total must be at least 1");
  if (t < 0 || t > total) throw ConfigError("cosine_lr: step outside [0,total]");
  return eta0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t) / total));
}

SgdState::SgdState(const Classifier& model, const OptimConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  velocity_.reserve(model.params.size());
  for (const auto& p : model.params) velocity_.emplace_back(p->data.size(), 0.0);
}

void SgdState::step(Classifier& model, double lr) {
  if (model.params.size() != velocity_.size())
    throw ConfigError("sgd: model does not match optimizer state");
  if (!(lr >= 0.0)) throw ConfigError("sgd: negative learning rate");
  // verify every gradient before touching any weight, so a divergent step
  // leaves the model exactly as it was
  for (size_t t = 0; t < model.params.size(); ++t) {
    const auto& p = model.params[t];
    if (p->data.size() != velocity_[t].size())
      throw ConfigError("sgd: model does not match optimizer state");
    if (p->grad.size() != p->data.size())
      throw ConfigError("sgd: missing gradient for " + model.param_names[t]);
    double check = 0.0;
    for (double g : p->grad) check += g;
    if (!std::isfinite(check))
      throw DivergenceError("sgd: non-finite gradient for " + model.param_names[t]);
  }
  for (size_t t = 0; t < model.params.size(); ++t) {
    auto& p = model.params[t];
    auto& v = velocity_[t];
    for (size_t i = 0; i < p->data.size(); ++i) {
      const double g = p->grad[i] + cfg_.weight_decay * p->data[i];
      v[i] = cfg_.momentum * v[i] + g;
      p->data[i] -= lr * (g + cfg_.momentum * v[i]);
    }
  }
}

EmaState::EmaState(const Classifier& model, double tau) : tau_(tau) {
  if (tau < 0.0 || tau >= 1.0) throw ConfigError("ema: tau must lie in [0,1)");
  shadow_.reserve(model.params.size());
  for (const auto& p : model.params) shadow_.push_back(p->data);
}

void EmaState::update(const Classifier& model) {
  if (model.params.size() != shadow_.size())
    throw ConfigError("ema: model does not match shadow state");
  for (size_t t = 0; t < shadow_.size(); ++t) {
    const auto& p = model.params[t]->data;
    auto& s = shadow_[t];
    if (p.size() != s.size()) throw ConfigError("ema: parameter size changed");
    for (size_t i = 0; i < s.size(); ++i) s[i] = tau_ * s[i] + (1.0 - tau_) * p[i];
  }
}

Classifier EmaState::snapshot(const Classifier& model) const {
  auto out = model.clone(false);
  out.set_param_values(shadow_);
  return out;
}

}  // namespace atk
