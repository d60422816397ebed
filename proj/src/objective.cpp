#include "atk/objective.hpp"

#include <string>

#include "atk/error.hpp"

namespace atk {

void ObjectiveConfig::validate() const {
  if (beta < 0.0) throw ConfigError("objective: beta must be nonnegative");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("objective: label_smoothing must lie in [0,1)");
}

namespace {

void check_labels(const TensorPtr& logits, const std::vector<uint16_t>& labels,
                  const char* where) {
  if (logits->shape.size() != 2)
    throw ConfigError(std::string(where) + ": logits must be [B,K], got " +
                      shape_str(logits->shape));
  const int b = logits->shape[0], k = logits->shape[1];
  if (static_cast<int>(labels.size()) != b)
    throw ConfigError(std::string(where) + ": got " + std::to_string(labels.size()) +
                      " labels for a batch of " + std::to_string(b));
  for (uint16_t y : labels)
    if (y >= k)
      throw ConfigError(std::string(where) + ": label " + std::to_string(y) +
                        " out of range for " + std::to_string(k) + " classes");
}

}  // namespace

TensorPtr ce_smoothed(Tape& tape, const TensorPtr& logits, const std::vector<uint16_t>& labels,
                      double label_smoothing) {
  check_labels(logits, labels, "ce_smoothed");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw ConfigError("ce_smoothed: label_smoothing must lie in [0,1)");
  const int b = logits->shape[0], k = logits->shape[1];
  auto target = make_tensor({b, k}, label_smoothing / k);
  for (int i = 0; i < b; ++i) target->data[i * k + labels[i]] += 1.0 - label_smoothing;
  auto lp = tape.log_softmax(logits);
  return tape.scale(tape.sum(tape.mul(target, lp)), -1.0 / b);
}

TensorPtr kl_logits(Tape& tape, const TensorPtr& p_logits, const TensorPtr& q_logits) {
  if (p_logits->shape != q_logits->shape || p_logits->shape.size() != 2)
    throw ConfigError("kl_logits: logits must be matching [B,K], got " +
                      shape_str(p_logits->shape) + " vs " + shape_str(q_logits->shape));
  const int b = p_logits->shape[0];
  auto p = tape.softmax_logits(p_logits);
  auto diff = tape.sub(tape.log_softmax(p_logits), tape.log_softmax(q_logits));
  return tape.scale(tape.sum(tape.mul(p, diff)), 1.0 / b);
}

TensorPtr trades_objective(Tape& tape, const Classifier& model, const TensorPtr& x,
                           const TensorPtr& x_adv, const std::vector<uint16_t>& y,
                           const ObjectiveConfig& obj) {
  obj.validate();
  auto clean_logits = model.logits(tape, x);
  auto ce = ce_smoothed(tape, clean_logits, y, obj.label_smoothing);
  if (obj.beta == 0.0) return ce;
  auto adv_logits = model.logits(tape, x_adv);
  return tape.add(ce, tape.scale(kl_logits(tape, clean_logits, adv_logits), obj.beta));
}

AdvLossResult trades_loss(Tape& tape, const Classifier& model, const TensorPtr& x,
                          const std::vector<uint16_t>& y, const ThreatModel& tm,
                          const AttackConfig& attack, const ObjectiveConfig& obj, uint64_t seed) {
  obj.validate();
  if (obj.kind != ObjectiveKind::trades)
    throw ConfigError("trades_loss: objective kind is not trades");
  if (attack.loss != AttackLoss::kl_to_clean)
    throw ConfigError("trades_loss: inner attack must maximize kl_to_clean");
  if (obj.beta == 0.0) {
    // the adversarial term vanishes, so the attack is skipped entirely
    auto clean_logits = model.logits(tape, x);
    return {ce_smoothed(tape, clean_logits, y, obj.label_smoothing), x};
  }
  auto frozen = model.clone(false);
  auto x_adv = pgd([&frozen](Tape& t, const TensorPtr& in) { return frozen.logits(t, in); }, x,
                   y, tm, attack, seed);
  x_adv->requires_grad = false;
  return {trades_objective(tape, model, x, x_adv, y, obj), x_adv};
}

AdvLossResult standard_at_loss(Tape& tape, const Classifier& model, const TensorPtr& x,
                               const std::vector<uint16_t>& y, const ThreatModel& tm,
                               const AttackConfig& attack, const ObjectiveConfig& obj,
                               uint64_t seed) {
  obj.validate();
  if (obj.kind != ObjectiveKind::standard_at)
    throw ConfigError("standard_at_loss: objective kind is not standard_at");
  if (attack.loss != AttackLoss::ce)
    throw ConfigError("standard_at_loss: inner attack must maximize ce");
  auto frozen = model.clone(false);
  auto x_adv = pgd([&frozen](Tape& t, const TensorPtr& in) { return frozen.logits(t, in); }, x,
                   y, tm, attack, seed);
  x_adv->requires_grad = false;
  auto adv_logits = model.logits(tape, x_adv);
  return {ce_smoothed(tape, adv_logits, y, obj.label_smoothing), x_adv};
}

}  // namespace atk
