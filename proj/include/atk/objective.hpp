#pragma once

#include <cstdint>
#include <vector>

#include "atk/attack.hpp"
#include "atk/model.hpp"
#include "atk/tensor.hpp"

namespace atk {

enum class ObjectiveKind { standard_at, trades };

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::trades;
  double beta = 5.0;
  double label_smoothing = 0.1;
  void validate() const;
};

// mean over the batch of cross-entropy against
// (1 - ls) * one_hot(label) + ls * uniform
TensorPtr ce_smoothed(Tape& tape, const TensorPtr& logits, const std::vector<uint16_t>& labels,
                      double label_smoothing);

// mean over the batch of KL(softmax(p_logits) || softmax(q_logits));
// gradients flow into both logit tensors
TensorPtr kl_logits(Tape& tape, const TensorPtr& p_logits, const TensorPtr& q_logits);

// ce_smoothed(f(x), y) + beta * KL(f(x) || f(x_adv)) with x_adv held fixed;
// the attack point contributes gradient only through the model weights
TensorPtr trades_objective(Tape& tape, const Classifier& model, const TensorPtr& x,
                           const TensorPtr& x_adv, const std::vector<uint16_t>& y,
                           const ObjectiveConfig& obj);

struct AdvLossResult {
  TensorPtr loss;
  TensorPtr x_adv;
};

// Runs the inner maximization on frozen weights, then builds the outer loss
// graph on live weights. trades uses a kl_to_clean attack; standard_at a ce
// attack; mismatched configs are rejected.
AdvLossResult trades_loss(Tape& tape, const Classifier& model, const TensorPtr& x,
                          const std::vector<uint16_t>& y, const ThreatModel& tm,
                          const AttackConfig& attack, const ObjectiveConfig& obj, uint64_t seed);

AdvLossResult standard_at_loss(Tape& tape, const Classifier& model, const TensorPtr& x,
                               const std::vector<uint16_t>& y, const ThreatModel& tm,
                               const AttackConfig& attack, const ObjectiveConfig& obj,
                               uint64_t seed);

}  // namespace atk
