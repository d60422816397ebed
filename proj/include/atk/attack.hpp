#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "atk/tensor.hpp"

namespace atk {

enum class Norm { linf, l2 };

struct ThreatModel {
  Norm norm = Norm::linf;
  double eps = 8.0 / 255.0;
  void validate() const;
};

enum class AttackLoss { ce, kl_to_clean };

struct AttackConfig {
  int steps = 10;
  double step_size = 2.0 / 255.0;
  bool random_start = true;
  int restarts = 1;
  AttackLoss loss = AttackLoss::ce;
  void validate() const;
};

// maps a batch to logits; the callable owns the weights
using ModelFn = std::function<TensorPtr(Tape&, const TensorPtr&)>;

// Projects x onto the intersection of the eps-ball around center and the
// [0,1] box. linf clamps per element; l2 rescales each sample's offset onto
// the ball before the box clamp.
TensorPtr project(const TensorPtr& x, const TensorPtr& center, const ThreatModel& tm);

// Test/inspection hook: raw_step is the pre-projection update added to the
// iterate, projected is the iterate after projection.
struct PgdObserver {
  std::function<void(int step, const std::vector<double>& raw_step, const Tensor& projected)>
      on_step;
};

struct PgdResult {
  TensorPtr best;                    // per-sample max-loss candidate
  std::vector<TensorPtr> candidates; // start and final iterate of each restart, in scan order
};

// Iterated gradient ascent on the attack loss inside the threat model ball.
// Per-sample noise and starts derive from (seed, restart, sample index), so
// results are independent of batching and worker count.
PgdResult pgd_full(const ModelFn& f, const TensorPtr& x, const std::vector<uint16_t>& y,
                   const ThreatModel& tm, const AttackConfig& cfg, uint64_t seed,
                   const PgdObserver* observer = nullptr);

TensorPtr pgd(const ModelFn& f, const TensorPtr& x, const std::vector<uint16_t>& y,
              const ThreatModel& tm, const AttackConfig& cfg, uint64_t seed);

}  // namespace atk
