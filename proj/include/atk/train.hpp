#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atk/attack.hpp"
#include "atk/data.hpp"
#include "atk/metrics.hpp"
#include "atk/model.hpp"
#include "atk/objective.hpp"
#include "atk/optim.hpp"

namespace atk {

struct TrainConfig {
  int64_t epochs = 60;
  ObjectiveConfig objective;
  ThreatModel threat;  // shared by the training attack and validation
  // inner maximization; defaults match the trades objective
  AttackConfig attack = {.steps = 10,
                         .step_size = 2.0 / 255.0,
                         .random_start = true,
                         .restarts = 1,
                         .loss = AttackLoss::kl_to_clean};
  OptimConfig optim;
  MixConfig mix;
  int crop_pad = 2;
  int cutout_hole = 0;
  bool augment_generated = true;
  // measure real per-epoch seconds; off logs zeros so reruns are byte-identical
  bool wall_clock = false;
  uint64_t seed = 1;              // batch order, augmentation, training attacks
  uint64_t val_attack_seed = 99;  // held fixed across epochs so the early-stopping
                                  // signal is comparable between them
  void validate() const;
};

struct EpochRecord {
  int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_clean = 0.0;
  double val_pgd40 = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> records;
  int64_t best_epoch = -1;  // first argmax of val_pgd40
  int64_t steps_per_epoch = 0;
  bool diverged = false;

  double best_robust() const;
  double final_robust() const;
  // final minus best; goes negative when the model overfits after its peak
  double robust_gap() const;
};

struct TrainResult {
  RunLog log;
  Classifier best;  // frozen averaged-weight snapshot at best_epoch
  Classifier last;  // snapshot after the final completed epoch
};

// Adversarial training over mixed original/generated batches. Weights are
// evaluated through their moving average after every epoch with a PGD-40
// validation pass. A non-finite loss or gradient aborts the run before the
// offending step mutates anything, keeping the last good weights and a
// partial log. `generated` may be null when mix.ratio is 1.
TrainResult train(Classifier& model, const LabeledDataset& originals,
                  const LabeledDataset* generated, const LabeledDataset& val,
                  const TrainConfig& cfg);

// epoch,lr,train_loss,val_clean,val_pgd40,seconds; six decimals throughout
void write_run_log(const RunLog& log, const std::string& path);
std::vector<EpochRecord> read_run_log(const std::string& path);

}  // namespace atk
