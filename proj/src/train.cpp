#include "atk/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "atk/error.hpp"
#include "atk/rng.hpp"
#include "serial.hpp"

namespace atk {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (crop_pad < 0) throw ConfigError("train: crop_pad must be nonnegative");
  if (cutout_hole < 0) throw ConfigError("train: cutout_hole must be nonnegative");
  objective.validate();
  threat.validate();
  attack.validate();
  optim.validate();
  mix.validate();
  const bool want_kl = objective.kind == ObjectiveKind::trades;
  if (want_kl != (attack.loss == AttackLoss::kl_to_clean))
    throw ConfigError("train: objective and attack loss do not match");
}

double RunLog::best_robust() const {
  if (best_epoch < 0 || best_epoch >= static_cast<int64_t>(records.size()))
    throw Error("run log has no completed epochs");
  return records[best_epoch].val_pgd40;
}

double RunLog::final_robust() const {
  if (records.empty()) throw Error("run log has no completed epochs");
  return records.back().val_pgd40;
}

double RunLog::robust_gap() const { return final_robust() - best_robust(); }

TrainResult train(Classifier& model, const LabeledDataset& originals,
                  const LabeledDataset* generated, const LabeledDataset& val,
                  const TrainConfig& cfg) {
  cfg.validate();
  originals.validate();
  val.validate();
  for (const auto* ds : {&originals, &val}) {
    if (ds->height != model.desc.height || ds->width != model.desc.width ||
        ds->channels != model.desc.channels)
      throw ConfigError("train: dataset dims do not match the model");
    if (ds->num_classes != model.desc.num_classes)
      throw ConfigError("train: dataset and model class counts differ");
  }
  if (val.size() == 0) throw ConfigError("train: validation set is empty");

  MixedBatchStream stream(&originals, generated, cfg.mix, derive_seed(cfg.seed, 11));
  SgdState sgd(model, cfg.optim);
  EmaState ema(model, cfg.optim.ema_tau);

  TrainResult out{RunLog{}, ema.snapshot(model), ema.snapshot(model)};
  out.log.steps_per_epoch = stream.batches_per_epoch();

  double best_robust = -1.0;
  int64_t gstep = 0;
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cosine_lr(cfg.optim.lr, e, cfg.epochs);
    stream.begin_epoch(e);
    double loss_sum = 0.0;
    try {
      for (int64_t b = 0; b < out.log.steps_per_epoch; ++b, ++gstep) {
        auto batch = stream.next();
        const std::vector<uint8_t>* mask =
            cfg.augment_generated ? nullptr : &batch.is_original;
        auto x = batch.images;
        if (cfg.crop_pad > 0)
          x = augment_crop_flip(x, cfg.crop_pad, derive_seed(cfg.seed, 12, gstep), mask);
        if (cfg.cutout_hole > 0)
          x = cutout(x, cfg.cutout_hole, derive_seed(cfg.seed, 13, gstep), mask);

        Tape tape;
        const uint64_t atk_seed = derive_seed(cfg.seed, 14, gstep);
        auto adv = cfg.objective.kind == ObjectiveKind::trades
                       ? trades_loss(tape, model, x, batch.labels, cfg.threat, cfg.attack,
                                     cfg.objective, atk_seed)
                       : standard_at_loss(tape, model, x, batch.labels, cfg.threat,
                                          cfg.attack, cfg.objective, atk_seed);
        const double loss_value = adv.loss->data[0];
        if (!std::isfinite(loss_value))
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(e) +
                                " step " + std::to_string(b));
        tape.backward(adv.loss);
        sgd.step(model, lr);
        ema.update(model);
        loss_sum += loss_value;
      }
    } catch (const DivergenceError&) {
      // the failing step mutated nothing; keep the weights and partial log
      out.log.diverged = true;
      break;
    }
    auto snapshot = ema.snapshot(model);
    auto acc = pgd40_accuracy(snapshot, val, cfg.threat, cfg.val_attack_seed);

    EpochRecord rec;
    rec.epoch = e;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(out.log.steps_per_epoch);
    rec.val_clean = acc.clean;
    rec.val_pgd40 = acc.robust;
    if (cfg.wall_clock)
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.log.records.push_back(rec);
    out.last = snapshot;
    if (rec.val_pgd40 > best_robust) {
      best_robust = rec.val_pgd40;
      out.log.best_epoch = e;
      out.best = std::move(snapshot);
    }
  }
  return out;
}

namespace {
constexpr const char* kLogHeader = "epoch,lr,train_loss,val_clean,val_pgd40,seconds";
}

void write_run_log(const RunLog& log, const std::string& path) {
  auto os = open_output(path);
  os << kLogHeader << "\n";
  char buf[160];
  for (const auto& r : log.records) {
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f,%.6f,%.6f,%.6f",
                  static_cast<long long>(r.epoch), r.lr, r.train_loss, r.val_clean,
                  r.val_pgd40, r.seconds);
    os << buf << "\n";
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<EpochRecord> read_run_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kLogHeader)
    throw IoError("run log header mismatch in " + path);
  std::vector<EpochRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    long long epoch = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &epoch, &r.lr, &r.train_loss,
                    &r.val_clean, &r.val_pgd40, &r.seconds) != 6)
      throw IoError("malformed run log row in " + path + ": " + line);
    r.epoch = epoch;
    records.push_back(r);
  }
  return records;
}

}  // namespace atk
