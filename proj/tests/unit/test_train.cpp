#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "atk/error.hpp"
#include "atk/rng.hpp"
#include "atk/train.hpp"
#include "doctest.h"

using namespace atk;

namespace {

ArchDescriptor small_desc() {
  ArchDescriptor desc;
  desc.height = 8;
  desc.width = 8;
  desc.channels = 1;
  desc.widths = {4};
  desc.num_classes = 4;
  return desc;
}

LabeledDataset small_data(int per_class, uint64_t seed,
                          DataSource source = DataSource::original) {
  GeneratorConfig gc;
  gc.num_classes = 4;
  gc.height = 8;
  gc.width = 8;
  gc.channels = 1;
  gc.noise = 0.05;
  gc.source = source;
  return generate(gc, per_class, seed);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.attack.steps = 2;
  cfg.mix.ratio = 1.0;
  cfg.mix.batch_size = 20;
  cfg.optim.lr = 0.05;
  cfg.seed = 5;
  cfg.val_attack_seed = 17;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("training runs produce a consistent, reproducible log") {
  auto orig = small_data(15, 31);
  auto val = small_data(4, 32);
  auto cfg = small_config();

  auto m1 = Classifier::init(small_desc(), 9);
  auto r1 = train(m1, orig, nullptr, val, cfg);
  auto m2 = Classifier::init(small_desc(), 9);
  auto r2 = train(m2, orig, nullptr, val, cfg);

  REQUIRE(r1.log.records.size() == 3);
  CHECK(r1.log.steps_per_epoch == 3);  // ceil(60 / 20)
  CHECK_FALSE(r1.log.diverged);
  for (int64_t e = 0; e < 3; ++e) {
    const auto& rec = r1.log.records[e];
    CHECK(rec.epoch == e);
    CHECK(rec.lr == cosine_lr(cfg.optim.lr, e, cfg.epochs));
    CHECK(rec.seconds == 0.0);
    CHECK(rec.val_pgd40 <= rec.val_clean);
    CHECK(std::isfinite(rec.train_loss));
  }

  // identical seeds give identical logs and identical weights
  for (size_t e = 0; e < 3; ++e) {
    CHECK(r1.log.records[e].train_loss == r2.log.records[e].train_loss);
    CHECK(r1.log.records[e].val_pgd40 == r2.log.records[e].val_pgd40);
  }
  for (size_t t = 0; t < m1.params.size(); ++t) CHECK(m1.params[t]->data == m2.params[t]->data);

  write_run_log(r1.log, "log1.csv");
  write_run_log(r2.log, "log2.csv");
  CHECK(slurp("log1.csv") == slurp("log2.csv"));
  std::remove("log1.csv");
  std::remove("log2.csv");

  // best_epoch is the first argmax of the robust column
  int64_t arg = 0;
  for (size_t e = 1; e < 3; ++e)
    if (r1.log.records[e].val_pgd40 > r1.log.records[arg].val_pgd40) arg = e;
  CHECK(r1.log.best_epoch == arg);
  CHECK(r1.log.best_robust() == r1.log.records[arg].val_pgd40);
  CHECK(r1.log.final_robust() == r1.log.records.back().val_pgd40);
  CHECK(r1.log.robust_gap() == r1.log.final_robust() - r1.log.best_robust());
}

TEST_CASE("snapshots reproduce their logged validation numbers") {
  auto orig = small_data(15, 41);
  auto val = small_data(4, 42);
  auto cfg = small_config();
  auto model = Classifier::init(small_desc(), 2);
  auto res = train(model, orig, nullptr, val, cfg);

  auto best = pgd40_accuracy(res.best, val, cfg.threat, cfg.val_attack_seed);
  CHECK(best.clean == res.log.records[res.log.best_epoch].val_clean);
  CHECK(best.robust == res.log.best_robust());
  auto last = pgd40_accuracy(res.last, val, cfg.threat, cfg.val_attack_seed);
  CHECK(last.robust == res.log.final_robust());
  for (const auto& p : res.best.params) CHECK_FALSE(p->requires_grad);
}

TEST_CASE("mixed training consumes the generated pool without changing epoch length") {
  auto orig = small_data(15, 51);
  auto gen_small = small_data(25, 52, DataSource::generated);
  auto gen_large = small_data(400, 53, DataSource::generated);
  auto val = small_data(4, 54);
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.mix.ratio = 0.3;

  auto m1 = Classifier::init(small_desc(), 3);
  auto r1 = train(m1, orig, &gen_small, val, cfg);
  auto m2 = Classifier::init(small_desc(), 3);
  auto r2 = train(m2, orig, &gen_large, val, cfg);
  CHECK(r1.log.steps_per_epoch == 3);
  CHECK(r2.log.steps_per_epoch == 3);
}

TEST_CASE("a zero-beta trades run equals a zero-radius standard run") {
  // both reduce to smoothed cross-entropy on the same augmented batches
  auto orig = small_data(15, 61);
  auto val = small_data(4, 62);

  auto cfg_trades = small_config();
  cfg_trades.objective.kind = ObjectiveKind::trades;
  cfg_trades.objective.beta = 0.0;
  cfg_trades.threat.eps = 0.0;

  auto cfg_std = cfg_trades;
  cfg_std.objective.kind = ObjectiveKind::standard_at;
  cfg_std.attack.loss = AttackLoss::ce;

  auto m1 = Classifier::init(small_desc(), 4);
  auto r1 = train(m1, orig, nullptr, val, cfg_trades);
  auto m2 = Classifier::init(small_desc(), 4);
  auto r2 = train(m2, orig, nullptr, val, cfg_std);

  for (size_t e = 0; e < r1.log.records.size(); ++e) {
    CHECK(r1.log.records[e].train_loss == r2.log.records[e].train_loss);
    CHECK(r1.log.records[e].val_clean == r2.log.records[e].val_clean);
    CHECK(r1.log.records[e].val_pgd40 == r2.log.records[e].val_pgd40);
    // zero radius: the validation attack cannot move anything
    CHECK(r1.log.records[e].val_pgd40 == r1.log.records[e].val_clean);
  }
  for (size_t t = 0; t < m1.params.size(); ++t) CHECK(m1.params[t]->data == m2.params[t]->data);
}

TEST_CASE("divergence aborts the run but keeps usable state") {
  auto orig = small_data(15, 71);
  auto val = small_data(4, 72);
  auto cfg = small_config();
  cfg.objective.beta = 0.0;
  cfg.threat.eps = 0.0;
  cfg.epochs = 30;
  cfg.optim.lr = 1e12;  // explodes within the first epochs

  auto model = Classifier::init(small_desc(), 5);
  auto before = model.param_values();
  auto res = train(model, orig, nullptr, val, cfg);

  CHECK(res.log.diverged);
  CHECK(res.log.records.size() < 30);
  for (const auto& p : model.params)
    for (double v : p->data) CHECK(std::isfinite(v));
  if (res.log.records.empty()) {
    CHECK(res.log.best_epoch == -1);
    // the best snapshot falls back to the initial weights
    CHECK(res.best.param_values() == before);
  }
}

TEST_CASE("train validates configuration and data up front") {
  auto orig = small_data(15, 81);
  auto val = small_data(4, 82);
  auto model = Classifier::init(small_desc(), 6);

  auto cfg = small_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(model, orig, nullptr, val, cfg), ConfigError);

  cfg = small_config();
  cfg.attack.loss = AttackLoss::ce;  // trades wants the kl attack
  CHECK_THROWS_AS(train(model, orig, nullptr, val, cfg), ConfigError);

  cfg = small_config();
  cfg.crop_pad = -1;
  CHECK_THROWS_AS(train(model, orig, nullptr, val, cfg), ConfigError);

  cfg = small_config();
  cfg.mix.ratio = 0.3;  // needs a generated pool
  CHECK_THROWS_AS(train(model, orig, nullptr, val, cfg), ConfigError);

  cfg = small_config();
  GeneratorConfig other;
  other.num_classes = 4;
  other.height = 16;
  other.width = 16;
  other.channels = 1;
  auto wrong_dims = generate(other, 4, 1);
  CHECK_THROWS_AS(train(model, wrong_dims, nullptr, val, cfg), ConfigError);
  LabeledDataset empty_val;
  CHECK_THROWS_AS(train(model, orig, nullptr, empty_val, cfg), Error);
}

TEST_CASE("run log csv round trip and format") {
  RunLog log;
  log.steps_per_epoch = 3;
  log.records.push_back({0, 0.2, 1.5, 0.75, 0.5, 0.0});
  log.records.push_back({1, 0.1, 1.25, 0.8125, 0.5625, 0.0});
  log.best_epoch = 1;
  write_run_log(log, "log_rt.csv");

  auto text = slurp("log_rt.csv");
  CHECK(text ==
        "epoch,lr,train_loss,val_clean,val_pgd40,seconds\n"
        "0,0.200000,1.500000,0.750000,0.500000,0.000000\n"
        "1,0.100000,1.250000,0.812500,0.562500,0.000000\n");

  auto records = read_run_log("log_rt.csv");
  REQUIRE(records.size() == 2);
  CHECK(records[0].epoch == 0);
  CHECK(records[1].lr == 0.1);
  CHECK(records[1].val_pgd40 == 0.5625);
  std::remove("log_rt.csv");

  SUBCASE("header and row corruption are rejected") {
    {
      std::ofstream os("log_bad.csv");
      os << "epoch,lr\n0,0.1\n";
    }
    CHECK_THROWS_AS(read_run_log("log_bad.csv"), IoError);
    {
      std::ofstream os("log_bad.csv");
      os << "epoch,lr,train_loss,val_clean,val_pgd40,seconds\n0,0.1,nope\n";
    }
    CHECK_THROWS_AS(read_run_log("log_bad.csv"), IoError);
    std::remove("log_bad.csv");
    CHECK_THROWS_AS(read_run_log("log_missing.csv"), IoError);
  }
}
