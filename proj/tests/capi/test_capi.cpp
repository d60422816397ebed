#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "atk.h"
#include "doctest.h"

extern "C" int atk_c_smoke(void);

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kTinyArch =
    "model.height=8\nmodel.width=8\nmodel.channels=1\nmodel.classes=3\n"
    "model.widths=4\n";

atk_config* tiny_config(const std::string& extra = "") {
  atk_config* cfg = nullptr;
  REQUIRE(atk_config_parse_text((std::string(kTinyArch) + extra).c_str(), &cfg) == ATK_OK);
  return cfg;
}

atk_dataset* tiny_data(atk_config* cfg, int per_class, uint64_t seed) {
  atk_dataset* ds = nullptr;
  REQUIRE(atk_dataset_generate(cfg, per_class, seed, &ds) == ATK_OK);
  return ds;
}

}  // namespace

TEST_CASE("the header works from plain c") { CHECK(atk_c_smoke() == 0); }

TEST_CASE("version and error reporting") {
  CHECK(std::string(atk_version()).size() > 0);
  atk_dataset* ds = nullptr;
  CHECK(atk_dataset_load("missing.atds", &ds) == ATK_IO_ERROR);
  CHECK(std::string(atk_last_error()).size() > 0);
  CHECK(atk_config_parse_text(nullptr, nullptr) == ATK_CONFIG_ERROR);
  atk_config* cfg = nullptr;
  CHECK(atk_config_parse_text("no equals sign", &cfg) == ATK_CONFIG_ERROR);
}

TEST_CASE("dataset generate, save, load round trip") {
  auto* cfg = tiny_config();
  auto* ds = tiny_data(cfg, 5, 11);
  int64_t n = 0;
  int h = 0, w = 0, c = 0, k = 0;
  REQUIRE(atk_dataset_dims(ds, &n, &h, &w, &c, &k) == ATK_OK);
  CHECK(n == 15);
  CHECK(h == 8);
  CHECK(k == 3);

  REQUIRE(atk_dataset_save(ds, "capi_ds.atds") == ATK_OK);
  atk_dataset* back = nullptr;
  REQUIRE(atk_dataset_load("capi_ds.atds", &back) == ATK_OK);
  int64_t n2 = 0;
  REQUIRE(atk_dataset_dims(back, &n2, nullptr, nullptr, nullptr, nullptr) == ATK_OK);
  CHECK(n2 == n);
  atk_dataset_free(back);
  atk_dataset_free(ds);
  atk_config_free(cfg);
  std::remove("capi_ds.atds");
}

TEST_CASE("model init, save, load and selection") {
  auto* cfg = tiny_config();
  atk_model* model = nullptr;
  REQUIRE(atk_model_init(cfg, 3, &model) == ATK_OK);
  CHECK(atk_model_param_count(model) > 0);
  REQUIRE(atk_model_save(model, "capi_model.ckpt") == ATK_OK);
  atk_model* back = nullptr;
  REQUIRE(atk_model_load("capi_model.ckpt", &back) == ATK_OK);
  CHECK(atk_model_param_count(back) == atk_model_param_count(model));

  auto* pool = tiny_data(cfg, 10, 21);
  atk_dataset* kept = nullptr;
  REQUIRE(atk_select(pool, model, 0.5, &kept) == ATK_OK);
  int64_t n = 0;
  REQUIRE(atk_dataset_dims(kept, &n, nullptr, nullptr, nullptr, nullptr) == ATK_OK);
  CHECK(n > 0);
  CHECK(n <= 30);

  CHECK(atk_select(pool, model, 0.0, &kept) == ATK_CONFIG_ERROR);

  atk_dataset_free(kept);
  atk_dataset_free(pool);
  atk_model_free(back);
  atk_model_free(model);
  atk_config_free(cfg);
  std::remove("capi_model.ckpt");
}

TEST_CASE("training produces artifacts and reruns are byte-identical") {
  auto* cfg = tiny_config();
  auto* orig = tiny_data(cfg, 10, 31);
  auto* val = tiny_data(cfg, 3, 32);
  REQUIRE(atk_dataset_save(orig, "capi_orig.atds") == ATK_OK);
  REQUIRE(atk_dataset_save(val, "capi_val.atds") == ATK_OK);
  atk_dataset_free(orig);
  atk_dataset_free(val);
  atk_config_free(cfg);

  const std::string train_keys =
      "data.original=capi_orig.atds\ndata.val=capi_val.atds\n"
      "train.epochs=2\nmix.batch_size=10\nmix.ratio=1\nattack.steps=2\n"
      "optim.lr=0.05\nseed.init=5\nseed.train=6\n";
  cfg = tiny_config(train_keys);

  REQUIRE(atk_train(cfg, "capi_run1") == ATK_OK);
  REQUIRE(atk_train(cfg, "capi_run2") == ATK_OK);
  const auto log1 = slurp("capi_run1/run_log.csv");
  CHECK(log1 == slurp("capi_run2/run_log.csv"));
  CHECK(log1.find("epoch,lr,train_loss,val_clean,val_pgd40,seconds") == 0);
  CHECK(slurp("capi_run1/best.ckpt") == slurp("capi_run2/best.ckpt"));
  CHECK(slurp("capi_run1/summary.txt").find("best_epoch=") != std::string::npos);
  CHECK(slurp("capi_run1/config.txt") == slurp("capi_run2/config.txt"));

  SUBCASE("the best checkpoint is loadable and evaluable") {
    atk_model* best = nullptr;
    REQUIRE(atk_model_load("capi_run1/best.ckpt", &best) == ATK_OK);
    atk_dataset* v = nullptr;
    REQUIRE(atk_dataset_load("capi_val.atds", &v) == ATK_OK);
    double clean = -1, pgd = -1, aa = -1;
    REQUIRE(atk_evaluate(best, v, cfg, "capi_eval.csv", &clean, &pgd, &aa) == ATK_OK);
    CHECK(clean >= 0.0);
    CHECK(clean <= 1.0);
    CHECK(pgd <= clean);
    CHECK(aa <= pgd);
    CHECK(slurp("capi_eval.csv").find("count,clean,pgd40,aa_proxy") == 0);
    atk_dataset_free(v);
    atk_model_free(best);
    std::remove("capi_eval.csv");
  }

  SUBCASE("a missing dataset path fails with a config error") {
    atk_config* bad = tiny_config("data.val=capi_val.atds\n");
    CHECK(atk_train(bad, "capi_none") == ATK_CONFIG_ERROR);
    atk_config_free(bad);
  }

  SUBCASE("an exploding run reports divergence but writes artifacts") {
    atk_config* hot = tiny_config(train_keys);
    REQUIRE(atk_config_set(hot, "optim.lr", "1e12") == ATK_OK);
    REQUIRE(atk_config_set(hot, "train.epochs", "20") == ATK_OK);
    CHECK(atk_train(hot, "capi_hot") == ATK_DIVERGED);
    CHECK(slurp("capi_hot/summary.txt").find("diverged=1") != std::string::npos);
    atk_config_free(hot);
  }

  atk_config_free(cfg);
}

TEST_CASE("fid between generated pools") {
  auto* cfg = tiny_config();
  auto* a = tiny_data(cfg, 8, 41);
  auto* b = tiny_data(cfg, 8, 42);
  atk_model* embedder = nullptr;
  REQUIRE(atk_model_init(cfg, 9, &embedder) == ATK_OK);
  double fid = -1.0;
  REQUIRE(atk_dataset_fid(a, b, embedder, &fid) == ATK_OK);
  CHECK(fid >= 0.0);
  CHECK(atk_dataset_fid(a, b, embedder, nullptr) == ATK_CONFIG_ERROR);
  atk_model_free(embedder);
  atk_dataset_free(b);
  atk_dataset_free(a);
  atk_config_free(cfg);
}
