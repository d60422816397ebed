// command line front end; everything goes through the public C interface
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "atk.h"

namespace {

struct ConfigDeleter {
  void operator()(atk_config* p) const { atk_config_free(p); }
};
struct DatasetDeleter {
  void operator()(atk_dataset* p) const { atk_dataset_free(p); }
};
struct ModelDeleter {
  void operator()(atk_model* p) const { atk_model_free(p); }
};
using ConfigPtr = std::unique_ptr<atk_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<atk_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<atk_model, ModelDeleter>;

int fail(atk_status st) {
  std::fprintf(stderr, "error: %s\n", atk_last_error());
  return static_cast<int>(st);
}

// config file (optional) plus repeatable key=value overrides
ConfigPtr load_config(const std::string& path, const std::vector<std::string>& sets,
                      atk_status* st) {
  atk_config* cfg = nullptr;
  *st = path.empty() ? atk_config_parse_text("", &cfg) : atk_config_parse_file(path.c_str(), &cfg);
  if (*st != ATK_OK) return nullptr;
  ConfigPtr out(cfg);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      *st = ATK_CONFIG_ERROR;
      return nullptr;
    }
    *st = atk_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (*st != ATK_OK) return nullptr;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial training toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", atk_version());

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key=value settings file")->expected(1);
  app.add_option("--set", sets, "override a settings key, e.g. --set optim.lr=0.1");

  int workers = 1;
  app.add_option("--workers", workers, "tensor op worker threads");

  uint64_t global_seed = 0;
  std::string global_out;
  auto* global_seed_opt =
      app.add_option("--seed", global_seed, "seed override (seed.train, generator default)");
  app.add_option("--out", global_out, "default output directory for train");

  auto* gen = app.add_subcommand("gen", "write a procedural dataset");
  std::string gen_out;
  int per_class = 100;
  uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_option("--per-class", per_class, "samples per class");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "generator seed");

  auto* select = app.add_subcommand("select", "pseudo-label and filter a pool");
  std::string sel_pool, sel_model, sel_out;
  double keep = 0.2;
  select->add_option("--pool", sel_pool, "candidate dataset")->required();
  select->add_option("--model", sel_model, "scorer checkpoint")->required();
  select->add_option("--keep", keep, "fraction kept per class");
  select->add_option("--out", sel_out, "output dataset path")->required();

  auto* train = app.add_subcommand("train", "run the training loop");
  std::string train_out;
  train->add_option("--out", train_out, "output directory (defaults to the global --out)");

  auto* eval = app.add_subcommand("eval", "clean / pgd-40 / proxy accuracies");
  std::string eval_model, eval_data, eval_csv;
  eval->add_option("--model", eval_model, "checkpoint to evaluate")->required();
  eval->add_option("--data", eval_data, "dataset path")->required();
  eval->add_option("--out", eval_csv, "also write a csv report");

  auto* fid = app.add_subcommand("fid", "feature-space distribution distance");
  std::string fid_ref, fid_cand, fid_model;
  fid->add_option("--ref", fid_ref, "reference dataset")->required();
  fid->add_option("--cand", fid_cand, "candidate dataset")->required();
  fid->add_option("--model", fid_model, "embedder checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ATK_CONFIG_ERROR);
  }

  atk_set_workers(workers);
  if (global_seed_opt->count() > 0) {
    sets.push_back("seed.train=" + std::to_string(global_seed));
    if (gen_seed_opt->count() == 0) gen_seed = global_seed;
  }
  atk_status st = ATK_OK;
  auto cfg = load_config(config_path, sets, &st);
  if (!cfg) return fail(st);

  if (gen->parsed()) {
    atk_dataset* ds = nullptr;
    if ((st = atk_dataset_generate(cfg.get(), per_class, gen_seed, &ds)) != ATK_OK)
      return fail(st);
    DatasetPtr owned(ds);
    if ((st = atk_dataset_save(ds, gen_out.c_str())) != ATK_OK) return fail(st);
    int64_t n = 0;
    atk_dataset_dims(ds, &n, nullptr, nullptr, nullptr, nullptr);
    std::printf("wrote %lld samples to %s\n", static_cast<long long>(n), gen_out.c_str());
    return 0;
  }

  if (select->parsed()) {
    atk_dataset* pool = nullptr;
    if ((st = atk_dataset_load(sel_pool.c_str(), &pool)) != ATK_OK) return fail(st);
    DatasetPtr pool_owned(pool);
    atk_model* scorer = nullptr;
    if ((st = atk_model_load(sel_model.c_str(), &scorer)) != ATK_OK) return fail(st);
    ModelPtr scorer_owned(scorer);
    atk_dataset* kept = nullptr;
    if ((st = atk_select(pool, scorer, keep, &kept)) != ATK_OK) return fail(st);
    DatasetPtr kept_owned(kept);
    if ((st = atk_dataset_save(kept, sel_out.c_str())) != ATK_OK) return fail(st);
    int64_t n = 0;
    atk_dataset_dims(kept, &n, nullptr, nullptr, nullptr, nullptr);
    std::printf("kept %lld samples into %s\n", static_cast<long long>(n), sel_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    if (train_out.empty()) train_out = global_out;
    if (train_out.empty()) {
      std::fprintf(stderr, "error: train needs --out (or the global --out)\n");
      return static_cast<int>(ATK_CONFIG_ERROR);
    }
    if ((st = atk_train(cfg.get(), train_out.c_str())) != ATK_OK) return fail(st);
    std::printf("run written to %s\n", train_out.c_str());
    return 0;
  }

  if (eval->parsed()) {
    atk_model* model = nullptr;
    if ((st = atk_model_load(eval_model.c_str(), &model)) != ATK_OK) return fail(st);
    ModelPtr model_owned(model);
    atk_dataset* data = nullptr;
    if ((st = atk_dataset_load(eval_data.c_str(), &data)) != ATK_OK) return fail(st);
    DatasetPtr data_owned(data);
    double clean = 0, pgd40 = 0, aa = 0;
    st = atk_evaluate(model, data, cfg.get(), eval_csv.empty() ? nullptr : eval_csv.c_str(),
                      &clean, &pgd40, &aa);
    if (st != ATK_OK) return fail(st);
    std::printf("clean=%.6f pgd40=%.6f aa_proxy=%.6f\n", clean, pgd40, aa);
    return 0;
  }

  if (fid->parsed()) {
    atk_dataset* ref = nullptr;
    if ((st = atk_dataset_load(fid_ref.c_str(), &ref)) != ATK_OK) return fail(st);
    DatasetPtr ref_owned(ref);
    atk_dataset* cand = nullptr;
    if ((st = atk_dataset_load(fid_cand.c_str(), &cand)) != ATK_OK) return fail(st);
    DatasetPtr cand_owned(cand);
    atk_model* embedder = nullptr;
    if ((st = atk_model_load(fid_model.c_str(), &embedder)) != ATK_OK) return fail(st);
    ModelPtr embedder_owned(embedder);
    double value = 0.0;
    if ((st = atk_dataset_fid(ref, cand, embedder, &value)) != ATK_OK) return fail(st);
    std::printf("fid=%.6f\n", value);
    return 0;
  }
  return 0;
}
