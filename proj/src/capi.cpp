#include "atk.h"

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <utility>

#include "atk/config.hpp"
#include "atk/data.hpp"
#include "atk/error.hpp"
#include "atk/metrics.hpp"
#include "atk/model.hpp"
#include "atk/rng.hpp"
#include "atk/tensor.hpp"
#include "atk/train.hpp"
#include "serial.hpp"

using namespace atk;

struct atk_config {
  KeyValues kv;
};
struct atk_dataset {
  LabeledDataset ds;
};
struct atk_model {
  Classifier model;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
atk_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return ATK_CONFIG_ERROR;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return ATK_IO_ERROR;
  } catch (const DivergenceError& e) {
    g_last_error = e.what();
    return ATK_DIVERGED;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ATK_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return ATK_ERROR;
  }
}

atk_status require(bool ok, const char* message) {
  if (ok) return ATK_OK;
  g_last_error = message;
  return ATK_CONFIG_ERROR;
}

}  // namespace

extern "C" {

const char* atk_version(void) { return "0.1.0"; }

const char* atk_last_error(void) { return g_last_error.c_str(); }

atk_status atk_set_workers(int n) {
  Tape::workers = n < 1 ? 1 : n;
  return ATK_OK;
}

atk_status atk_config_parse_file(const char* path, atk_config** out) {
  if (auto st = require(path && out, "null argument")) return st;
  return guarded([&] {
    *out = new atk_config{KeyValues::parse_file(path)};
    return ATK_OK;
  });
}

atk_status atk_config_parse_text(const char* text, atk_config** out) {
  if (auto st = require(text && out, "null argument")) return st;
  return guarded([&] {
    *out = new atk_config{KeyValues::parse_text(text)};
    return ATK_OK;
  });
}

atk_status atk_config_set(atk_config* cfg, const char* key, const char* value) {
  if (auto st = require(cfg && key && value, "null argument")) return st;
  return guarded([&] {
    cfg->kv.set(key, value);
    return ATK_OK;
  });
}

void atk_config_free(atk_config* cfg) { delete cfg; }

atk_status atk_dataset_load(const char* path, atk_dataset** out) {
  if (auto st = require(path && out, "null argument")) return st;
  return guarded([&] {
    *out = new atk_dataset{load_dataset(path)};
    return ATK_OK;
  });
}

atk_status atk_dataset_save(const atk_dataset* ds, const char* path) {
  if (auto st = require(ds && path, "null argument")) return st;
  return guarded([&] {
    save_dataset(ds->ds, path);
    return ATK_OK;
  });
}

atk_status atk_dataset_generate(const atk_config* cfg, int per_class, uint64_t seed,
                                atk_dataset** out) {
  if (auto st = require(cfg && out, "null argument")) return st;
  return guarded([&] {
    auto spec = parse_run_spec(cfg->kv);
    *out = new atk_dataset{generate(spec.gen, per_class, seed)};
    return ATK_OK;
  });
}

atk_status atk_dataset_dims(const atk_dataset* ds, int64_t* count, int* height, int* width,
                            int* channels, int* classes) {
  if (auto st = require(ds != nullptr, "null argument")) return st;
  if (count) *count = ds->ds.size();
  if (height) *height = ds->ds.height;
  if (width) *width = ds->ds.width;
  if (channels) *channels = ds->ds.channels;
  if (classes) *classes = ds->ds.num_classes;
  return ATK_OK;
}

void atk_dataset_free(atk_dataset* ds) { delete ds; }

atk_status atk_model_init(const atk_config* cfg, uint64_t seed, atk_model** out) {
  if (auto st = require(cfg && out, "null argument")) return st;
  return guarded([&] {
    auto spec = parse_run_spec(cfg->kv);
    *out = new atk_model{Classifier::init(spec.arch, seed)};
    return ATK_OK;
  });
}

atk_status atk_model_load(const char* path, atk_model** out) {
  if (auto st = require(path && out, "null argument")) return st;
  return guarded([&] {
    *out = new atk_model{load_checkpoint(path)};
    return ATK_OK;
  });
}

atk_status atk_model_save(const atk_model* model, const char* path) {
  if (auto st = require(model && path, "null argument")) return st;
  return guarded([&] {
    save_checkpoint(model->model, path);
    return ATK_OK;
  });
}

int64_t atk_model_param_count(const atk_model* model) {
  return model ? model->model.param_count() : -1;
}

void atk_model_free(atk_model* model) { delete model; }

atk_status atk_select(const atk_dataset* pool, const atk_model* scorer, double keep_fraction,
                      atk_dataset** out) {
  if (auto st = require(pool && scorer && out, "null argument")) return st;
  return guarded([&] {
    SelectionConfig cfg;
    cfg.keep_fraction = keep_fraction;
    *out = new atk_dataset{pseudo_label_select(pool->ds, scorer->model, cfg)};
    return ATK_OK;
  });
}

atk_status atk_train(const atk_config* cfg, const char* out_dir) {
  if (auto st = require(cfg && out_dir, "null argument")) return st;
  return guarded([&] {
    auto spec = parse_run_spec(cfg->kv);
    if (spec.data_original.empty())
      throw ConfigError("train: data.original path is required");
    if (spec.data_val.empty()) throw ConfigError("train: data.val path is required");
    auto originals = load_dataset(spec.data_original);
    auto val = load_dataset(spec.data_val);
    LabeledDataset generated;
    const bool with_gen = !spec.data_generated.empty();
    if (with_gen) generated = load_dataset(spec.data_generated);

    auto model = Classifier::init(spec.arch, spec.seed_init);
    auto res = train(model, originals, with_gen ? &generated : nullptr, val, spec.train);

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    write_run_log(res.log, (dir / "run_log.csv").string());
    save_checkpoint(res.best, (dir / "best.ckpt").string());
    save_checkpoint(res.last, (dir / "last.ckpt").string());
    {
      auto os = open_output((dir / "config.txt").string());
      os << cfg->kv.echo();
    }
    {
      auto os = open_output((dir / "summary.txt").string());
      char buf[96];
      os << "best_epoch=" << res.log.best_epoch << "\n";
      os << "steps_per_epoch=" << res.log.steps_per_epoch << "\n";
      os << "diverged=" << (res.log.diverged ? 1 : 0) << "\n";
      if (!res.log.records.empty()) {
        std::snprintf(buf, sizeof(buf), "best_robust=%.6f\n", res.log.best_robust());
        os << buf;
        std::snprintf(buf, sizeof(buf), "final_robust=%.6f\n", res.log.final_robust());
        os << buf;
        std::snprintf(buf, sizeof(buf), "robust_gap=%.6f\n", res.log.robust_gap());
        os << buf;
      }
    }
    if (res.log.diverged) {
      g_last_error = "training diverged; partial results written to " +
                     std::string(out_dir);
      return ATK_DIVERGED;
    }
    return ATK_OK;
  });
}

atk_status atk_evaluate(const atk_model* model, const atk_dataset* data, const atk_config* cfg,
                        const char* csv_path, double* clean, double* pgd40, double* aa_proxy) {
  if (auto st = require(model && data && cfg, "null argument")) return st;
  return guarded([&] {
    auto spec = parse_run_spec(cfg->kv);
    auto report = evaluate(model->model, data->ds, spec.train.threat, spec.seed_eval);
    if (csv_path) write_eval_csv(report, csv_path);
    if (clean) *clean = report.clean;
    if (pgd40) *pgd40 = report.pgd40;
    if (aa_proxy) *aa_proxy = report.aa_proxy;
    return ATK_OK;
  });
}

atk_status atk_dataset_fid(const atk_dataset* ref, const atk_dataset* cand,
                           const atk_model* embedder, double* fid) {
  if (auto st = require(ref && cand && embedder && fid, "null argument")) return st;
  return guarded([&] {
    *fid = dataset_fid(ref->ds, cand->ds, embedder->model);
    return ATK_OK;
  });
}

}  // extern "C"
