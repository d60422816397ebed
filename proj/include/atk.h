/* C interface to the adversarial training toolkit.
 *
 * Every function that can fail returns atk_status; on failure the thread's
 * last-error message is updated and can be read with atk_last_error().
 * Handles are created by atk_*_load/init/generate calls and must be released
 * with the matching atk_*_free. */
#ifndef ATK_H
#define ATK_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum atk_status {
  ATK_OK = 0,
  ATK_ERROR = 1,        /* generic failure */
  ATK_CONFIG_ERROR = 2, /* invalid configuration or arguments */
  ATK_DIVERGED = 3,     /* training aborted on non-finite loss or gradients */
  ATK_IO_ERROR = 4      /* file missing, unreadable, or corrupt */
} atk_status;

typedef struct atk_config atk_config;   /* key=value settings */
typedef struct atk_dataset atk_dataset; /* labeled image set */
typedef struct atk_model atk_model;     /* classifier weights */

const char* atk_version(void);
/* message describing this thread's most recent failure; empty if none */
const char* atk_last_error(void);
/* worker threads used by tensor ops; n < 1 resets to single-threaded */
atk_status atk_set_workers(int n);

/* -- configuration ------------------------------------------------------- */
atk_status atk_config_parse_file(const char* path, atk_config** out);
atk_status atk_config_parse_text(const char* text, atk_config** out);
atk_status atk_config_set(atk_config* cfg, const char* key, const char* value);
void atk_config_free(atk_config* cfg);

/* -- datasets ------------------------------------------------------------ */
atk_status atk_dataset_load(const char* path, atk_dataset** out);
atk_status atk_dataset_save(const atk_dataset* ds, const char* path);
/* draws per_class samples of each class from the procedural generator
 * configured by the gen.* keys */
atk_status atk_dataset_generate(const atk_config* cfg, int per_class, uint64_t seed,
                                atk_dataset** out);
atk_status atk_dataset_dims(const atk_dataset* ds, int64_t* count, int* height, int* width,
                            int* channels, int* classes);
void atk_dataset_free(atk_dataset* ds);

/* -- models -------------------------------------------------------------- */
/* fresh weights for the architecture described by the model.* keys */
atk_status atk_model_init(const atk_config* cfg, uint64_t seed, atk_model** out);
atk_status atk_model_load(const char* path, atk_model** out);
atk_status atk_model_save(const atk_model* model, const char* path);
int64_t atk_model_param_count(const atk_model* model);
void atk_model_free(atk_model* model);

/* -- pipeline ------------------------------------------------------------ */
/* relabels pool by the scorer's argmax and keeps the top keep_fraction of
 * each predicted class by confidence */
atk_status atk_select(const atk_dataset* pool, const atk_model* scorer, double keep_fraction,
                      atk_dataset** out);

/* Runs the full training loop described by cfg. Datasets come from the
 * data.original / data.generated / data.val path keys. Writes run_log.csv,
 * best.ckpt, last.ckpt, summary.txt and config.txt into out_dir. Returns
 * ATK_DIVERGED when the run aborted early; the artifacts produced up to that
 * point are still written. */
atk_status atk_train(const atk_config* cfg, const char* out_dir);

/* Clean / PGD-40 / multi-restart proxy accuracies under the threat.* keys,
 * attacks seeded by seed.eval. Any of the three accuracy pointers and
 * csv_path may be null. */
atk_status atk_evaluate(const atk_model* model, const atk_dataset* data, const atk_config* cfg,
                        const char* csv_path, double* clean, double* pgd40, double* aa_proxy);

/* distribution distance between two datasets in the embedder's feature space */
atk_status atk_dataset_fid(const atk_dataset* ref, const atk_dataset* cand,
                           const atk_model* embedder, double* fid);

#ifdef __cplusplus
}
#endif

#endif /* ATK_H */
