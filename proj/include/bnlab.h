/* C interface to the batchnorm-only training laboratory.
 *
 * All functions return bnlab_status; BNLAB_OK means success and
 * bnlab_last_error() describes the most recent failure on this thread.
 * Objects are opaque handles released with their _destroy function; strings
 * returned through char** are malloc'd and released with bnlab_free_string.
 */
#ifndef BNLAB_H
#define BNLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bnlab_status {
  BNLAB_OK = 0,
  BNLAB_ERR_INVALID_ARG = 1,  /* bad handle, shape or API misuse */
  BNLAB_ERR_CONFIG = 2,       /* invalid configuration or selector */
  BNLAB_ERR_IO = 3,           /* filesystem failure */
  BNLAB_ERR_FORMAT = 4,       /* malformed dataset or checkpoint file */
  BNLAB_ERR_DIVERGED = 5,     /* training reached a non-finite loss */
  BNLAB_ERR_VERIFY = 6,       /* frozen-parameter invariant violated */
  BNLAB_ERR_INTERNAL = 7
} bnlab_status;

typedef struct bnlab_config bnlab_config;
typedef struct bnlab_checkpoint bnlab_checkpoint;
typedef struct bnlab_dataset bnlab_dataset;

const char* bnlab_status_name(bnlab_status status);
const char* bnlab_last_error(void);
void bnlab_free_string(char* s);

/* ---- parameter accounting ---------------------------------------------- */

typedef struct bnlab_param_counts {
  long long total;
  long long batchnorm;
  long long output;
  long long shortcut;
  long long body;
  int weight_layer_depth;
} bnlab_param_counts;

/* family: "cifar_resnet" | "imagenet_resnet" | "vgg"; width e.g. "1", "1/4" */
bnlab_status bnlab_count_params(const char* family, int depth, const char* width,
                                bnlab_param_counts* out);

/* CSV with columns family,name,depth,width,total,batchnorm,output,shortcut
 * plus percentage columns. which: "table1" (18 ResNet configurations),
 * "vgg" (4 configurations), or "family:depth[:width]" for a single row. */
bnlab_status bnlab_param_table_csv(const char* which, char** out_csv);

/* ---- run configuration -------------------------------------------------- */

bnlab_status bnlab_config_create(bnlab_config** out);
bnlab_status bnlab_config_load(const char* path, bnlab_config** out);
bnlab_status bnlab_config_set(bnlab_config* cfg, const char* key, const char* value);
bnlab_status bnlab_config_validate(const bnlab_config* cfg);
bnlab_status bnlab_config_dump(const bnlab_config* cfg, char** out_json);
void bnlab_config_destroy(bnlab_config* cfg);

/* ---- training ------------------------------------------------------------ */

typedef struct bnlab_train_summary {
  int replicates;
  long long trainable;
  long long total_params;
  double mean_top1, std_top1;
  double mean_top5, std_top5;
} bnlab_train_summary;

/* Runs the configured replicates, writing checkpoints/metrics under the
 * config's out_dir. verbose != 0 logs per-epoch progress to stderr. */
bnlab_status bnlab_train(const bnlab_config* cfg, int verbose, bnlab_train_summary* out);

/* ---- checkpoints and datasets -------------------------------------------- */

bnlab_status bnlab_checkpoint_load(const char* path, bnlab_checkpoint** out);
void bnlab_checkpoint_destroy(bnlab_checkpoint* ckpt);

/* split: 0 = train, 1 = test */
bnlab_status bnlab_dataset_open(const bnlab_config* cfg, int split, bnlab_dataset** out);
void bnlab_dataset_destroy(bnlab_dataset* ds);

typedef struct bnlab_eval_result {
  double top1;
  double top5;
  long n_examples;
} bnlab_eval_result;

bnlab_status bnlab_evaluate(const bnlab_checkpoint* ckpt, const bnlab_dataset* ds,
                            bnlab_eval_result* out);

/* ---- analysis ------------------------------------------------------------ */

/* Distribution of gamma/beta. Outputs: stats table, gamma histogram, beta
 * histogram (any pointer may be NULL to skip). */
bnlab_status bnlab_analyze_gamma(const bnlab_checkpoint* ckpt, char** out_stats_csv,
                                 char** out_gamma_hist_csv, char** out_beta_hist_csv);

/* Clamp sweep over `n` thresholds; CSV columns theta, clamped,
 * fraction_clamped, top1, delta_top1. */
bnlab_status bnlab_analyze_clamp(const bnlab_checkpoint* ckpt, const bnlab_dataset* ds,
                                 const double* thresholds, size_t n, char** out_csv);

/* Per-ReLU zero frequencies: summary, per-unit table, histogram. */
bnlab_status bnlab_analyze_activations(const bnlab_checkpoint* ckpt, const bnlab_dataset* ds,
                                       char** out_summary_csv, char** out_units_csv,
                                       char** out_hist_csv);

/* Least-squares of accuracy vs log2(batchnorm parameter count) per group.
 * Input CSV columns: group,bn_params,accuracy. group_by, when non-NULL,
 * restricts the fit to rows of that group. */
bnlab_status bnlab_analyze_scaling(const char* points_csv_path, const char* group_by,
                                   char** out_csv);

/* ---- freezing verification ------------------------------------------------ */

/* Rebuilds the mask from the after-checkpoint's recorded selector/seed
 * (selector may override; pass NULL to use the recorded one). Returns
 * BNLAB_OK when no frozen parameter changed, BNLAB_ERR_VERIFY otherwise;
 * *out_report receives a human-readable summary either way. */
bnlab_status bnlab_verify(const char* before_path, const char* after_path, const char* selector,
                          char** out_report);

#ifdef __cplusplus
}
#endif

#endif /* BNLAB_H */
