#ifndef EVACNET_H
#define EVACNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvacStatus {
  EVAC_STATUS_OK = 0,
  EVAC_STATUS_NULL_POINTER = 1,
  EVAC_STATUS_INVALID_UTF8 = 2,
  EVAC_STATUS_IO = 3,
  EVAC_STATUS_SCHEMA = 4,
  EVAC_STATUS_CONFIG = 5,
  EVAC_STATUS_REGISTRY_MISMATCH = 6,
  EVAC_STATUS_NUMERIC = 7,
  EVAC_STATUS_INTERNAL = 8,
  EVAC_STATUS_BUFFER_TOO_SMALL = 9,
} EvacStatus;

/**
 * Trained model handle.
 */
typedef struct EvacModel EvacModel;

/**
 * Error metrics over paired samples. `mape` and `r2` are meaningful only
 * when the matching `*_defined` flag is set.
 */
typedef struct EvacMetricReport {
  double rmse;
  double mae;
  /**
   * percent
   */
  double mape;
  double r2;
  bool mape_defined;
  bool r2_defined;
  uint64_t n;
  uint64_t mape_skipped;
} EvacMetricReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *evac_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *evac_version(void);

/**
 * Writes a synthetic scenario (builtin name or JSON path) into `out_dir`.
 * `seed` overrides the scenario seed when `override_seed` is set.
 *
 * # Safety
 * `scenario` and `out_dir` must be NUL-terminated strings.
 */
enum EvacStatus evac_generate_scenario(const char *scenario,
                                       const char *out_dir,
                                       bool override_seed,
                                       uint64_t seed);

/**
 * Trains from a JSON config and writes artifacts to `out_dir` (the
 * config's `out_dir` when NULL). When `model_out` is non-NULL it receives
 * a handle to the trained model, to be released with `evac_model_free`.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` NULL or one;
 * `model_out` NULL or writable.
 */
enum EvacStatus evac_train(const char *config_path,
                           const char *out_dir,
                           struct EvacModel **model_out);

/**
 * Loads a model checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `model_out` writable.
 */
enum EvacStatus evac_model_load(const char *path, struct EvacModel **model_out);

/**
 * Releases a handle from `evac_model_load` or `evac_train`. NULL is a no-op.
 *
 * # Safety
 * `model` must be NULL or a live handle not used afterwards.
 */
void evac_model_free(struct EvacModel *model);

/**
 * Number of input features in the model's registry.
 *
 * # Safety
 * `model` must be a live handle and `count_out` writable.
 */
enum EvacStatus evac_model_feature_count(const struct EvacModel *model, size_t *count_out);

/**
 * Copies feature `index`'s name into `buf` with a trailing NUL.
 * `needed_out`, when non-NULL, receives the required size including the
 * NUL; a short buffer yields `BufferTooSmall` and is left untouched.
 *
 * # Safety
 * `model` must be a live handle, `buf` writable for `buf_len` bytes (or
 * NULL with `buf_len` 0), `needed_out` NULL or writable.
 */
enum EvacStatus evac_model_feature_name(const struct EvacModel *model,
                                        size_t index,
                                        char *buf,
                                        size_t buf_len,
                                        size_t *needed_out);

/**
 * Forecast horizon `p` of the model.
 *
 * # Safety
 * `model` must be a live handle and `horizon_out` writable.
 */
enum EvacStatus evac_model_horizon(const struct EvacModel *model, size_t *horizon_out);

/**
 * Scores `model` on every window of the dataset in `data_dir`. Fills
 * `reports` with one entry per horizon followed by the pooled overall entry
 * (`horizon + 1` in total); `written_out` receives that count. `out_dir`,
 * when non-NULL, receives the metrics CSV.
 *
 * # Safety
 * `model` must be a live handle; `data_dir` NUL-terminated; `out_dir` NULL
 * or NUL-terminated; `reports` writable for `capacity` entries;
 * `written_out` writable.
 */
enum EvacStatus evac_model_evaluate(const struct EvacModel *model,
                                    const char *data_dir,
                                    const char *out_dir,
                                    struct EvacMetricReport *reports,
                                    size_t capacity,
                                    size_t *written_out);

/**
 * Computes RMSE, MAE, MAPE and R² over `n` paired samples.
 *
 * # Safety
 * `actual` and `predicted` must be readable for `n` values; `report_out`
 * writable.
 */
enum EvacStatus evac_metrics_compute(const double *actual,
                                     const double *predicted,
                                     size_t n,
                                     struct EvacMetricReport *report_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVACNET_H */
