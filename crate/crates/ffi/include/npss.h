#ifndef NPSS_H
#define NPSS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NpssStatus {
  NPSS_STATUS_OK = 0,
  NPSS_STATUS_NULL_POINTER = 1,
  NPSS_STATUS_INVALID_ARGUMENT = 2,
  NPSS_STATUS_PARSE_ERROR = 3,
  NPSS_STATUS_VALIDATION_ERROR = 4,
  NPSS_STATUS_SHAPE_ERROR = 5,
  NPSS_STATUS_IO_ERROR = 6,
  NPSS_STATUS_INDEX_ERROR = 7,
  NPSS_STATUS_DOMAIN_ERROR = 8,
  NPSS_STATUS_LABEL_MISMATCH = 9,
  NPSS_STATUS_EMPTY_SOURCE = 10,
  NPSS_STATUS_EMPTY_TEST = 11,
  NPSS_STATUS_BUFFER_TOO_SMALL = 12,
  NPSS_STATUS_PANIC = 99,
} NpssStatus;

typedef enum NpssTail {
  NPSS_TAIL_LEFT = 0,
  NPSS_TAIL_RIGHT = 1,
  NPSS_TAIL_TWO = 2,
} NpssTail;

typedef enum NpssStatistic {
  NPSS_STATISTIC_HC = 0,
  NPSS_STATISTIC_BJ = 1,
} NpssStatistic;

typedef enum NpssMethod {
  NPSS_METHOD_SCAN_L = 0,
  NPSS_METHOD_SCAN_R = 1,
  NPSS_METHOD_SCAN_LR = 2,
  NPSS_METHOD_SCAN2 = 3,
} NpssMethod;

/**
 * Opaque activation matrix.
 */
typedef struct NpssMatrix NpssMatrix;

/**
 * Opaque p-value matrix.
 */
typedef struct NpssPValues NpssPValues;

/**
 * Opaque scan result with its JSON report.
 */
typedef struct NpssScanResult NpssScanResult;

/**
 * Opaque strategy result with its JSON report.
 */
typedef struct NpssStrategyResult NpssStrategyResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next `npss_*` call on the same thread.
 */
const char *npss_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *npss_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void npss_string_free(char *s);

/**
 * Gated Higher Criticism statistic.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum NpssStatus npss_hc_statistic(double alpha, size_t n_alpha, size_t n, double *out);

/**
 * Gated Berk-Jones statistic.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum NpssStatus npss_bj_statistic(double alpha, size_t n_alpha, size_t n, double *out);

/**
 * Builds a matrix from `nrows * ncols` row-major values. Rows are named
 * `r0, r1, ...`.
 *
 * # Safety
 * `values` must point to `nrows * ncols` readable doubles; `out` must be
 * a valid pointer.
 */
enum NpssStatus npss_matrix_new(const double *values,
                                size_t nrows,
                                size_t ncols,
                                struct NpssMatrix **out);

/**
 * Loads a matrix; paths ending in `.csv` are CSV, anything else the
 * binary format.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum NpssStatus npss_matrix_load(const char *path, struct NpssMatrix **out);

/**
 * # Safety
 * `m` must be a live handle; `path` a NUL-terminated string.
 */
enum NpssStatus npss_matrix_save(const struct NpssMatrix *m, const char *path);

/**
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t npss_matrix_nrows(const struct NpssMatrix *m);

/**
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t npss_matrix_ncols(const struct NpssMatrix *m);

/**
 * # Safety
 * `m` must be NULL or a handle not yet freed.
 */
void npss_matrix_free(struct NpssMatrix *m);

/**
 * Empirical p-values of `test` against `reference`.
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum NpssStatus npss_pvalues_compute(const struct NpssMatrix *reference,
                                     const struct NpssMatrix *test,
                                     enum NpssTail tail,
                                     uint64_t seed,
                                     struct NpssPValues **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum NpssStatus npss_pvalues_load(const char *path, struct NpssPValues **out);

/**
 * # Safety
 * `pv` must be a live handle; `path` a NUL-terminated string.
 */
enum NpssStatus npss_pvalues_save(const struct NpssPValues *pv, const char *path);

/**
 * # Safety
 * `pv` must be NULL or a live handle.
 */
size_t npss_pvalues_nrows(const struct NpssPValues *pv);

/**
 * # Safety
 * `pv` must be NULL or a live handle.
 */
size_t npss_pvalues_ncols(const struct NpssPValues *pv);

/**
 * Reads one cell. Any of the output pointers may be NULL.
 *
 * # Safety
 * `pv` must be a live handle; non-NULL outputs must be valid.
 */
enum NpssStatus npss_pvalues_get(const struct NpssPValues *pv,
                                 size_t row,
                                 size_t col,
                                 double *p,
                                 double *pmin,
                                 double *pmax);

/**
 * # Safety
 * `pv` must be NULL or a handle not yet freed.
 */
void npss_pvalues_free(struct NpssPValues *pv);

/**
 * Multi-restart subset scan of a p-value matrix.
 *
 * # Safety
 * `pv` must be a live handle; `out` a valid pointer.
 */
enum NpssStatus npss_scan(const struct NpssPValues *pv,
                          enum NpssStatistic statistic,
                          size_t restarts,
                          uint64_t seed,
                          struct NpssScanResult **out);

/**
 * # Safety
 * `r` must be NULL or a live handle.
 */
double npss_scan_result_score(const struct NpssScanResult *r);

/**
 * # Safety
 * `r` must be NULL or a live handle.
 */
double npss_scan_result_alpha(const struct NpssScanResult *r);

/**
 * # Safety
 * `r` must be NULL or a live handle.
 */
size_t npss_scan_result_row_count(const struct NpssScanResult *r);

/**
 * # Safety
 * `r` must be NULL or a live handle.
 */
size_t npss_scan_result_col_count(const struct NpssScanResult *r);

/**
 * Copies the selected row indices into `buf` (capacity `len`).
 *
 * # Safety
 * `r` must be a live handle; `buf` must hold `len` entries.
 */
enum NpssStatus npss_scan_result_rows(const struct NpssScanResult *r, size_t *buf, size_t len);

/**
 * Copies the selected column indices into `buf` (capacity `len`).
 *
 * # Safety
 * `r` must be a live handle; `buf` must hold `len` entries.
 */
enum NpssStatus npss_scan_result_cols(const struct NpssScanResult *r, size_t *buf, size_t len);

/**
 * JSON report; free with `npss_string_free`. NULL if `r` is NULL.
 *
 * # Safety
 * `r` must be NULL or a live handle.
 */
char *npss_scan_result_json(const struct NpssScanResult *r);

/**
 * # Safety
 * `r` must be NULL or a handle not yet freed.
 */
void npss_scan_result_free(struct NpssScanResult *r);

/**
 * Runs a detection strategy (`k` is used by `NPSS_METHOD_SCAN2` only).
 *
 * # Safety
 * Handles must be live; `out` a valid pointer.
 */
enum NpssStatus npss_run_strategy(const struct NpssMatrix *reference,
                                  const struct NpssMatrix *test,
                                  enum NpssMethod method,
                                  size_t k,
                                  enum NpssStatistic statistic,
                                  size_t restarts,
                                  uint64_t seed,
                                  struct NpssStrategyResult **out);

/**
 * # Safety
 * `r` must be NULL or a live handle.
 */
size_t npss_strategy_flagged_count(const struct NpssStrategyResult *r);

/**
 * Copies the flagged test-row indices into `buf` (capacity `len`).
 *
 * # Safety
 * `r` must be a live handle; `buf` must hold `len` entries.
 */
enum NpssStatus npss_strategy_flagged_rows(const struct NpssStrategyResult *r,
                                           size_t *buf,
                                           size_t len);

/**
 * Number of constituent scans (1 for scanL/scanR, 2 for scanLR, up to k
 * for scan2).
 *
 * # Safety
 * `r` must be NULL or a live handle.
 */
size_t npss_strategy_scan_count(const struct NpssStrategyResult *r);

/**
 * JSON report; free with `npss_string_free`. NULL if `r` is NULL.
 *
 * # Safety
 * `r` must be NULL or a live handle.
 */
char *npss_strategy_json(const struct NpssStrategyResult *r);

/**
 * # Safety
 * `r` must be NULL or a handle not yet freed.
 */
void npss_strategy_free(struct NpssStrategyResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPSS_H */
