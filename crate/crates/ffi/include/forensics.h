#ifndef FORENSICS_H
#define FORENSICS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum ForensicsStatus {
  FORENSICS_STATUS_OK = 0,
  FORENSICS_STATUS_NULL_POINTER = 1,
  FORENSICS_STATUS_INVALID_ARGUMENT = 2,
  FORENSICS_STATUS_IO = 3,
  FORENSICS_STATUS_MALFORMED_DATA = 4,
  FORENSICS_STATUS_INVALID_DATASET = 5,
  FORENSICS_STATUS_INSUFFICIENT_DATA = 6,
  FORENSICS_STATUS_CONFIG = 7,
  FORENSICS_STATUS_UTF8 = 8,
  FORENSICS_STATUS_PANIC = 9,
} ForensicsStatus;

/*
 Opaque election dataset.
 */
typedef struct ForensicsDataset ForensicsDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next library call on the same thread; do not free.
 */
const char *forensics_last_error(void);

/*
 Loads a dataset directory or `dataset.toml`.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ForensicsStatus forensics_dataset_load(const char *path, struct ForensicsDataset **out);

/*
 Generates a clean synthetic election. `config_toml` may be NULL for defaults.

 # Safety
 `config_toml` must be NULL or NUL-terminated; `out` must be writable.
 */
enum ForensicsStatus forensics_dataset_simulate(const char *config_toml,
                                                uint64_t seed,
                                                struct ForensicsDataset **out);

/*
 Releases a dataset. NULL is ignored.

 # Safety
 `dataset` must come from this library and not be used afterwards.
 */
void forensics_dataset_free(struct ForensicsDataset *dataset);

/*
 Number of centers in the dataset.

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum ForensicsStatus forensics_dataset_center_count(const struct ForensicsDataset *dataset,
                                                    size_t *out);

/*
 Number of integrity violations found by validation.

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum ForensicsStatus forensics_dataset_violation_count(const struct ForensicsDataset *dataset,
                                                       size_t *out);

/*
 Content hash of the dataset as a hex string; free with [`forensics_string_free`].

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum ForensicsStatus forensics_dataset_fingerprint(const struct ForensicsDataset *dataset,
                                                   char **out);

/*
 Benford probabilities for digit `position` (1 or 2). `out` must hold 9
 values for the first digit (digits 1-9) or 10 for the second (digits 0-9).

 # Safety
 `out` must point to `len` writable doubles.
 */
enum ForensicsStatus forensics_benford_pmf(uint8_t position, double *out, size_t len);

/*
 Exact binomial exit-poll p-value. `direction`: 0 = P(X >= k), 1 = P(X <= k), 2 = two-sided.

 # Safety
 `out` must be writable.
 */
enum ForensicsStatus forensics_poll_pvalue(double official_share,
                                           uint64_t sample_size,
                                           uint64_t yes_responses,
                                           uint32_t direction,
                                           double *out);

/*
 Probability that `sample` of `precincts` precincts include one of `tainted`.

 # Safety
 `out` must be writable.
 */
enum ForensicsStatus forensics_detection_probability(uint64_t precincts,
                                                     uint64_t tainted,
                                                     uint64_t sample,
                                                     double *out);

/*
 Smallest sample size whose detection probability reaches `confidence`.

 # Safety
 `out` must be writable.
 */
enum ForensicsStatus forensics_plan_sample_size(uint64_t precincts,
                                                uint64_t tainted,
                                                double confidence,
                                                uint64_t *out);

/*
 Fewest precincts whose corruption could overturn `margin`; writes 0 when
 no set of precincts can (the audit is unnecessary).

 # Safety
 `ballots` must point to `len` values; `out` must be writable.
 */
enum ForensicsStatus forensics_min_flip_precincts(uint64_t margin,
                                                  const uint64_t *ballots,
                                                  size_t len,
                                                  double lambda,
                                                  uint64_t *out);

/*
 Runs a battery described by TOML and returns the JSON report; free with
 [`forensics_string_free`].

 # Safety
 `dataset` must be a live handle, `config_toml` NUL-terminated, `out` writable.
 */
enum ForensicsStatus forensics_run_battery(const struct ForensicsDataset *dataset,
                                           const char *config_toml,
                                           uint64_t master_seed,
                                           char **out);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void forensics_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORENSICS_H */
