/* Copyright 2026 The dmq Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the dmq toolkit.
 *
 * Every function returns a dmq_status. On failure, dmq_last_error() returns
 * a message for the calling thread, valid until its next dmq call. Handles
 * are opaque and owned by the caller; release them with the matching
 * *_destroy function (NULL is accepted).
 */
#ifndef DMQ_DMQ_H_
#define DMQ_DMQ_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DMQ_API __declspec(dllexport)
#else
#define DMQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* The numeric values double as CLI exit codes. */
typedef enum dmq_status {
  DMQ_OK = 0,
  DMQ_ERR_ARGUMENT = 1,
  DMQ_ERR_CONFIG = 2,
  DMQ_ERR_DATA = 3,
  DMQ_ERR_NUMERIC_DIVERGENCE = 4,
  DMQ_ERR_GENERATOR = 5,
  DMQ_ERR_STATE = 6,
  DMQ_ERR_CALIBRATION_COVERAGE = 7,
  DMQ_ERR_DEGENERATE_PROFILE = 8,
  DMQ_ERR_INSUFFICIENT_DATA = 9,
  DMQ_ERR_INTERNAL = 10
} dmq_status;

typedef struct dmq_config dmq_config;
typedef struct dmq_model dmq_model;

/* Receives command output. `text` is not NUL-terminated beyond `len`. */
typedef void (*dmq_write_fn)(const char* text, size_t len, void* user);

DMQ_API const char* dmq_version(void);
DMQ_API const char* dmq_last_error(void);
DMQ_API const char* dmq_status_name(dmq_status status);

/* ---- configuration ---------------------------------------------------- */

DMQ_API dmq_status dmq_config_create(dmq_config** out);
DMQ_API void dmq_config_destroy(dmq_config* cfg);
/* Merges a JSON config file over the current values. */
DMQ_API dmq_status dmq_config_load_file(dmq_config* cfg, const char* path);
/* "key=value"; dotted keys address nested objects. */
DMQ_API dmq_status dmq_config_set(dmq_config* cfg, const char* assignment);
/* Canonical JSON of the resolved config. Writes at most `cap` bytes
 * including the terminator; `*needed` (optional) receives the full size. */
DMQ_API dmq_status dmq_config_dump(const dmq_config* cfg, char* buf, size_t cap, size_t* needed);
/* 16 hex digits plus terminator: `cap` must be at least 17. */
DMQ_API dmq_status dmq_config_hash(const dmq_config* cfg, char* buf, size_t cap);

/* ---- commands --------------------------------------------------------- */

/* Runs one of: train, profile, prompts, calibset, quantize, sweep, compare,
 * scale, report. Output goes to `write` (stdout when NULL). */
DMQ_API dmq_status dmq_run_command(const dmq_config* cfg, const char* command,
                                   dmq_write_fn write, void* user);

/* ---- models ----------------------------------------------------------- */

DMQ_API dmq_status dmq_model_load(const char* path, dmq_model** out);
DMQ_API void dmq_model_destroy(dmq_model* model);
DMQ_API dmq_status dmq_model_info(const dmq_model* model, size_t* num_layers,
                                  size_t* param_count, int* timesteps);
/* Generates n samples for a caption into out[n * 2] (row-major). */
DMQ_API dmq_status dmq_model_generate(const dmq_model* model, const char* caption, size_t n,
                                      uint64_t seed, double* out);
/* Size accounting for a policy such as "8W8A". */
DMQ_API dmq_status dmq_model_size(const dmq_model* model, const char* policy,
                                  int preserve_sensitive, int include_overhead,
                                  uint64_t* full_bytes, uint64_t* quantized_bytes,
                                  double* reduction_pct);

/* ---- kernels ---------------------------------------------------------- */

/* Fits per-tensor params (symmetric != 0 selects Z = 0) with minmax ranges
 * and fake-quantizes `values` in place. */
DMQ_API dmq_status dmq_fake_quantize(double* values, size_t n, int bitwidth, int symmetric,
                                     double* scale, int32_t* zero_point);
/* Frechet distance between two Gaussians of dimension d. Covariances are
 * d x d row-major. */
DMQ_API dmq_status dmq_frechet_distance(const double* mu_a, const double* sigma_a,
                                        const double* mu_b, const double* sigma_b, size_t d,
                                        double* out);
/* Coverage bits ('0'/'1') of `text` under the built-in aspect set, written as
 * a NUL-terminated string; `cap` must exceed the aspect count. */
DMQ_API dmq_status dmq_coverage_vector(const char* text, char* buf, size_t cap);

#ifdef __cplusplus
}
#endif

#endif /* DMQ_DMQ_H_ */
