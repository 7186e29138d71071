#ifndef AQGD_H
#define AQGD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Values 2 to 4 match the CLI exit codes.
typedef enum AqgdStatus {
  AQGD_STATUS_OK = 0,
  AQGD_STATUS_FAILED = 1,
  AQGD_STATUS_INVARIANT_VIOLATION = 2,
  AQGD_STATUS_DIVERGENCE = 3,
  AQGD_STATUS_CONFIG_ERROR = 4,
  AQGD_STATUS_NULL_POINTER = 5,
  AQGD_STATUS_INVALID_ARGUMENT = 6,
  AQGD_STATUS_UNSTABILIZING = 7,
  AQGD_STATUS_PANIC = 8,
} AqgdStatus;

// Opaque experiment configuration.
typedef struct AqgdConfig AqgdConfig;

// Opaque result of one experiment run.
typedef struct AqgdRun AqgdRun;

// Opaque linear system with quadratic cost.
typedef struct AqgdSystem AqgdSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null. Valid until
// the next failing call on the same thread.
const char *aqgd_last_error(void);

// Static description of a status value.
const char *aqgd_status_str(enum AqgdStatus status);

// `√d / 2^b`, the contraction factor of the b-bit scalar quantizer.
double aqgd_scalar_gamma(size_t dim, uint32_t bits);

// Quantizes `x` (length `dim`, `‖x‖ ≤ range`) with `bits` per coordinate and
// writes the reconstruction to `out`.
//
// # Safety
// `x` and `out` must point to `dim` doubles.
enum AqgdStatus aqgd_scalar_quantize(const double *x,
                                     size_t dim,
                                     double range,
                                     uint32_t bits,
                                     double *out);

// Configuration with every key at its default.
struct AqgdConfig *aqgd_config_new(void);

// Parses the `key = value` text format.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum AqgdStatus aqgd_config_parse(const char *text, struct AqgdConfig **out);

// Assigns one key, using the names of the text format.
//
// # Safety
// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
enum AqgdStatus aqgd_config_set(struct AqgdConfig *cfg, const char *key, const char *value);

// # Safety
// `cfg` must be null or come from this library, and is invalid afterwards.
void aqgd_config_free(struct AqgdConfig *cfg);

// Runs the experiment. Invariant violations are reported through
// [`aqgd_run_violations`], not the status.
//
// # Safety
// `cfg` must come from this library and `out` must be a valid pointer.
enum AqgdStatus aqgd_run(const struct AqgdConfig *cfg, struct AqgdRun **out);

// Number of recorded iterates, `T + 1`; zero for a null handle.
//
// # Safety
// `run` must be null or come from this library.
size_t aqgd_run_len(const struct AqgdRun *run);

// Copies the optimality gaps into `out`, which holds `len` doubles; `len`
// must equal [`aqgd_run_len`].
//
// # Safety
// `run` must come from this library and `out` must point to `len` doubles.
enum AqgdStatus aqgd_run_gaps(const struct AqgdRun *run, double *out, size_t len);

// # Safety
// `run` must be null or come from this library.
double aqgd_run_final_gap(const struct AqgdRun *run);

// # Safety
// `run` must be null or come from this library.
uint64_t aqgd_run_total_bits(const struct AqgdRun *run);

// # Safety
// `run` must be null or come from this library.
size_t aqgd_run_violations(const struct AqgdRun *run);

// Writes the trace CSV and its summary file.
//
// # Safety
// `run` must come from this library and `path` must be NUL-terminated.
enum AqgdStatus aqgd_run_write_csv(const struct AqgdRun *run, const char *path);

// # Safety
// `run` must be null or come from this library, and is invalid afterwards.
void aqgd_run_free(struct AqgdRun *run);

// Builds `x' = Ax + Bu + w` with stage cost `xᵀQx + uᵀRu` and noise
// covariance `sigma_w`. `a`, `q`, `sigma_w` are n×n, `b` is n×m, `r` is m×m.
//
// # Safety
// Each matrix pointer must hold the stated number of doubles; `out` must be valid.
enum AqgdStatus aqgd_system_new(size_t n,
                                size_t m,
                                const double *a,
                                const double *b,
                                const double *q,
                                const double *r,
                                const double *sigma_w,
                                struct AqgdSystem **out);

// Random Schur-stable instance with spectral radius `rho`, `Q = R = 5I`, `Σ_w = I`.
//
// # Safety
// `out` must be a valid pointer.
enum AqgdStatus aqgd_system_random(size_t n,
                                   size_t m,
                                   uint64_t seed,
                                   double rho,
                                   struct AqgdSystem **out);

// # Safety
// `sys` must come from this library and `out` must point to two `size_t`s.
enum AqgdStatus aqgd_system_dims(const struct AqgdSystem *sys, size_t *n, size_t *m);

// Average cost of `u = Kx` for the m×n gain `k`.
//
// # Safety
// `sys` must come from this library, `k` must hold m·n doubles, `cost` must be valid.
enum AqgdStatus aqgd_system_cost(const struct AqgdSystem *sys, const double *k, double *cost);

// Exact gradient of the cost at `k`, written row-major to `grad`.
//
// # Safety
// `sys` must come from this library; `k` and `grad` must hold m·n doubles.
enum AqgdStatus aqgd_system_grad(const struct AqgdSystem *sys, const double *k, double *grad);

// Optimal gain (row-major, m×n) and its cost from the Riccati solution.
//
// # Safety
// `sys` must come from this library; `gain` must hold m·n doubles and `cost` be valid.
enum AqgdStatus aqgd_system_optimal(const struct AqgdSystem *sys, double *gain, double *cost);

// # Safety
// `sys` must be null or come from this library, and is invalid afterwards.
void aqgd_system_free(struct AqgdSystem *sys);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AQGD_H */
