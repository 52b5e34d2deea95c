#ifndef OMP_FFI_H
#define OMP_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OmpStatus {
  OMP_STATUS_OK = 0,
  OMP_STATUS_NULL_POINTER = 1,
  OMP_STATUS_INVALID_ARGUMENT = 2,
  OMP_STATUS_DEGENERATE = 3,
  OMP_STATUS_CAPACITY = 4,
  OMP_STATUS_HYPOTHESIS_VIOLATED = 5,
  // The result is infinite (zero noise or a zero isometry constant).
  OMP_STATUS_NOISE_FREE = 6,
  OMP_STATUS_BUFFER_TOO_SMALL = 7,
  OMP_STATUS_INTERNAL = 8,
} OmpStatus;

// Dense real matrix.
typedef struct OmpMatrix OmpMatrix;

// Result of one OMP run.
typedef struct OmpTrace OmpTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or "" after a
// success. The pointer stays valid until the next call into this library
// on the same thread.
const char *omp_last_error(void);

// Creates a `rows x cols` matrix from `rows * cols` row-major entries.
//
// # Safety
// `data` must point to `rows * cols` readable doubles and `out` must be writable.
enum OmpStatus omp_matrix_new(size_t rows, size_t cols, const double *data, struct OmpMatrix **out);

// # Safety
// `m` must be null or a handle from [`omp_matrix_new`] not yet freed.
void omp_matrix_free(struct OmpMatrix *m);

// # Safety
// `m` must be a live matrix handle.
size_t omp_matrix_rows(const struct OmpMatrix *m);

// # Safety
// `m` must be a live matrix handle.
size_t omp_matrix_cols(const struct OmpMatrix *m);

// Runs exactly `k` OMP iterations.
//
// # Safety
// `m` must be a live matrix handle, `y` must point to `y_len` doubles and
// `out` must be writable.
enum OmpStatus omp_run_fixed(const struct OmpMatrix *m,
                             const double *y,
                             size_t y_len,
                             size_t k,
                             struct OmpTrace **out);

// Runs OMP until `||r|| <= eps`.
//
// # Safety
// Same as [`omp_run_fixed`].
enum OmpStatus omp_run_residual(const struct OmpMatrix *m,
                                const double *y,
                                size_t y_len,
                                double eps,
                                struct OmpTrace **out);

// # Safety
// `t` must be null or a trace handle not yet freed.
void omp_trace_free(struct OmpTrace *t);

// Number of iterations performed.
//
// # Safety
// `t` must be a live trace handle.
size_t omp_trace_len(const struct OmpTrace *t);

// Copies the selected indices, in selection order, into `out[0..cap]`.
// `written` receives the number of iterations; when `cap` is smaller the
// call fails with `BufferTooSmall` and nothing is copied.
//
// # Safety
// `t` must be a live trace handle, `out` must have room for `cap` values
// and `written` must be writable.
enum OmpStatus omp_trace_selected(const struct OmpTrace *t,
                                  size_t *out,
                                  size_t cap,
                                  size_t *written);

// Copies the final length-`n` estimate into `out`; `len` must equal `n`.
//
// # Safety
// `t` must be a live trace handle and `out` must have room for `len` doubles.
enum OmpStatus omp_trace_estimate(const struct OmpTrace *t, double *out, size_t len);

// The trace as a JSON document. Release with [`omp_string_free`].
// Returns null when `t` is null.
//
// # Safety
// `t` must be null or a live trace handle.
char *omp_trace_to_json(const struct OmpTrace *t);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void omp_string_free(char *s);

// Exact isometry constant of the given order by exhaustive enumeration.
// `witness` (optional, room for `order` values) receives the attaining subset.
//
// # Safety
// `m` must be a live matrix handle, `delta` writable, and `witness` null or
// writable for `order` values.
enum OmpStatus omp_exact_rip(const struct OmpMatrix *m,
                             size_t order,
                             uint64_t cap,
                             double *delta,
                             size_t *witness);

// `||Phi x||^2 / ||v||^2` for a dense signal `x` (length `n`) and noise
// `v` (length `m`). Zero noise gives `NoiseFree` and writes infinity.
//
// # Safety
// `m` must be a live matrix handle, `x` and `noise` must point to
// `x_len` and `noise_len` doubles, and `out` must be writable.
enum OmpStatus omp_snr(const struct OmpMatrix *m,
                       const double *x,
                       size_t x_len,
                       const double *noise,
                       size_t noise_len,
                       double *out);

// Minimum-to-average ratio of a dense signal.
//
// # Safety
// `x` must point to `len` doubles and `out` must be writable.
enum OmpStatus omp_mar(const double *x, size_t len, double *out);

// Sufficient SNR threshold; either output may be null.
//
// # Safety
// Non-null outputs must be writable.
enum OmpStatus omp_sufficient_threshold(size_t k,
                                        double delta,
                                        double mar,
                                        double *sqrt_snr,
                                        double *snr);

// Necessary SNR threshold; either output may be null.
//
// # Safety
// Non-null outputs must be writable.
enum OmpStatus omp_necessary_threshold(size_t k,
                                       double delta,
                                       double mar,
                                       double *sqrt_snr,
                                       double *snr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMP_FFI_H */
