#ifndef MHD_H
#define MHD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MhdStatus {
  MHD_STATUS_OK = 0,
  MHD_STATUS_NULL_POINTER = 1,
  MHD_STATUS_INVALID_ARGUMENT = 2,
  MHD_STATUS_VALIDATION = 3,
  MHD_STATUS_NO_CONVERGENCE = 4,
  MHD_STATUS_UNSTABLE = 5,
  MHD_STATUS_IO = 6,
  MHD_STATUS_FORMAT = 7,
  MHD_STATUS_PANIC = 8,
} MhdStatus;

/**
 * Opaque simulation handle.
 */
typedef struct MhdCase MhdCase;

/**
 * Result of a transient fit `u0 e^{-s t} sin(w t + phi) + s0`.
 */
typedef struct MhdFit {
  double u0;
  double s;
  double w;
  double phi;
  double s0;
  double residual_norm;
  size_t iterations;
} MhdFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null.  Valid until the
 * next failing call on the same thread.
 */
const char *mhd_last_error_message(void);

void mhd_clear_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *mhd_version(void);

/**
 * Create a case.  `kind` is "shercliff", "hunt" or "conducting_wall".
 *
 * # Safety
 * `kind` must be a valid C string; `out_case` must be writable.
 */
enum MhdStatus mhd_case_new(const char *kind,
                            double ha,
                            size_t order,
                            size_t ex,
                            size_t ey,
                            size_t ez,
                            double length,
                            struct MhdCase **out_case);

/**
 * Create a case from configuration text in the CLI format.
 *
 * # Safety
 * `config_text` must be a valid C string; `out_case` must be writable.
 */
enum MhdStatus mhd_case_new_from_config(const char *config_text, struct MhdCase **out_case);

/**
 * # Safety
 * `case` must come from `mhd_case_new*` and not be used afterwards; null is ignored.
 */
void mhd_case_free(struct MhdCase *case_);

/**
 * Advance `steps` time steps.
 *
 * # Safety
 * `case` must be a live handle.
 */
enum MhdStatus mhd_case_step(struct MhdCase *case_, size_t steps);

/**
 * March to steady state with the case's own criterion.
 *
 * # Safety
 * `case` must be a live handle; `out_converged` may be null.
 */
enum MhdStatus mhd_case_march_to_steady(struct MhdCase *case_, int *out_converged);

/**
 * # Safety
 * `case` must be a live handle; `out_time` must be writable.
 */
enum MhdStatus mhd_case_time(const struct MhdCase *case_, double *out_time);

/**
 * Axial velocity and induced field at the duct center.
 *
 * # Safety
 * `case` must be a live handle; both outputs must be writable.
 */
enum MhdStatus mhd_case_center(const struct MhdCase *case_, double *out_u, double *out_b);

/**
 * Write the current fields as a binary dump.
 *
 * # Safety
 * `case` must be a live handle; `path` a valid C string.
 */
enum MhdStatus mhd_case_write_dump(const struct MhdCase *case_, const char *path);

/**
 * Modal decay `s` and frequency `w`; when `*out_oscillatory == 0` the two
 * outputs hold the real eigenvalue pair instead.
 *
 * # Safety
 * All outputs must be writable.
 */
enum MhdStatus mhd_modal_eigenvalues(double re,
                                     double rm,
                                     double ha,
                                     double *out_s,
                                     double *out_w,
                                     int *out_oscillatory);

/**
 * Center values of the steady reduced-equation solution.  `bc`: 0 insulating,
 * 1 Hunt.  `n` interior points per direction (at least `8 Ha`).
 *
 * # Safety
 * Both outputs must be writable.
 */
enum MhdStatus mhd_oracle_center(double ha, int bc, size_t n, double *out_u, double *out_b);

/**
 * Five-parameter fit of a center-velocity history, seeded by the modal model.
 *
 * # Safety
 * `times` and `values` must point to `len` doubles; `out_fit` must be writable.
 */
enum MhdStatus mhd_fit_transient(const double *times,
                                 const double *values,
                                 size_t len,
                                 double re,
                                 double rm,
                                 double ha,
                                 struct MhdFit *out_fit);

/**
 * Fit of `(u0, phi, s0)` with `s` and `w` pinned.
 *
 * # Safety
 * As [`mhd_fit_transient`].
 */
enum MhdStatus mhd_fit_transient_constrained(const double *times,
                                             const double *values,
                                             size_t len,
                                             double ha,
                                             double s,
                                             double w,
                                             struct MhdFit *out_fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MHD_H */
