#ifndef INFLAP_FB_H
#define INFLAP_FB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InflapStatus {
  INFLAP_STATUS_OK = 0,
  INFLAP_STATUS_NULL_POINTER = 1,
  INFLAP_STATUS_INVALID_ARGUMENT = 2,
  INFLAP_STATUS_DOMAIN = 3,
  INFLAP_STATUS_GRID_COVERAGE = 4,
  INFLAP_STATUS_NON_CONVERGENCE = 5,
  INFLAP_STATUS_IO = 6,
  INFLAP_STATUS_FORMAT = 7,
  INFLAP_STATUS_NUMERIC = 8,
  INFLAP_STATUS_PANIC = 9,
} InflapStatus;

/**
 * Grid values on `[-1, 1]^n`.
 */
typedef struct InflapField InflapField;

/**
 * A finished JSON report.
 */
typedef struct InflapReport InflapReport;

/**
 * Barrier parameters picked for given `K`, `a`, `b`.
 */
typedef struct InflapBarrierChoice {
  double kappa;
  double theta;
  double kappa_bar;
  double lbar;
} InflapBarrierChoice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *inflap_last_error(void);

/**
 * Copies `len` row-major values into a new field of `m` points per axis in
 * dimension `n` (1 or 2).
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum InflapStatus inflap_field_new(size_t n,
                                   size_t m,
                                   const double *values,
                                   size_t len,
                                   struct InflapField **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum InflapStatus inflap_field_load_csv(const char *path, struct InflapField **out);

/**
 * # Safety
 * `field` must come from this library; `path` must be NUL-terminated.
 */
enum InflapStatus inflap_field_save_csv(const struct InflapField *field, const char *path);

/**
 * Number of nodes, or 0 for NULL.
 *
 * # Safety
 * `field` must be NULL or come from this library.
 */
size_t inflap_field_len(const struct InflapField *field);

/**
 * # Safety
 * `field` must be NULL or come from this library.
 */
size_t inflap_field_points_per_axis(const struct InflapField *field);

/**
 * Copies the values out; `len` must equal [`inflap_field_len`].
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum InflapStatus inflap_field_copy_values(const struct InflapField *field,
                                           double *out,
                                           size_t len);

/**
 * # Safety
 * `field` must be NULL or come from this library, and not be used afterwards.
 */
void inflap_field_free(struct InflapField *field);

/**
 * The exact two-phase profile with constant `c`.
 *
 * # Safety
 * `out` must be writable.
 */
enum InflapStatus inflap_manufactured(double c, size_t n, size_t m, struct InflapField **out);

/**
 * Solves the manufactured problem from a zero interior guess. On
 * non-convergence `*out` still receives the last iterate.
 *
 * # Safety
 * `out` must be writable; `iterations` may be NULL.
 */
enum InflapStatus inflap_solve_manufactured(double c,
                                            size_t n,
                                            size_t m,
                                            double tol,
                                            size_t max_iters,
                                            struct InflapField **out,
                                            size_t *iterations);

/**
 * # Safety
 * `out` must be writable.
 */
enum InflapStatus inflap_choose_parameters(double k,
                                           double a,
                                           double b,
                                           struct InflapBarrierChoice *out);

/**
 * Samples the barrier inequality at `samples` interior points. `*pass` is
 * 1 when it holds strictly everywhere; `worst_margin` may be NULL.
 *
 * # Safety
 * `pass` must be writable.
 */
enum InflapStatus inflap_verify_keq(double kappa,
                                    double theta,
                                    double l,
                                    double a,
                                    double b,
                                    double k,
                                    size_t samples,
                                    int32_t *pass,
                                    double *worst_margin);

/**
 * Exhaustive sup of the difference quotient over the ball of `radius`.
 *
 * # Safety
 * `field` must come from this library; `out` must be writable.
 */
enum InflapStatus inflap_lipschitz_quotient(const struct InflapField *field,
                                            double radius,
                                            double *out);

/**
 * Runs the doubling-of-variables certificate on `u`. `l_override <= 0`
 * keeps the ledger's `L`. A failed certificate is not an error: check
 * [`inflap_report_pass`].
 *
 * # Safety
 * All handles must come from this library; `out` must be writable.
 */
enum InflapStatus inflap_certify(const struct InflapField *u,
                                 const struct InflapField *fplus,
                                 const struct InflapField *fminus,
                                 double lambda,
                                 double l_override,
                                 struct InflapReport **out);

/**
 * Viscosity survey of `u` with default tolerances.
 *
 * # Safety
 * All handles must come from this library; `out` must be writable.
 */
enum InflapStatus inflap_viscosity(const struct InflapField *u,
                                   const struct InflapField *fplus,
                                   const struct InflapField *fminus,
                                   double lambda,
                                   struct InflapReport **out);

/**
 * 1 when every check passed, 0 otherwise (or for NULL).
 *
 * # Safety
 * `report` must be NULL or come from this library.
 */
int32_t inflap_report_pass(const struct InflapReport *report);

/**
 * The report as JSON, owned by the handle.
 *
 * # Safety
 * `report` must be NULL or come from this library.
 */
const char *inflap_report_json(const struct InflapReport *report);

/**
 * # Safety
 * `report` must come from this library; `path` must be NUL-terminated.
 */
enum InflapStatus inflap_report_write(const struct InflapReport *report, const char *path);

/**
 * # Safety
 * `report` must be NULL or come from this library, and not be used afterwards.
 */
void inflap_report_free(struct InflapReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFLAP_FB_H */
