#ifndef IBCOMPOSITE_H
#define IBCOMPOSITE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define IBC_COMPOSITE 0

#define IBC_PROTOTYPICAL 1

#define IBC_PRESCRIBED 2

/**
 * Result codes.
 */
typedef enum IbcStatus {
  IBC_STATUS_OK = 0,
  IBC_STATUS_NULL_POINTER = 1,
  IBC_STATUS_INVALID_ARGUMENT = 2,
  IBC_STATUS_INVALID_GRID = 3,
  IBC_STATUS_NON_CONVERGENCE = 4,
  IBC_STATUS_SINGULAR = 5,
  IBC_STATUS_NON_FINITE = 6,
  IBC_STATUS_MAX_STEPS = 7,
  IBC_STATUS_BUFFER_TOO_SMALL = 8,
  IBC_STATUS_PANIC = 9,
  IBC_STATUS_OTHER = 10,
} IbcStatus;

/**
 * Circular Couette flow stepper.
 */
typedef struct IbcCouette IbcCouette;

/**
 * Circle interface Poisson problem on an `n` by `n` grid.
 */
typedef struct IbcPoisson2d IbcPoisson2d;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of the calling thread into `buf`.
 *
 * Returns the buffer size needed including the terminating NUL, or 0 when no
 * error is recorded. The message is truncated if `len` is too small.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ibc_last_error_message(char *buf, size_t len);

/**
 * Forget the last error message of the calling thread.
 */
void ibc_clear_error(void);

/**
 * Solve the 1D interface problem on `n` cells of the unit interval.
 *
 * Writes the `n` cell values to `u_out` and the derivative jump to
 * `forcing_out`.
 *
 * # Safety
 * `u_out` must point to `u_len` writable doubles and `forcing_out` to one
 * writable double.
 */
enum IbcStatus ibc_poisson1d_solve(size_t n,
                                   int formulation_id,
                                   double *u_out,
                                   size_t u_len,
                                   double *forcing_out);

/**
 * Create a circle Poisson problem with marker spacing `ds_dx` grid cells.
 *
 * # Safety
 * `out` must point to a writable handle slot. The handle must be released
 * with [`ibc_poisson2d_free`].
 */
enum IbcStatus ibc_poisson2d_new(size_t n, double ds_dx, struct IbcPoisson2d **out);

/**
 * Number of cells of the problem grid, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle from [`ibc_poisson2d_new`].
 */
size_t ibc_poisson2d_cell_count(const struct IbcPoisson2d *h);

/**
 * Number of interface markers, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle from [`ibc_poisson2d_new`].
 */
size_t ibc_poisson2d_marker_count(const struct IbcPoisson2d *h);

/**
 * Solve with the given formulation. Cell values go to `u_out` (row by row,
 * x fastest); the largest marker error of the computed derivative jump goes
 * to `forcing_err_out`.
 *
 * # Safety
 * `h` must be a live handle, `u_out` must point to `u_len` writable doubles
 * and `forcing_err_out` must be null or point to one writable double.
 */
enum IbcStatus ibc_poisson2d_solve(const struct IbcPoisson2d *h,
                                   int formulation_id,
                                   double *u_out,
                                   size_t u_len,
                                   double *forcing_err_out);

/**
 * Release a Poisson handle. Null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from [`ibc_poisson2d_new`] not yet freed.
 */
void ibc_poisson2d_free(struct IbcPoisson2d *h);

/**
 * Create a Couette flow problem at rest on an `n` by `n` grid.
 *
 * `formulation_id` is [`IBC_COMPOSITE`] or [`IBC_PROTOTYPICAL`]. A
 * non-positive `dt` selects the default stable step.
 *
 * # Safety
 * `out` must point to a writable handle slot. The handle must be released
 * with [`ibc_couette_free`].
 */
enum IbcStatus ibc_couette_new(size_t n,
                               double ds_dx,
                               int formulation_id,
                               double re,
                               double dt,
                               struct IbcCouette **out);

/**
 * Advance `count` steps. The relative velocity change of the last step goes
 * to `change_out` when it is not null.
 *
 * # Safety
 * `h` must be a live handle and `change_out` null or writable.
 */
enum IbcStatus ibc_couette_step(struct IbcCouette *h, size_t count, double *change_out);

/**
 * Step until steady state. The number of steps taken goes to `steps_out`
 * when it is not null. The state is left unchanged on failure.
 *
 * # Safety
 * `h` must be a live handle and `steps_out` null or writable.
 */
enum IbcStatus ibc_couette_run_to_steady(struct IbcCouette *h, size_t *steps_out);

/**
 * Simulated time, or NaN for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
double ibc_couette_time(const struct IbcCouette *h);

/**
 * Number of entries per velocity component, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t ibc_couette_face_count(const struct IbcCouette *h);

/**
 * Copy the x and y face velocities.
 *
 * # Safety
 * `h` must be a live handle; `vx` and `vy` must each point to `len`
 * writable doubles.
 */
enum IbcStatus ibc_couette_velocity(const struct IbcCouette *h, double *vx, double *vy, size_t len);

/**
 * Largest velocity error relative to the exact steady profile.
 *
 * # Safety
 * `h` must be a live handle and `err_out` writable.
 */
enum IbcStatus ibc_couette_error(const struct IbcCouette *h, double *err_out);

/**
 * Release a Couette handle. Null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from [`ibc_couette_new`] not yet freed.
 */
void ibc_couette_free(struct IbcCouette *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IBCOMPOSITE_H */
