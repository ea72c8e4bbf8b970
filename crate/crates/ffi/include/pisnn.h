/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef PISNN_H
#define PISNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PISNN_BOUNDARY_DIRICHLET 0

#define PISNN_BOUNDARY_INSULATED 1

#define PISNN_BOUNDARY_PERIODIC 2

#define PISNN_INTEGRATOR_EULER 0

#define PISNN_INTEGRATOR_RK4 1

typedef enum PisnnStatus {
  PISNN_STATUS_OK = 0,
  PISNN_STATUS_NULL_POINTER = 1,
  PISNN_STATUS_INVALID_ARGUMENT = 2,
  PISNN_STATUS_INVALID_GRID = 3,
  PISNN_STATUS_CFL_VIOLATION = 4,
  PISNN_STATUS_SHAPE_MISMATCH = 5,
  PISNN_STATUS_NON_FINITE = 6,
  PISNN_STATUS_QUOTA_TOO_SMALL = 7,
  PISNN_STATUS_INDEX_OUT_OF_RANGE = 8,
  PISNN_STATUS_PANIC = 9,
} PisnnStatus;

/**
 * Opaque simulation handle.
 */
typedef struct PisnnSim PisnnSim;

/**
 * One axis: a `PISNN_BOUNDARY_*` kind and, for Dirichlet, the wall values.
 */
typedef struct PisnnAxis {
  uint32_t kind;
  double lower;
  double upper;
} PisnnAxis;

/**
 * Grid description. `dims` is 1 or 2; `ly`, `dy` and `y` are ignored in 1D.
 */
typedef struct PisnnGridDesc {
  uint32_t dims;
  double lx;
  double ly;
  double dx;
  double dy;
  double dt;
  struct PisnnAxis x;
  struct PisnnAxis y;
} PisnnGridDesc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a simulation with constant diffusivity `kappa` from `len` initial
 * cell values (row-major, x fastest). On success `*out` owns the handle.
 *
 * # Safety
 * `desc` must point to a valid descriptor, `u0` to `len` doubles, and `out`
 * to writable storage for one pointer.
 */
enum PisnnStatus pisnn_sim_new(const struct PisnnGridDesc *desc,
                               double kappa,
                               double quota,
                               uint32_t integrator,
                               const double *u0,
                               size_t len,
                               struct PisnnSim **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle not yet freed.
 */
void pisnn_sim_free(struct PisnnSim *sim);

/**
 * Number of cells, or 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
size_t pisnn_sim_n_cells(const struct PisnnSim *sim);

/**
 * Advances `n_steps` steps. On failure the state is left at the last
 * successful step.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum PisnnStatus pisnn_sim_step(struct PisnnSim *sim, size_t n_steps);

/**
 * Copies the state into `buf`, which must hold exactly `n_cells` values.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` writes.
 */
enum PisnnStatus pisnn_sim_get_state(const struct PisnnSim *sim, double *buf, size_t len);

/**
 * Overwrites `n` cells with observed values; the change is booked as a source
 * in the conservation ledger.
 *
 * # Safety
 * `sim` must be a live handle; `cells` and `values` valid for `n` reads.
 */
enum PisnnStatus pisnn_sim_assimilate(struct PisnnSim *sim,
                                      const size_t *cells,
                                      const double *values,
                                      size_t n);

/**
 * # Safety
 * `sim` must be a live handle.
 */
enum PisnnStatus pisnn_sim_set_quota(struct PisnnSim *sim, double quota);

/**
 * Simulated time.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PisnnStatus pisnn_sim_time(const struct PisnnSim *sim, double *out);

/**
 * Total mass `ΔV·Σu`.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PisnnStatus pisnn_sim_total_mass(const struct PisnnSim *sim, double *out);

/**
 * Spikes emitted since creation (stage-averaged per step).
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PisnnStatus pisnn_sim_total_spikes(const struct PisnnSim *sim, double *out);

/**
 * Relative mismatch between the mass and the ledger's expected mass.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum PisnnStatus pisnn_sim_ledger_residual(const struct PisnnSim *sim, double *out);

/**
 * Quantizes `n` fluxes to signed quanta counts with `|out·quota − flux| ≤ quota/2`.
 *
 * # Safety
 * `flux` must be valid for `n` reads and `out` for `n` writes.
 */
enum PisnnStatus pisnn_quantize(const double *flux, size_t n, double quota, int64_t *out);

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *pisnn_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pisnn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PISNN_H */
