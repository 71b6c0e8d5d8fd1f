#ifndef NESTCELL_H
#define NESTCELL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum NcStatus {
  NC_STATUS_OK = 0,
  NC_STATUS_NULL_POINTER = 1,
  NC_STATUS_INVALID_ARGUMENT = 2,
  NC_STATUS_CONFIG_ERROR = 3,
  NC_STATUS_GEOMETRY_ERROR = 4,
  NC_STATUS_DELAY_ERROR = 5,
  NC_STATUS_CHANNEL_ERROR = 6,
  NC_STATUS_TOMOGRAPHY_ERROR = 7,
  NC_STATUS_PANIC = 99,
} NcStatus;

/**
 * Cell geometry together with its injection.
 */
typedef struct NcCellConfig NcCellConfig;

typedef struct NcDensityMatrix NcDensityMatrix;

typedef struct NcTracePath NcTracePath;

/**
 * One reflection, copied out of a trace.
 */
typedef struct NcSpot {
  uint64_t pass_index;
  /**
   * 1 = entry mirror, 2 = exit mirror.
   */
  uint8_t mirror_id;
  /**
   * 0 = outer annulus, 1 = inner disk.
   */
  uint8_t surface_id;
  double x;
  double y;
  double z;
  double radial_dist;
  double cumulative_path;
} NcSpot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. Valid until
 * the next failing call on the same thread.
 */
const char *nc_last_error(void);

/**
 * Reference cell with its calibrated injection.
 */
struct NcCellConfig *nc_cell_reference(void);

/**
 * Parses a run configuration (TOML text) and keeps its cell and injection.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum NcStatus nc_cell_from_toml(const char *toml, struct NcCellConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards.
 */
void nc_cell_free(struct NcCellConfig *cfg);

/**
 * Rotates the exit pupil so the beam leaves after `6i` reflections.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum NcStatus nc_cell_set_setting(struct NcCellConfig *cfg, uint64_t i);

/**
 * Traces up to `max_passes` straight segments.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum NcStatus nc_trace(const struct NcCellConfig *cfg,
                       uint64_t max_passes,
                       struct NcTracePath **out);

/**
 * # Safety
 * `path` must come from this library and not be used afterwards.
 */
void nc_trace_free(struct NcTracePath *path);

/**
 * Number of reflections; 0 for a null handle.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
uint64_t nc_trace_n_reflections(const struct NcTracePath *path);

/**
 * 1 if the beam left through the exit pupil, else 0.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
int32_t nc_trace_exited(const struct NcTracePath *path);

/**
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum NcStatus nc_trace_delay_ns(const struct NcTracePath *path, double *out);

/**
 * Copies reflection `index` (0-based).
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum NcStatus nc_trace_spot(const struct NcTracePath *path, uint64_t index, struct NcSpot *out);

/**
 * `R^n·(1 − excess)` for a wavelength-flat reflectance `R`.
 *
 * # Safety
 * `out` must be writable.
 */
enum NcStatus nc_transmission_efficiency(uint64_t n_reflections,
                                         double reflectance,
                                         double excess_loss,
                                         double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum NcStatus nc_fiber_efficiency(double delay_ns,
                                  double attenuation_db_per_km,
                                  double coupling_loss_db,
                                  double group_index,
                                  double *out);

/**
 * `|Φ+⟩⟨Φ+|` on signal ⊗ idler.
 */
struct NcDensityMatrix *nc_density_bell_phi_plus(void);

/**
 * Builds a density matrix from `dim·dim` row-major entries given as
 * separate real and imaginary arrays.
 *
 * # Safety
 * `re` and `im` must each point to `dim·dim` doubles; `out` must be writable.
 */
enum NcStatus nc_density_new(const double *re,
                             const double *im,
                             uint64_t dim,
                             struct NcDensityMatrix **out);

/**
 * # Safety
 * `rho` must come from this library and not be used afterwards.
 */
void nc_density_free(struct NcDensityMatrix *rho);

/**
 * Matrix dimension; 0 for a null handle.
 *
 * # Safety
 * `rho` must be null or a live handle.
 */
uint64_t nc_density_dim(const struct NcDensityMatrix *rho);

/**
 * # Safety
 * `rho` must be a live handle; `re` and `im` writable.
 */
enum NcStatus nc_density_get(const struct NcDensityMatrix *rho,
                             uint64_t row,
                             uint64_t col,
                             double *re,
                             double *im);

/**
 * Uhlmann fidelity `(Tr√(√ρ σ √ρ))²`.
 *
 * # Safety
 * `a`, `b` must be live handles and `out` writable.
 */
enum NcStatus nc_state_fidelity(const struct NcDensityMatrix *a,
                                const struct NcDensityMatrix *b,
                                double *out);

/**
 * Sends the signal photon of a two-photon state through `n_bounces`
 * identical reflections followed by a depolarizing admixture `p`.
 *
 * # Safety
 * `rho` must be a live 4×4 handle and `out` writable.
 */
enum NcStatus nc_channel_apply_signal(const struct NcDensityMatrix *rho,
                                      uint64_t n_bounces,
                                      double retardance,
                                      double diattenuation,
                                      double axis_azimuth,
                                      double depolarizing_p,
                                      struct NcDensityMatrix **out);

/**
 * Simulates Poisson coincidences on the 16-setting design for a 4×4 state
 * and returns the maximum-likelihood reconstruction.
 *
 * # Safety
 * `rho` must be a live 4×4 handle and `out` writable.
 */
enum NcStatus nc_qst_simulate_mle(const struct NcDensityMatrix *rho,
                                  double pairs_per_setting,
                                  uint64_t seed,
                                  struct NcDensityMatrix **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NESTCELL_H */
