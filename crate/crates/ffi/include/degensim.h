#ifndef DEGENSIM_H
#define DEGENSIM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_CONFIG = 3,
  DS_STATUS_DOMAIN = 4,
  DS_STATUS_NOT_CONVERGED = 5,
  DS_STATUS_IO = 6,
  DS_STATUS_PANIC = 7,
} DsStatus;

/**
 * Opaque parsed run configuration.
 */
typedef struct DsConfig DsConfig;

/**
 * Opaque nonlinearity evaluator.
 */
typedef struct DsPhi DsPhi;

/**
 * Opaque in-memory simulation result: the states at every computed step.
 */
typedef struct DsSimulation DsSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * always NUL-terminated when `capacity > 0`). Returns the length the full
 * message needs including the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be NULL or point to at least `capacity` writable bytes.
 */
size_t ds_last_error_message(char *buf, size_t capacity);

/**
 * Singular nonlinearity on (-1, 1) with `phi(0) = 0` and
 * `phi'(z) = |z|^b / (1 - |z|)^a`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum DsStatus ds_phi_singular_power(double a, double b, struct DsPhi **out);

/**
 * `phi(z) = |z|^(m - 1) z`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum DsStatus ds_phi_porous_medium(double m, struct DsPhi **out);

/**
 * `phi(z) = slope * z`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum DsStatus ds_phi_linear(double slope, struct DsPhi **out);

/**
 * # Safety
 * `phi` must come from a `ds_phi_*` constructor; `out` must be valid for writes.
 */
enum DsStatus ds_phi_value(const struct DsPhi *phi, double z, double *out);

/**
 * # Safety
 * As for [`ds_phi_value`].
 */
enum DsStatus ds_phi_derivative(const struct DsPhi *phi, double z, double *out);

/**
 * Inverse of `phi`, defined on the whole real line.
 *
 * # Safety
 * As for [`ds_phi_value`].
 */
enum DsStatus ds_phi_inverse(const struct DsPhi *phi, double w, double *out);

/**
 * `int_zbar^z (phi(s) - phi(zbar)) ds`.
 *
 * # Safety
 * As for [`ds_phi_value`].
 */
enum DsStatus ds_phi_relative_energy(const struct DsPhi *phi, double z, double zbar, double *out);

/**
 * # Safety
 * `phi` must be NULL or a handle not yet freed.
 */
void ds_phi_free(struct DsPhi *phi);

/**
 * Parses a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum DsStatus ds_config_from_file(const char *path, struct DsConfig **out);

/**
 * Parses configuration text. Relative file paths inside it resolve against
 * `base_dir` (the current directory when NULL).
 *
 * # Safety
 * `text` must be NUL-terminated; `base_dir` NULL or NUL-terminated; `out`
 * valid for writes.
 */
enum DsStatus ds_config_from_str(const char *text, const char *base_dir, struct DsConfig **out);

/**
 * 1 when the configuration describes the coupled two-field system, 0 when
 * scalar, -1 for a NULL handle.
 *
 * # Safety
 * `cfg` must be NULL or a live handle.
 */
int ds_config_is_coupled(const struct DsConfig *cfg);

/**
 * Number of time steps the configuration asks for (0 for a NULL handle).
 *
 * # Safety
 * `cfg` must be NULL or a live handle.
 */
size_t ds_config_steps(const struct DsConfig *cfg);

/**
 * # Safety
 * `cfg` must be NULL or a handle not yet freed.
 */
void ds_config_free(struct DsConfig *cfg);

/**
 * Runs the configured simulation in memory (no files are written).
 *
 * On `DS_STATUS_NOT_CONVERGED` the result still holds the steps completed
 * before the failure and `*out` is set; on other errors `*out` is untouched.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be valid for writes.
 */
enum DsStatus ds_simulate(const struct DsConfig *cfg, struct DsSimulation **out);

/**
 * Number of stored states (completed steps plus the initial state).
 *
 * # Safety
 * `sim` must be NULL or a live handle.
 */
size_t ds_simulation_states(const struct DsSimulation *sim);

/**
 * Number of steps the run was configured for.
 *
 * # Safety
 * `sim` must be NULL or a live handle.
 */
size_t ds_simulation_requested_steps(const struct DsSimulation *sim);

/**
 * Number of grid cells per state.
 *
 * # Safety
 * `sim` must be NULL or a live handle.
 */
size_t ds_simulation_cells(const struct DsSimulation *sim);

/**
 * 1 when the result carries a second field `v`.
 *
 * # Safety
 * `sim` must be NULL or a live handle.
 */
int ds_simulation_has_v(const struct DsSimulation *sim);

/**
 * # Safety
 * `sim` must be a live handle; `out` valid for writes.
 */
enum DsStatus ds_simulation_time(const struct DsSimulation *sim, size_t state, double *out);

/**
 * Copies `u` at `state` into `buf`, which must hold at least
 * `ds_simulation_cells` values.
 *
 * # Safety
 * `sim` must be a live handle; `buf` valid for `len` writes.
 */
enum DsStatus ds_simulation_u(const struct DsSimulation *sim,
                              size_t state,
                              double *buf,
                              size_t len);

/**
 * Copies `v` at `state`; fails with `DS_STATUS_INVALID_ARGUMENT` for scalar runs.
 *
 * # Safety
 * As for [`ds_simulation_u`].
 */
enum DsStatus ds_simulation_v(const struct DsSimulation *sim,
                              size_t state,
                              double *buf,
                              size_t len);

/**
 * # Safety
 * `sim` must be NULL or a handle not yet freed.
 */
void ds_simulation_free(struct DsSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEGENSIM_H */
