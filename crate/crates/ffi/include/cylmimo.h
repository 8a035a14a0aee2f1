#ifndef CYLMIMO_H
#define CYLMIMO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define CM_FILTER_AUTO 0

#define CM_FILTER_NONE 1

#define CM_KERNEL_LEADING 0

#define CM_KERNEL_DEBYE 1

/**
 * Echo tensor handle, shape [k, θ_T, θ_R, z_T, z_R].
 */
typedef struct CmEcho CmEcho;

/**
 * Reconstructed volume handle, shape [x, y, z].
 */
typedef struct CmImage CmImage;

/**
 * Array layout handle.
 */
typedef struct CmLayout CmLayout;

/**
 * Scatterer list handle.
 */
typedef struct CmScene CmScene;

/**
 * Status code returned by every fallible call.
 */
typedef int32_t CmStatus;

/**
 * One subarray: columns along the arc and rows along z.
 */
typedef struct CmSubarray {
  size_t arc_count;
  /**
   * Arc length between columns (m).
   */
  double arc_spacing;
  size_t z_count;
  double z_spacing;
} CmSubarray;

typedef struct CmRmaParams {
  /**
   * Target extent D for the automatic spectral support filter (m).
   */
  double target_extent;
  double evanescent_guard;
  double interp_oversampling;
  /**
   * `CM_FILTER_AUTO` or `CM_FILTER_NONE`.
   */
  int32_t spectrum_filter;
  /**
   * `CM_KERNEL_LEADING` or `CM_KERNEL_DEBYE`.
   */
  int32_t kernel_phase;
} CmRmaParams;

/**
 * Image grid. Non-positive voxel sizes select a quarter of the theoretical resolution.
 */
typedef struct CmGrid {
  double center[3];
  double voxel[3];
  size_t n[3];
} CmGrid;

#define CM_OK 0

/**
 * A required pointer argument was null.
 */
#define CM_ERR_NULL 1

/**
 * Arguments or configuration rejected by validation.
 */
#define CM_ERR_INVALID 2

/**
 * A numerical stage failed.
 */
#define CM_ERR_NUMERIC 3

#define CM_ERR_IO 4

/**
 * A Rust panic was caught at the boundary.
 */
#define CM_ERR_PANIC 5

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next `cm_*` call on the same thread.
 */
const char *cm_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cm_version(void);

/**
 * Two subarrays on a cylinder of `radius`, each centred on θ = 0, z = 0.
 *
 * # Safety
 * `tx` and `rx` must point to valid structs; `out` must be writable.
 */
CmStatus cm_layout_new(double radius,
                       const struct CmSubarray *tx,
                       const struct CmSubarray *rx,
                       struct CmLayout **out);

/**
 * The 5×5 sparse Tx / 41×41 dense Rx layout on R0 = 1.5 m.
 *
 * # Safety
 * `out` must be writable.
 */
CmStatus cm_layout_benchmark(struct CmLayout **out);

/**
 * # Safety
 * `layout` must be null or a handle from this library not yet freed.
 */
void cm_layout_free(struct CmLayout *layout);

/**
 * # Safety
 * `out` must be writable.
 */
CmStatus cm_scene_new(struct CmScene **out);

/**
 * Appends a point scatterer with complex reflectivity `re + j·im`.
 *
 * # Safety
 * `scene` must be a live handle.
 */
CmStatus cm_scene_add(struct CmScene *scene, double x, double y, double z, double re, double im);

/**
 * Number of scatterers in the scene.
 *
 * # Safety
 * `scene` must be a live handle; `out` must be writable.
 */
CmStatus cm_scene_len(const struct CmScene *scene, size_t *out);

/**
 * # Safety
 * `scene` must be null or a live handle.
 */
void cm_scene_free(struct CmScene *scene);

/**
 * Simulates the echo of `scene` over `count` frequencies in [start_hz, stop_hz].
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
CmStatus cm_simulate(const struct CmLayout *layout,
                     const struct CmScene *scene,
                     double start_hz,
                     double stop_hz,
                     size_t count,
                     struct CmEcho **out);

/**
 * Echo shape [k, θ_T, θ_R, z_T, z_R].
 *
 * # Safety
 * `echo` must be live; `shape` must hold 5 values.
 */
CmStatus cm_echo_shape(const struct CmEcho *echo, size_t *shape);

/**
 * Number of complex samples in the echo.
 *
 * # Safety
 * `echo` must be live; `out` must be writable.
 */
CmStatus cm_echo_len(const struct CmEcho *echo, size_t *out);

/**
 * Copies the echo into `out` (2·`len` doubles); `len` must equal [`cm_echo_len`].
 *
 * # Safety
 * `echo` must be live; `out` must hold 2·`len` doubles.
 */
CmStatus cm_echo_copy(const struct CmEcho *echo, double *out, size_t len);

/**
 * Adds white Gaussian noise at `snr_db` relative to the mean echo power.
 *
 * # Safety
 * `echo` must be live.
 */
CmStatus cm_echo_add_noise(struct CmEcho *echo, double snr_db, uint64_t seed);

/**
 * # Safety
 * `echo` must be null or a live handle.
 */
void cm_echo_free(struct CmEcho *echo);

/**
 * Library defaults: automatic filter, D = 0.26 m, guard 0.95, oversampling 2, leading kernel.
 *
 * # Safety
 * `out` must be writable.
 */
CmStatus cm_rma_params_default(struct CmRmaParams *out);

/**
 * Wavenumber-domain reconstruction of `echo` on `grid`. `params` may be null for defaults.
 *
 * # Safety
 * `echo` must be live, `grid` valid, `params` null or valid; `out` writable.
 */
CmStatus cm_reconstruct_rma(const struct CmEcho *echo,
                            const struct CmRmaParams *params,
                            const struct CmGrid *grid,
                            struct CmImage **out);

/**
 * Back-projection of `echo` on `grid`.
 *
 * # Safety
 * `echo` must be live, `grid` valid; `out` writable.
 */
CmStatus cm_reconstruct_bp(const struct CmEcho *echo,
                           const struct CmGrid *grid,
                           struct CmImage **out);

/**
 * Image shape [nx, ny, nz]; data index is (ix·ny + iy)·nz + iz.
 *
 * # Safety
 * `image` must be live; `dims` must hold 3 values.
 */
CmStatus cm_image_dims(const struct CmImage *image, size_t *dims);

/**
 * Grid origin and step per axis: `start[3]`, `step[3]`.
 *
 * # Safety
 * `image` must be live; `start` and `step` must hold 3 values each.
 */
CmStatus cm_image_axes(const struct CmImage *image, double *start, double *step);

/**
 * Copies the volume into `out` (2·`len` doubles); `len` must be nx·ny·nz.
 *
 * # Safety
 * `image` must be live; `out` must hold 2·`len` doubles.
 */
CmStatus cm_image_copy(const struct CmImage *image, double *out, size_t len);

/**
 * Position (`xyz[3]`) and magnitude of the largest voxel.
 *
 * # Safety
 * `image` must be live; `xyz` must hold 3 values; `magnitude` may be null.
 */
CmStatus cm_image_peak(const struct CmImage *image, double *xyz, double *magnitude);

/**
 * # Safety
 * `image` must be null or a live handle.
 */
void cm_image_free(struct CmImage *image);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CYLMIMO_H */
