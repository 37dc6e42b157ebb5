#ifndef SEPGAN_H
#define SEPGAN_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Values accepted wherever a scale is passed as `uint32_t`.
 */
typedef enum SepganScale {
  SEPGAN_SCALE_DESK = 0,
  SEPGAN_SCALE_PAPER = 1,
} SepganScale;

typedef enum SepganStatus {
  SEPGAN_STATUS_OK = 0,
  SEPGAN_STATUS_NULL_POINTER = 1,
  SEPGAN_STATUS_INVALID_ARGUMENT = 2,
  SEPGAN_STATUS_IO = 3,
  SEPGAN_STATUS_PARSE = 4,
  SEPGAN_STATUS_NUMERIC = 5,
  SEPGAN_STATUS_BUFFER_SIZE = 6,
  SEPGAN_STATUS_PANIC = 7,
} SepganStatus;

/**
 * Values accepted wherever a variant is passed as `uint32_t`.
 */
typedef enum SepganVariant {
  SEPGAN_VARIANT_BASELINE = 0,
  SEPGAN_VARIANT_DEPTHWISE_G = 1,
  SEPGAN_VARIANT_DEEPER_DEPTHWISE_G = 2,
  SEPGAN_VARIANT_DEPTHWISE_DG = 3,
} SepganVariant;

/**
 * Opaque generator handle.
 */
typedef struct SepganGenerator SepganGenerator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *sepgan_last_error(void);

/**
 * Total parameter counts (weights, biases and norm affines) of a preset.
 *
 * # Safety
 * `generator` and `discriminator` must be valid for writes.
 */
enum SepganStatus sepgan_count_params(uint32_t variant_id,
                                      uint32_t scale_id,
                                      uint64_t *generator,
                                      uint64_t *discriminator);

/**
 * Separable over standard convolution cost, `1/cout + 1/k^2`. Returns NaN
 * if any argument is zero.
 */
double sepgan_reduction_ratio(size_t cin, size_t cout, size_t kernel);

/**
 * Loads the generator stored in a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes. On
 * success `*out` owns a handle that must be passed to
 * [`sepgan_generator_free`].
 */
enum SepganStatus sepgan_generator_load(const char *path, struct SepganGenerator **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `g` must come from [`sepgan_generator_load`] and not be used afterwards.
 */
void sepgan_generator_free(struct SepganGenerator *g);

/**
 * Image side length and number of domains of a loaded generator.
 *
 * # Safety
 * `g` must be a live handle; the out pointers must be valid for writes.
 */
enum SepganStatus sepgan_generator_shape(const struct SepganGenerator *g,
                                         size_t *image_size,
                                         size_t *num_domains);

/**
 * Translates one image into `target_domain`. `input` and `output` hold
 * `len = 3 * size * size` doubles and may not overlap.
 *
 * # Safety
 * `g` must be a live handle; `input` valid for `len` reads and `output`
 * for `len` writes.
 */
enum SepganStatus sepgan_generator_translate(const struct SepganGenerator *g,
                                             const double *input,
                                             double *output,
                                             size_t len,
                                             size_t target_domain);

/**
 * Frechet distance between two Gaussians given as `d`-vectors of means and
 * row-major `d x d` symmetric PSD covariances.
 *
 * # Safety
 * Mean pointers must be valid for `d` reads, covariance pointers for
 * `d * d` reads, `out` for one write.
 */
enum SepganStatus sepgan_frechet_distance(const double *mu_r,
                                          const double *sigma_r,
                                          const double *mu_g,
                                          const double *sigma_g,
                                          size_t d,
                                          double *out);

/**
 * Fits Gaussians to two feature sets (row-major, one sample per row) and
 * returns their Frechet distance.
 *
 * # Safety
 * `real` must be valid for `n_real * d` reads, `generated` for
 * `n_gen * d` reads, `out` for one write.
 */
enum SepganStatus sepgan_fid_from_features(const double *real,
                                           size_t n_real,
                                           const double *generated,
                                           size_t n_gen,
                                           size_t d,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEPGAN_H */
