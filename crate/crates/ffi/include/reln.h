#ifndef RELN_H
#define RELN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RelnStatus {
  RELN_STATUS_OK = 0,
  RELN_STATUS_NULL_POINTER = 1,
  RELN_STATUS_INVALID_ARGUMENT = 2,
  RELN_STATUS_SHAPE = 3,
  RELN_STATUS_NUMERICAL = 4,
  RELN_STATUS_IO = 5,
  RELN_STATUS_FORMAT = 6,
  RELN_STATUS_PANIC = 7,
} RelnStatus;

// A Lie algebra with its basis, structure constants and default form.
typedef struct RelnAlgebra RelnAlgebra;

typedef struct RelnDataset RelnDataset;

typedef struct RelnModel RelnModel;

typedef struct RelnEvalReport {
  double mse_id;
  double mse_conjugated;
  double invariance_error;
  size_t conjugations;
  double sigma;
  double wall_time;
} RelnEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *reln_last_error(void);

// Library version as a static NUL-terminated string.
const char *reln_version(void);

// Creates an algebra by name (`so3`, `sp4`, `so13`, `sl3`, `gl3`, or `gln`/`sln`
// with `n`; pass `n = 0` when the name carries the size).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a writable pointer.
enum RelnStatus reln_algebra_new(const char *name, size_t n, struct RelnAlgebra **out);

// # Safety
// `alg` must come from [`reln_algebra_new`] and not be used afterwards. NULL is ignored.
void reln_algebra_free(struct RelnAlgebra *alg);

// Writes the algebra dimension K and matrix size n.
//
// # Safety
// `alg` must be a live handle; `dim` and `n` writable pointers.
enum RelnStatus reln_algebra_dims(const struct RelnAlgebra *alg, size_t *dim, size_t *n);

// Coordinates (length K) to an n×n row-major matrix.
//
// # Safety
// `coords` must hold `k` values and `out` room for `out_len` values.
enum RelnStatus reln_algebra_hat(const struct RelnAlgebra *alg,
                                 const double *coords,
                                 size_t k,
                                 double *out,
                                 size_t out_len);

// n×n row-major matrix to coordinates (length K); fails for matrices outside the algebra.
//
// # Safety
// `matrix` must hold `len` values and `out` room for `k` values.
enum RelnStatus reln_algebra_vee(const struct RelnAlgebra *alg,
                                 const double *matrix,
                                 size_t len,
                                 double *out,
                                 size_t k);

// Coordinates of `[x, y]`; all three buffers have length K.
//
// # Safety
// `x`, `y` and `out` must each hold `k` values.
enum RelnStatus reln_algebra_bracket(const struct RelnAlgebra *alg,
                                     const double *x,
                                     const double *y,
                                     double *out,
                                     size_t k);

// The Ad-invariant form `B(x, y)` on coordinates.
//
// # Safety
// `x` and `y` must each hold `k` values; `out` must be writable.
enum RelnStatus reln_algebra_form(const struct RelnAlgebra *alg,
                                  const double *x,
                                  const double *y,
                                  size_t k,
                                  double *out);

// Loads an RLNM model file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum RelnStatus reln_model_load(const char *path, struct RelnModel **out);

// Writes the model (parameters only) to an RLNM file.
//
// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum RelnStatus reln_model_save(const struct RelnModel *model, const char *path);

// # Safety
// `model` must come from [`reln_model_load`] and not be used afterwards. NULL is ignored.
void reln_model_free(struct RelnModel *model);

// Per-sample input shape `(set size, K, channels)`, output width and parameter count.
//
// # Safety
// `model` must be a live handle; every out pointer writable.
enum RelnStatus reln_model_shape(const struct RelnModel *model,
                                 size_t *set_size,
                                 size_t *dim,
                                 size_t *channels,
                                 size_t *outputs,
                                 size_t *params);

// Forward pass on `batch` samples laid out `[batch, set, K, C]`; writes
// `[batch, outputs]`.
//
// # Safety
// `x` must hold `x_len` values and `out` room for `out_len` values.
enum RelnStatus reln_model_predict(const struct RelnModel *model,
                                   const double *x,
                                   size_t x_len,
                                   size_t batch,
                                   double *out,
                                   size_t out_len);

// Loads an RLND dataset file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum RelnStatus reln_dataset_load(const char *path, struct RelnDataset **out);

// # Safety
// `ds` must come from [`reln_dataset_load`] and not be used afterwards. NULL is ignored.
void reln_dataset_free(struct RelnDataset *ds);

// Number of samples.
//
// # Safety
// `ds` must be a live handle and `len` writable.
enum RelnStatus reln_dataset_len(const struct RelnDataset *ds, size_t *len);

// MSE, MSE under `conjugations` random adjoint actions of scale `sigma`,
// and the invariance error, drawn from the evaluation stream of `seed`.
//
// # Safety
// `model` and `ds` must be live handles and `out` writable.
enum RelnStatus reln_evaluate(const struct RelnModel *model,
                              const struct RelnDataset *ds,
                              size_t conjugations,
                              double sigma,
                              uint64_t seed,
                              struct RelnEvalReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELN_H */
