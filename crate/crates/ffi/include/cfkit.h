#ifndef CFKIT_H
#define CFKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CfkStatus {
  CFK_STATUS_OK = 0,
  CFK_STATUS_NULL_POINTER = 1,
  CFK_STATUS_INVALID_UTF8 = 2,
  CFK_STATUS_PARSE = 3,
  CFK_STATUS_RANGE = 4,
  CFK_STATUS_CONFIG = 5,
  CFK_STATUS_NUMERIC = 6,
  CFK_STATUS_KEY = 7,
  CFK_STATUS_SHAPE = 8,
  CFK_STATUS_IO = 9,
  CFK_STATUS_MODEL = 10,
  CFK_STATUS_INTERNAL = 11,
  CFK_STATUS_PANIC = 12,
} CfkStatus;

// Opaque trained latent-factor model.
typedef struct CfkFactorModel CfkFactorModel;

// Opaque rating matrix.
typedef struct CfkRatings CfkRatings;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next cfkit call on the same thread.
const char *cfk_last_error(void);

// Loads a ratings file (`Id,Prediction` header, `r<u>_c<i>,<value>` rows).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum CfkStatus cfk_ratings_load(const char *path, struct CfkRatings **out);

// Builds a rating matrix from `n` parallel arrays of 0-based coordinates.
//
// # Safety
// `users`, `items` and `values` must each hold `n` readable elements.
enum CfkStatus cfk_ratings_from_triples(size_t n_users,
                                        size_t n_items,
                                        const size_t *users,
                                        const size_t *items,
                                        const double *values,
                                        size_t n,
                                        struct CfkRatings **out);

// # Safety
// `r` must be null or a handle from this library, not yet freed.
void cfk_ratings_free(struct CfkRatings *r);

// # Safety
// `r` must be a live handle; the out pointers must be writable.
enum CfkStatus cfk_ratings_shape(const struct CfkRatings *r,
                                 size_t *n_users,
                                 size_t *n_items,
                                 size_t *n_ratings);

// Rank-`rank` truncated SVD of the column-normalized matrix.
//
// # Safety
// `r` must be a live handle and `out` writable.
enum CfkStatus cfk_train_svd(const struct CfkRatings *r, size_t rank, struct CfkFactorModel **out);

// # Safety
// `r` must be a live handle and `out` writable.
enum CfkStatus cfk_train_als(const struct CfkRatings *r,
                             size_t rank,
                             double lambda,
                             size_t iterations,
                             struct CfkFactorModel **out);

// FunkSVD with equal user and item penalties `reg`.
//
// # Safety
// `r` must be a live handle and `out` writable.
enum CfkStatus cfk_train_funksvd(const struct CfkRatings *r,
                                 size_t rank,
                                 double eta,
                                 double reg,
                                 size_t epochs,
                                 uint64_t seed,
                                 struct CfkFactorModel **out);

// # Safety
// `m` must be null or a handle from this library, not yet freed.
void cfk_model_free(struct CfkFactorModel *m);

// # Safety
// `m` must be a live handle and `rank` writable.
enum CfkStatus cfk_model_rank(const struct CfkFactorModel *m, size_t *rank);

// Unclipped prediction for `n` (user, item) pairs.
//
// # Safety
// `users`, `items` must hold `n` readable and `out` `n` writable elements.
enum CfkStatus cfk_model_predict(const struct CfkFactorModel *m,
                                 const size_t *users,
                                 const size_t *items,
                                 size_t n,
                                 double *out);

// # Safety
// `m` must be a live handle and `path` a NUL-terminated string.
enum CfkStatus cfk_model_save(const struct CfkFactorModel *m, const char *path);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CfkStatus cfk_model_load(const char *path, struct CfkFactorModel **out);

// Trains the named preset (inline overrides allowed, e.g. `als:rank=5`) on
// `train` and writes unclipped predictions for `n` query pairs.
//
// # Safety
// `preset` must be NUL-terminated; `users`, `items` must hold `n` readable
// and `out` `n` writable elements.
enum CfkStatus cfk_preset_fit_predict(const struct CfkRatings *train,
                                      const char *preset,
                                      uint64_t seed,
                                      const size_t *users,
                                      const size_t *items,
                                      size_t n,
                                      double *out);

// Root mean squared error of `n` predictions.
//
// # Safety
// `pred` and `truth` must hold `n` readable elements, `out` writable.
enum CfkStatus cfk_rmse(const double *pred, const double *truth, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFKIT_H */
