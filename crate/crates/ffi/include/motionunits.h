#ifndef MOTIONUNITS_H
#define MOTIONUNITS_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Success.
 */
#define MU_OK 0

#define MU_ERR_IO 1

#define MU_ERR_BAD_MAGIC 2

#define MU_ERR_TRUNCATED 3

#define MU_ERR_DIM_MISMATCH 4

#define MU_ERR_INVALID_TENSOR 5

#define MU_ERR_NON_FINITE 6

#define MU_ERR_LABEL_PARSE 7

#define MU_ERR_INVALID_ARGUMENT 8

#define MU_ERR_NEGATIVE_ENTRY 9

#define MU_ERR_EIGEN 10

#define MU_ERR_EMPTY_CLUSTER 11

#define MU_ERR_DIVERGED 12

#define MU_ERR_CONFIG 13

#define MU_ERR_SELECTION_RUN 14

/*
 A required pointer argument was NULL.
 */
#define MU_ERR_NULL 100

/*
 A string argument was not valid UTF-8.
 */
#define MU_ERR_UTF8 101

/*
 The library panicked; this indicates a bug.
 */
#define MU_ERR_PANIC 102

/*
 A caller-supplied output buffer is too small.
 */
#define MU_ERR_BUFFER 103

/*
 Result of a factorization `U ~ V W`.
 */
typedef struct MuFactorization MuFactorization;

/*
 k-nearest-neighbor heat-kernel graph over matrix columns.
 */
typedef struct MuGraph MuGraph;

/*
 Cluster assignment of each column.
 */
typedef struct MuLabels MuLabels;

/*
 Dense row-major matrix of doubles.
 */
typedef struct MuMatrix MuMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *mu_version(void);

/*
 Copies the last error message of this thread into `buf` (always
 NUL-terminated, truncated to `len - 1` bytes). Returns the full message
 length excluding the terminator.

 # Safety
 `buf` must be NULL or point to `len` writable bytes.
 */
size_t mu_last_error_message(char *buf, size_t len);

/*
 Copies `rows * cols` row-major values into a new matrix.

 # Safety
 `data` must point to `rows * cols` doubles; `out` must be writable.
 */
int32_t mu_matrix_new(size_t rows, size_t cols, const double *data, struct MuMatrix **out);

/*
 Loads a rank-2 MTF1 tensor file.

 # Safety
 `file` must be a NUL-terminated string; `out` must be writable.
 */
int32_t mu_matrix_load(const char *file, struct MuMatrix **out);

/*
 Writes the matrix as an MTF1 tensor file.

 # Safety
 `m` must be a live handle; `file` a NUL-terminated string.
 */
int32_t mu_matrix_save(const struct MuMatrix *m, const char *file);

/*
 Number of rows, or 0 for NULL.

 # Safety
 `m` must be NULL or a live handle.
 */
size_t mu_matrix_rows(const struct MuMatrix *m);

/*
 Number of columns, or 0 for NULL.

 # Safety
 `m` must be NULL or a live handle.
 */
size_t mu_matrix_cols(const struct MuMatrix *m);

/*
 Copies the row-major values into `buf`, which must hold at least
 `rows * cols` doubles (`len`).

 # Safety
 `m` must be a live handle and `buf` point to `len` writable doubles.
 */
int32_t mu_matrix_copy(const struct MuMatrix *m, double *buf, size_t len);

/*
 # Safety
 `m` must be NULL or a handle not yet freed.
 */
void mu_matrix_free(struct MuMatrix *m);

/*
 Builds the rescaled feature matrix from `points x frames x 3`
 row-major positions.

 # Safety
 `positions` must point to `points * frames * 3` doubles.
 */
int32_t mu_features(size_t points, size_t frames, const double *positions, struct MuMatrix **out);

/*
 Neighbor graph over the columns of `u`. A `bandwidth` of zero or less
 selects the automatic bandwidth.

 # Safety
 `u` must be a live handle; `out` must be writable.
 */
int32_t mu_graph_build(const struct MuMatrix *u,
                       size_t neighbors,
                       double bandwidth,
                       struct MuGraph **out);

/*
 Number of undirected edges, or 0 for NULL.

 # Safety
 `g` must be NULL or a live handle.
 */
size_t mu_graph_edge_count(const struct MuGraph *g);

/*
 # Safety
 `g` must be NULL or a handle not yet freed.
 */
void mu_graph_free(struct MuGraph *g);

/*
 Graph-regularized sparse NMF with the L1/2 penalty.

 # Safety
 `u` and `g` must be live handles; `out` must be writable.
 */
int32_t mu_factorize(const struct MuMatrix *u,
                     const struct MuGraph *g,
                     size_t rank,
                     double eta,
                     double lambda,
                     size_t max_iters,
                     double rel_tol,
                     uint64_t seed,
                     struct MuFactorization **out);

/*
 New matrix handle holding a copy of the building blocks `V`.

 # Safety
 `f` must be a live handle; `out` must be writable.
 */
int32_t mu_factorization_v(const struct MuFactorization *f, struct MuMatrix **out);

/*
 New matrix handle holding a copy of the weighting map `W`.

 # Safety
 `f` must be a live handle; `out` must be writable.
 */
int32_t mu_factorization_w(const struct MuFactorization *f, struct MuMatrix **out);

/*
 Iterations run, or 0 for NULL.

 # Safety
 `f` must be NULL or a live handle.
 */
size_t mu_factorization_iterations(const struct MuFactorization *f);

/*
 Total cost after the last iteration, or NaN for NULL.

 # Safety
 `f` must be NULL or a live handle.
 */
double mu_factorization_cost(const struct MuFactorization *f);

/*
 # Safety
 `f` must be NULL or a handle not yet freed.
 */
void mu_factorization_free(struct MuFactorization *f);

/*
 Normalized-cut clustering of the columns of `w` into `k` groups.

 # Safety
 `w` must be a live handle; `out` must be writable.
 */
int32_t mu_cluster(const struct MuMatrix *w,
                   size_t k,
                   double sigma,
                   bool squared,
                   uint64_t seed,
                   struct MuLabels **out);

/*
 Factorization followed by normalized cut, with rank `k`.

 # Safety
 `u` and `g` must be live handles; `out` must be writable.
 */
int32_t mu_gsnmf_ncut(const struct MuMatrix *u,
                      const struct MuGraph *g,
                      size_t k,
                      double eta,
                      double lambda,
                      double sigma,
                      uint64_t seed,
                      struct MuLabels **out);

/*
 Number of labels, or 0 for NULL.

 # Safety
 `l` must be NULL or a live handle.
 */
size_t mu_labels_len(const struct MuLabels *l);

/*
 Copies the labels into `buf` of capacity `len`.

 # Safety
 `l` must be a live handle and `buf` point to `len` writable values.
 */
int32_t mu_labels_copy(const struct MuLabels *l, uint32_t *buf, size_t len);

/*
 # Safety
 `l` must be NULL or a handle not yet freed.
 */
void mu_labels_free(struct MuLabels *l);

/*
 Clustering accuracy in percent between two label arrays of length `n`.

 # Safety
 `pred` and `truth` must point to `n` values; `out` must be writable.
 */
int32_t mu_accuracy(const uint32_t *pred, const uint32_t *truth, size_t n, double *out);

/*
 Dispersion of an `n x n` row-major consensus matrix.

 # Safety
 `c` must point to `n * n` doubles; `out` must be writable.
 */
int32_t mu_dispersion(const double *c, size_t n, double *out);

/*
 Chooses `k` in `k_min..=k_max` by consensus dispersion over `runs`
 seeded runs. When `rho` is not NULL it receives one value per
 candidate and must hold `k_max - k_min + 1` doubles.

 # Safety
 `u` and `g` must be live handles; `best_k` must be writable; `rho`
 NULL or writable for the stated length.
 */
int32_t mu_select_k(const struct MuMatrix *u,
                    const struct MuGraph *g,
                    size_t k_min,
                    size_t k_max,
                    size_t runs,
                    double eta,
                    double lambda,
                    double sigma,
                    uint64_t seed,
                    size_t *best_k,
                    double *rho);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTIONUNITS_H */
