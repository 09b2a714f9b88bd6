#ifndef NTUBAL_H
#define NTUBAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NtStatus {
  NT_STATUS_OK = 0,
  NT_STATUS_NULL_POINTER = 1,
  NT_STATUS_SHAPE_MISMATCH = 2,
  NT_STATUS_INVALID_ARGUMENT = 3,
  NT_STATUS_NUMERIC_FAILURE = 4,
  NT_STATUS_FORMAT = 5,
  NT_STATUS_IO = 6,
  NT_STATUS_BUFFER_TOO_SMALL = 7,
  NT_STATUS_PANIC = 8,
} NtStatus;

/**
 * Opaque tensor handle.
 */
typedef struct NtTensor NtTensor;

/**
 * Solver schedule. Obtain defaults from [`nt_lrtc_default_params`] or
 * [`nt_trpca_default_params`].
 */
typedef struct NtSolverParams {
  double gamma;
  double beta_max;
  /**
   * Robust PCA only; `<= 0` means `1 / mean(tau)`.
   */
  double rho;
  /**
   * Robust PCA only.
   */
  double rho_max;
  size_t max_iter;
  double rel_tol;
} NtSolverParams;

typedef struct NtSolveInfo {
  size_t iterations;
  /**
   * 1 when RelCha fell below the tolerance.
   */
  int32_t converged;
  double final_relcha;
  double constraint_residual;
  double elapsed_seconds;
} NtSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *nt_last_error(void);

/**
 * Creates a tensor of the given shape. `data` holds `prod(shape)` values in
 * column-major order, or is NULL for a zero tensor.
 *
 * # Safety
 * `shape` must point to `order` values; `data`, if not NULL, to
 * `prod(shape)` values; `out` must be writable.
 */
enum NtStatus nt_tensor_new(const size_t *shape,
                            size_t order,
                            const double *data,
                            struct NtTensor **out);

/**
 * Deep copy.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum NtStatus nt_tensor_clone(const struct NtTensor *t, struct NtTensor **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `t` must be NULL or a handle not yet freed.
 */
void nt_tensor_free(struct NtTensor *t);

/**
 * Number of modes, or 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t nt_tensor_order(const struct NtTensor *t);

/**
 * Number of entries, or 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t nt_tensor_numel(const struct NtTensor *t);

/**
 * Copies the extents into `out`, which holds `cap` values.
 *
 * # Safety
 * `t` must be a live handle; `out` must hold `cap` writable values.
 */
enum NtStatus nt_tensor_shape(const struct NtTensor *t, size_t *out, size_t cap);

/**
 * Copies the column-major entries into `out`, which holds `cap` values.
 *
 * # Safety
 * `t` must be a live handle; `out` must hold `cap` writable values.
 */
enum NtStatus nt_tensor_copy_data(const struct NtTensor *t, double *out, size_t cap);

/**
 * Borrowed pointer to the column-major entries, valid while `t` lives and
 * is not mutated. NULL for a NULL handle.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
const double *nt_tensor_data(const struct NtTensor *t);

/**
 * Reads a tensor file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NtStatus nt_tensor_read(const char *path, struct NtTensor **out);

/**
 * Writes a tensor file.
 *
 * # Safety
 * `t` must be a live handle; `path` a NUL-terminated string.
 */
enum NtStatus nt_tensor_write(const struct NtTensor *t, const char *path);

/**
 * Writes the `N(N-1)/2` tubal ranks of the mode-pair unfoldings into `out`.
 *
 * # Safety
 * `t` must be a live handle; `out` must hold `cap` writable values.
 */
enum NtStatus nt_n_tubal_rank(const struct NtTensor *t,
                              double rel_threshold,
                              size_t *out,
                              size_t cap);

/**
 * Weighted sum of the TNNs of the mode-pair unfoldings.
 *
 * # Safety
 * `t` must be a live handle; `alpha` must hold `n_pairs` values; `out`
 * must be writable.
 */
enum NtStatus nt_wstnn(const struct NtTensor *t, const double *alpha, size_t n_pairs, double *out);

/**
 * t-SVD `x = U * S * V^T` of a three-way tensor.
 *
 * # Safety
 * `x` must be a live handle; the three outputs must be writable.
 */
enum NtStatus nt_t_svd(const struct NtTensor *x,
                       struct NtTensor **out_u,
                       struct NtTensor **out_s,
                       struct NtTensor **out_v);

/**
 * Synthetic CP-rank-`rank` tensor. `gaussian != 0` draws standard normal
 * factors, otherwise uniform on `[0, 1)`.
 *
 * # Safety
 * `shape` must point to `order` values; `out` must be writable.
 */
enum NtStatus nt_gen_cp(const size_t *shape,
                        size_t order,
                        size_t rank,
                        uint64_t seed,
                        int32_t gaussian,
                        struct NtTensor **out);

struct NtSolverParams nt_lrtc_default_params(void);

struct NtSolverParams nt_trpca_default_params(void);

/**
 * Tensor completion. Entries where `mask` is nonzero are observed.
 * `params` and `info` may be NULL.
 *
 * # Safety
 * `f` and `mask` must be live handles; `alpha` and `tau` must hold
 * `n_pairs` values; `out` must be writable.
 */
enum NtStatus nt_lrtc_solve(const struct NtTensor *f,
                            const struct NtTensor *mask,
                            const double *alpha,
                            const double *tau,
                            size_t n_pairs,
                            const struct NtSolverParams *params,
                            struct NtTensor **out,
                            struct NtSolveInfo *info);

/**
 * Robust PCA `x = L + E`. `lambda <= 0` selects the default weight of the
 * sparse term. `out_sparse`, `params` and `info` may be NULL.
 *
 * # Safety
 * `x` must be a live handle; `alpha` and `tau` must hold `n_pairs` values;
 * `out_low` must be writable.
 */
enum NtStatus nt_trpca_solve(const struct NtTensor *x,
                             const double *alpha,
                             const double *tau,
                             size_t n_pairs,
                             double lambda,
                             const struct NtSolverParams *params,
                             struct NtTensor **out_low,
                             struct NtTensor **out_sparse,
                             struct NtSolveInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTUBAL_H */
