#ifndef KBL_H
#define KBL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  KBL_STATUS_OK = 0,
  KBL_STATUS_NULL_POINTER = 1,
  KBL_STATUS_INVALID_ARGUMENT = 2,
  KBL_STATUS_DIMENSION = 3,
  KBL_STATUS_NUMERICAL = 4,
  KBL_STATUS_NOT_CONVERGED = 5,
  KBL_STATUS_MISSING_INPUT = 6,
  KBL_STATUS_INTERNAL = 7,
} KblStatus;

typedef enum {
  KBL_KERNEL_KIND_GAUSSIAN_RBF = 0,
  KBL_KERNEL_KIND_SINC = 1,
  KBL_KERNEL_KIND_KRONECKER_DELTA = 2,
  KBL_KERNEL_KIND_LINEAR = 3,
  KBL_KERNEL_KIND_POLYNOMIAL = 4,
} KblKernelKind;

typedef struct KblCompletion KblCompletion;

/**
 * A group-Lasso problem under construction: targets, weight and blocks.
 */
typedef struct KblGroupLasso KblGroupLasso;

typedef struct KblGroupLassoSolution KblGroupLassoSolution;

typedef struct KblRidgeModel KblRidgeModel;

/**
 * Kernel description. `width` applies to the Gaussian kernel, `degree` and
 * `offset` to the polynomial one; other fields are ignored.
 */
typedef struct {
  KblKernelKind kind;
  double width;
  uint32_t degree;
  double offset;
} KblKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The string
 * stays valid until the next failing call on the same thread.
 */
const char *kbl_last_error(void);

/**
 * Kernel ridge regression on `n` points of dimension `dim` (row-major `x`).
 *
 * # Safety
 * `x` must hold `n * dim` values, `z` must hold `n`, and `kernel` and
 * `model_out` must be valid pointers.
 */
KblStatus kbl_ridge_fit(const KblKernel *kernel,
                        const double *x,
                        size_t n,
                        size_t dim,
                        const double *z,
                        double mu,
                        KblRidgeModel **model_out);

/**
 * Predicts at `n` points (row-major, the training dimension) into `y`.
 *
 * # Safety
 * `model` must come from [`kbl_ridge_fit`]; `x` must hold `n * dim` values
 * and `y` room for `n`.
 */
KblStatus kbl_ridge_predict(const KblRidgeModel *model, const double *x, size_t n, double *y);

/**
 * # Safety
 * `model` must come from [`kbl_ridge_fit`] and not be used afterwards.
 */
void kbl_ridge_free(KblRidgeModel *model);

/**
 * Starts a group-Lasso problem with `n` targets and weight `mu`.
 *
 * # Safety
 * `z` must hold `n` values; `problem_out` must be valid.
 */
KblStatus kbl_group_lasso_new(const double *z, size_t n, double mu, KblGroupLasso **problem_out);

/**
 * Appends a block with an `n × dim` design and a `dim × dim` positive
 * semidefinite penalty, both row-major.
 *
 * # Safety
 * `problem` must come from [`kbl_group_lasso_new`]; the arrays must hold
 * `n * dim` and `dim * dim` values.
 */
KblStatus kbl_group_lasso_add_block(KblGroupLasso *problem,
                                    const double *design,
                                    size_t dim,
                                    const double *penalty);

/**
 * Block coordinate descent. Reaching `max_sweeps` is not an error; check
 * [`kbl_group_lasso_solution_converged`].
 *
 * # Safety
 * `problem` must come from [`kbl_group_lasso_new`]; `solution_out` must be
 * valid.
 */
KblStatus kbl_group_lasso_solve(const KblGroupLasso *problem,
                                double tol,
                                size_t max_sweeps,
                                KblGroupLassoSolution **solution_out);

/**
 * # Safety
 * `problem` must come from [`kbl_group_lasso_new`] and not be used afterwards.
 */
void kbl_group_lasso_free(KblGroupLasso *problem);

/**
 * # Safety
 * `solution` must come from [`kbl_group_lasso_solve`]; `value` must be valid.
 */
KblStatus kbl_group_lasso_solution_objective(const KblGroupLassoSolution *solution, double *value);

/**
 * # Safety
 * `solution` must come from [`kbl_group_lasso_solve`]; `value` must be valid.
 */
KblStatus kbl_group_lasso_solution_converged(const KblGroupLassoSolution *solution, bool *value);

/**
 * Copies the coefficients of block `index` into `coef`, which must have
 * room for exactly `len` values (the block dimension).
 *
 * # Safety
 * `solution` must come from [`kbl_group_lasso_solve`]; `coef` must hold
 * `len` values.
 */
KblStatus kbl_group_lasso_solution_block(const KblGroupLassoSolution *solution,
                                         size_t index,
                                         double *coef,
                                         size_t len);

/**
 * # Safety
 * `solution` must come from [`kbl_group_lasso_solve`] and not be used
 * afterwards.
 */
void kbl_group_lasso_solution_free(KblGroupLassoSolution *solution);

/**
 * Kernel matrix completion of an `m × n` matrix. `mask` holds 1 for
 * observed entries and 0 otherwise. Null `row_cov`/`col_cov` select the
 * identity. `lambda > 0` adds the ℓ1 penalty on the coefficients.
 *
 * # Safety
 * `values` and `mask` must hold `m * n` values, `row_cov` (if not null)
 * `m * m`, `col_cov` (if not null) `n * n`; `result_out` must be valid.
 */
KblStatus kbl_completion_fit(const double *values,
                             const double *mask,
                             size_t m,
                             size_t n,
                             const double *row_cov,
                             const double *col_cov,
                             double sigma2,
                             double lambda,
                             size_t rank,
                             size_t max_sweeps,
                             uint64_t seed,
                             KblCompletion **result_out);

/**
 * Copies the completed matrix (row-major, `m * n` values) into `zhat`.
 *
 * # Safety
 * `result` must come from [`kbl_completion_fit`]; `zhat` must hold `len`
 * values.
 */
KblStatus kbl_completion_zhat(const KblCompletion *result, double *zhat, size_t len);

/**
 * Final cost, sweep count and convergence flag. Any out pointer may be null.
 *
 * # Safety
 * `result` must come from [`kbl_completion_fit`].
 */
KblStatus kbl_completion_summary(const KblCompletion *result,
                                 double *cost,
                                 size_t *sweeps,
                                 bool *converged);

/**
 * # Safety
 * `result` must come from [`kbl_completion_fit`] and not be used afterwards.
 */
void kbl_completion_free(KblCompletion *result);

/**
 * Sum of the singular values of a row-major `m × n` matrix.
 *
 * # Safety
 * `a` must hold `m * n` values; `value` must be valid.
 */
KblStatus kbl_nuclear_norm(const double *a, size_t m, size_t n, double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KBL_H */
