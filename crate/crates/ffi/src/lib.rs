//! C interface to `kbl-core`.
//!
//! Every function returns a [`KblStatus`]; results come back through out
//! pointers. On failure `kbl_last_error` describes the most recent error on
//! the calling thread. Matrices are dense and row-major. Objects are opaque
//! handles released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kbl_core::completion::{kdl_fit, kmc_fit, nuclear_norm, CompletionResult, KmcOptions, MaskedMatrix, PriorPair};
use kbl_core::grouplasso::{solve_bcd, Block, BlockProblem, BlockSolution};
use kbl_core::kernels::{KernelSpec, Point, RidgeModel};
use kbl_core::KblError;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KblStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Numerical = 4,
    NotConverged = 5,
    MissingInput = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KblKernelKind {
    GaussianRbf = 0,
    Sinc = 1,
    KroneckerDelta = 2,
    Linear = 3,
    Polynomial = 4,
}

/// Kernel description. `width` applies to the Gaussian kernel, `degree` and
/// `offset` to the polynomial one; other fields are ignored.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct KblKernel {
    pub kind: KblKernelKind,
    pub width: f64,
    pub degree: u32,
    pub offset: f64,
}

pub struct KblRidgeModel(RidgeModel);

/// A group-Lasso problem under construction: targets, weight and blocks.
pub struct KblGroupLasso {
    z: DVector<f64>,
    mu: f64,
    blocks: Vec<Block>,
}

pub struct KblGroupLassoSolution(BlockSolution);

pub struct KblCompletion(CompletionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: KblStatus, msg: impl Into<String>) -> KblStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &KblError) -> KblStatus {
    match e {
        KblError::Dimension(_) => KblStatus::Dimension,
        KblError::InvalidArgument(_) | KblError::Config(_) | KblError::Csv { .. } => KblStatus::InvalidArgument,
        KblError::Numerical(_) => KblStatus::Numerical,
        KblError::NotConverged(_) => KblStatus::NotConverged,
        KblError::MissingInput(_) => KblStatus::MissingInput,
        KblError::Io(_) => KblStatus::Internal,
    }
}

/// Runs `f`, turning errors and panics into a status plus a message.
fn guard(f: impl FnOnce() -> Result<(), KblStatus>) -> KblStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KblStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(KblStatus::Internal, "panic inside kbl"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, KblStatus>;
}

impl<T> OrStatus<T> for kbl_core::Result<T> {
    fn or_status(self) -> Result<T, KblStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

/// Borrows `len` values; a null pointer is accepted only when `len` is 0.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], KblStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(KblStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], KblStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(KblStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn count(rows: usize, cols: usize, what: &str) -> Result<usize, KblStatus> {
    rows.checked_mul(cols).ok_or_else(|| fail(KblStatus::InvalidArgument, format!("{what} is too large")))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, KblStatus> {
    Ok(DMatrix::from_row_slice(rows, cols, slice(p, count(rows, cols, what)?, what)?))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, KblStatus> {
    p.as_ref().ok_or_else(|| fail(KblStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, KblStatus> {
    p.as_mut().ok_or_else(|| fail(KblStatus::NullPointer, format!("{what} is null")))
}

fn kernel_spec(k: &KblKernel) -> Result<KernelSpec, KblStatus> {
    let spec = match k.kind {
        KblKernelKind::GaussianRbf => KernelSpec::GaussianRbf { width: k.width },
        KblKernelKind::Sinc => KernelSpec::Sinc,
        KblKernelKind::KroneckerDelta => KernelSpec::KroneckerDelta,
        KblKernelKind::Linear => KernelSpec::Linear,
        KblKernelKind::Polynomial => KernelSpec::Polynomial { degree: k.degree, offset: k.offset },
    };
    spec.validate().or_status()?;
    Ok(spec)
}

fn points(x: &[f64], dim: usize) -> Result<Vec<Point>, KblStatus> {
    if dim == 0 {
        return Err(fail(KblStatus::InvalidArgument, "input dimension must be positive"));
    }
    x.chunks(dim).map(|c| Point::new(c.to_vec())).collect::<kbl_core::Result<_>>().or_status()
}

/// Message for the most recent failure on this thread, or null. The string
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kbl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Kernel ridge regression on `n` points of dimension `dim` (row-major `x`).
///
/// # Safety
/// `x` must hold `n * dim` values, `z` must hold `n`, and `kernel` and
/// `model_out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn kbl_ridge_fit(
    kernel: *const KblKernel,
    x: *const f64,
    n: usize,
    dim: usize,
    z: *const f64,
    mu: f64,
    model_out: *mut *mut KblRidgeModel,
) -> KblStatus {
    guard(|| {
        let model_out = out(model_out, "model_out")?;
        let spec = kernel_spec(handle(kernel, "kernel")?)?;
        let anchors = points(slice(x, count(n, dim, "x")?, "x")?, dim)?;
        let z = DVector::from_column_slice(slice(z, n, "z")?);
        let model = RidgeModel::fit(spec, anchors, &z, mu).or_status()?;
        *model_out = Box::into_raw(Box::new(KblRidgeModel(model)));
        Ok(())
    })
}

/// Predicts at `n` points (row-major, the training dimension) into `y`.
///
/// # Safety
/// `model` must come from [`kbl_ridge_fit`]; `x` must hold `n * dim` values
/// and `y` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn kbl_ridge_predict(
    model: *const KblRidgeModel,
    x: *const f64,
    n: usize,
    y: *mut f64,
) -> KblStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let dim = model.anchors.first().map_or(1, Point::dim);
        let pts = points(slice(x, count(n, dim, "x")?, "x")?, dim)?;
        let y = slice_mut(y, n, "y")?;
        for (yi, p) in y.iter_mut().zip(&pts) {
            *yi = model.predict(p).or_status()?;
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`kbl_ridge_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kbl_ridge_free(model: *mut KblRidgeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Starts a group-Lasso problem with `n` targets and weight `mu`.
///
/// # Safety
/// `z` must hold `n` values; `problem_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_new(
    z: *const f64,
    n: usize,
    mu: f64,
    problem_out: *mut *mut KblGroupLasso,
) -> KblStatus {
    guard(|| {
        let problem_out = out(problem_out, "problem_out")?;
        let z = DVector::from_column_slice(slice(z, n, "z")?);
        *problem_out = Box::into_raw(Box::new(KblGroupLasso { z, mu, blocks: Vec::new() }));
        Ok(())
    })
}

/// Appends a block with an `n × dim` design and a `dim × dim` positive
/// semidefinite penalty, both row-major.
///
/// # Safety
/// `problem` must come from [`kbl_group_lasso_new`]; the arrays must hold
/// `n * dim` and `dim * dim` values.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_add_block(
    problem: *mut KblGroupLasso,
    design: *const f64,
    dim: usize,
    penalty: *const f64,
) -> KblStatus {
    guard(|| {
        let problem = out(problem, "problem")?;
        if dim == 0 {
            return Err(fail(KblStatus::InvalidArgument, "block dimension must be positive"));
        }
        let design = matrix(design, problem.z.len(), dim, "design")?;
        let penalty = matrix(penalty, dim, dim, "penalty")?;
        problem.blocks.push(Block::new(design, penalty));
        Ok(())
    })
}

/// Block coordinate descent. Reaching `max_sweeps` is not an error; check
/// [`kbl_group_lasso_solution_converged`].
///
/// # Safety
/// `problem` must come from [`kbl_group_lasso_new`]; `solution_out` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_solve(
    problem: *const KblGroupLasso,
    tol: f64,
    max_sweeps: usize,
    solution_out: *mut *mut KblGroupLassoSolution,
) -> KblStatus {
    guard(|| {
        let solution_out = out(solution_out, "solution_out")?;
        let p = handle(problem, "problem")?;
        let bp = BlockProblem::new(p.z.clone(), p.blocks.clone(), p.mu).or_status()?;
        let sol = solve_bcd(&bp, tol, max_sweeps).or_status()?;
        *solution_out = Box::into_raw(Box::new(KblGroupLassoSolution(sol)));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from [`kbl_group_lasso_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_free(problem: *mut KblGroupLasso) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `solution` must come from [`kbl_group_lasso_solve`]; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_solution_objective(
    solution: *const KblGroupLassoSolution,
    value: *mut f64,
) -> KblStatus {
    guard(|| {
        *out(value, "value")? = handle(solution, "solution")?.0.objective;
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`kbl_group_lasso_solve`]; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_solution_converged(
    solution: *const KblGroupLassoSolution,
    value: *mut bool,
) -> KblStatus {
    guard(|| {
        *out(value, "value")? = handle(solution, "solution")?.0.converged;
        Ok(())
    })
}

/// Copies the coefficients of block `index` into `coef`, which must have
/// room for exactly `len` values (the block dimension).
///
/// # Safety
/// `solution` must come from [`kbl_group_lasso_solve`]; `coef` must hold
/// `len` values.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_solution_block(
    solution: *const KblGroupLassoSolution,
    index: usize,
    coef: *mut f64,
    len: usize,
) -> KblStatus {
    guard(|| {
        let sol = &handle(solution, "solution")?.0;
        let g = sol
            .gammas
            .get(index)
            .ok_or_else(|| fail(KblStatus::InvalidArgument, format!("block {index} out of range")))?;
        if g.len() != len {
            return Err(fail(KblStatus::Dimension, format!("block {index} has {} coefficients, got room for {len}", g.len())));
        }
        slice_mut(coef, len, "coef")?.copy_from_slice(g.as_slice());
        Ok(())
    })
}

/// # Safety
/// `solution` must come from [`kbl_group_lasso_solve`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn kbl_group_lasso_solution_free(solution: *mut KblGroupLassoSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Kernel matrix completion of an `m × n` matrix. `mask` holds 1 for
/// observed entries and 0 otherwise. Null `row_cov`/`col_cov` select the
/// identity. `lambda > 0` adds the ℓ1 penalty on the coefficients.
///
/// # Safety
/// `values` and `mask` must hold `m * n` values, `row_cov` (if not null)
/// `m * m`, `col_cov` (if not null) `n * n`; `result_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kbl_completion_fit(
    values: *const f64,
    mask: *const f64,
    m: usize,
    n: usize,
    row_cov: *const f64,
    col_cov: *const f64,
    sigma2: f64,
    lambda: f64,
    rank: usize,
    max_sweeps: usize,
    seed: u64,
    result_out: *mut *mut KblCompletion,
) -> KblStatus {
    guard(|| {
        let result_out = out(result_out, "result_out")?;
        let data = MaskedMatrix::new(matrix(values, m, n, "values")?, matrix(mask, m, n, "mask")?).or_status()?;
        let r_c = if row_cov.is_null() { DMatrix::identity(m, m) } else { matrix(row_cov, m, m, "row_cov")? };
        let r_b = if col_cov.is_null() { DMatrix::identity(n, n) } else { matrix(col_cov, n, n, "col_cov")? };
        let priors = PriorPair::new(r_c, r_b, sigma2).or_status()?;
        let opts = KmcOptions { max_sweeps, ..KmcOptions::new(rank, seed) };
        let fit = if lambda == 0.0 { kmc_fit(&data, &priors, &opts) } else { kdl_fit(&data, &priors, lambda, &opts) };
        *result_out = Box::into_raw(Box::new(KblCompletion(fit.or_status()?)));
        Ok(())
    })
}

/// Copies the completed matrix (row-major, `m * n` values) into `zhat`.
///
/// # Safety
/// `result` must come from [`kbl_completion_fit`]; `zhat` must hold `len`
/// values.
#[no_mangle]
pub unsafe extern "C" fn kbl_completion_zhat(result: *const KblCompletion, zhat: *mut f64, len: usize) -> KblStatus {
    guard(|| {
        let z = &handle(result, "result")?.0.zhat;
        if z.len() != len {
            return Err(fail(KblStatus::Dimension, format!("result has {} entries, got room for {len}", z.len())));
        }
        let dst = slice_mut(zhat, len, "zhat")?;
        for (i, row) in z.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dst[i * z.ncols() + j] = *v;
            }
        }
        Ok(())
    })
}

/// Final cost, sweep count and convergence flag. Any out pointer may be null.
///
/// # Safety
/// `result` must come from [`kbl_completion_fit`].
#[no_mangle]
pub unsafe extern "C" fn kbl_completion_summary(
    result: *const KblCompletion,
    cost: *mut f64,
    sweeps: *mut usize,
    converged: *mut bool,
) -> KblStatus {
    guard(|| {
        let r = &handle(result, "result")?.0;
        if let Some(c) = cost.as_mut() {
            *c = r.cost();
        }
        if let Some(s) = sweeps.as_mut() {
            *s = r.sweeps;
        }
        if let Some(c) = converged.as_mut() {
            *c = r.converged;
        }
        Ok(())
    })
}

/// # Safety
/// `result` must come from [`kbl_completion_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kbl_completion_free(result: *mut KblCompletion) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Sum of the singular values of a row-major `m × n` matrix.
///
/// # Safety
/// `a` must hold `m * n` values; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kbl_nuclear_norm(a: *const f64, m: usize, n: usize, value: *mut f64) -> KblStatus {
    guard(|| {
        let value = out(value, "value")?;
        *value = nuclear_norm(&matrix(a, m, n, "a")?);
        Ok(())
    })
}
