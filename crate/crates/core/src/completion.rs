//! Kernel matrix completion (KMC), kernel dictionary learning (KDL) and the
//! nuclear-norm proximal baseline.
//!
//! KMC minimizes
//!
//! ```text
//! ½‖(Z − C Bᵀ) ⊙ W‖²_F + (μ/2) [tr(Cᵀ K_X⁻¹ C) + tr(Bᵀ K_Y⁻¹ B)]
//! ```
//!
//! by cycling exact minimizations over the columns of `C` and then `B`.
//! A column update `c = (D + μK⁻¹)⁻¹ r` is carried out in kernel form,
//! `c = K_{:S} (μI + D_S K_SS)⁻¹ r_S` with `S` the rows carrying data, which
//! yields the coefficient vector `c̃ = K⁻¹c` for free and never forms `K⁻¹`.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{KblError, Result};
use crate::linalg::{self, cholesky_with_jitter, frobenius_sq};

/// Relative negativity tolerated in a prior covariance.
const PRIOR_PSD_TOL: f64 = 1e-8;
/// Inner Lasso stopping threshold on the duality gap, relative to `max(1, |objective|)`.
const LASSO_GAP_TOL: f64 = 1e-10;
const LASSO_MAX_PASSES: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<f64>,
}

impl MaskedMatrix {
    /// Unobserved entries of `values` are ignored and stored as zero.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<f64>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(KblError::Dimension(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if mask.iter().any(|&w| w != 0.0 && w != 1.0) {
            return Err(KblError::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        let mut values = values;
        for (v, w) in values.iter_mut().zip(mask.iter()) {
            if *w == 0.0 {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(KblError::InvalidArgument("observed values must be finite".into()));
            }
        }
        Ok(MaskedMatrix { values, mask })
    }

    pub fn fully_observed(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), 1.0);
        Self::new(values, mask)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<f64> {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&w| w == 1.0).count()
    }

    pub fn transpose(&self) -> MaskedMatrix {
        MaskedMatrix { values: self.values.transpose(), mask: self.mask.transpose() }
    }
}

/// Low-rank factors with `Ẑ = C Bᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    /// `M × P`.
    pub c: DMatrix<f64>,
    /// `N × P`.
    pub b: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(c: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if c.ncols() != b.ncols() || c.ncols() == 0 {
            return Err(KblError::Dimension("factors need the same positive column count".into()));
        }
        Ok(FactorPair { c, b })
    }

    pub fn rank(&self) -> usize {
        self.c.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.c * self.b.transpose()
    }
}

/// Seeded i.i.d. standard normal factors: `C` is filled first, then `B`,
/// both in column-major order.
pub fn init_factors(m: usize, n: usize, p: usize, seed: u64) -> FactorPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DMatrix::from_fn(m, p, |_, _| StandardNormal.sample(&mut rng));
    let b = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    FactorPair { c, b }
}

/// Row and column covariances of the Gaussian factor priors.
#[derive(Clone, Debug)]
pub struct PriorPair {
    /// `M × M`, including any jitter.
    r_c: DMatrix<f64>,
    /// `N × N`, rescaled to `trace(R_C)` and including any jitter.
    r_b: DMatrix<f64>,
    sigma2: f64,
    rb_scale: f64,
    jitter_c: f64,
    jitter_b: f64,
    chol_c: Cholesky<f64, nalgebra::Dyn>,
    chol_b: Cholesky<f64, nalgebra::Dyn>,
}

impl PriorPair {
    pub fn new(r_c: DMatrix<f64>, r_b: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(KblError::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
        }
        for (name, r) in [("R_C", &r_c), ("R_B", &r_b)] {
            if !r.is_square() || r.nrows() == 0 {
                return Err(KblError::Dimension(format!("{name} must be square and nonempty")));
            }
            if (r - r.transpose()).amax() > 1e-10 * r.amax().max(f64::MIN_POSITIVE) {
                return Err(KblError::InvalidArgument(format!("{name} is not symmetric")));
            }
            if !linalg::is_psd(r, PRIOR_PSD_TOL) {
                return Err(KblError::InvalidArgument(format!("{name} is not positive semidefinite")));
            }
        }
        let (tc, tb) = (r_c.trace(), r_b.trace());
        if !(tc > 0.0 && tb > 0.0) {
            return Err(KblError::InvalidArgument("prior covariances must have positive trace".into()));
        }
        let rb_scale = tc / tb;
        let r_c = linalg::symmetrize(&r_c);
        let r_b = linalg::symmetrize(&r_b) * rb_scale;
        let fc = cholesky_with_jitter(&r_c)?;
        let fb = cholesky_with_jitter(&r_b)?;
        let add = |mut r: DMatrix<f64>, j: f64| {
            for i in 0..r.nrows() {
                r[(i, i)] += j;
            }
            r
        };
        Ok(PriorPair {
            r_c: add(r_c, fc.jitter),
            r_b: add(r_b, fb.jitter),
            sigma2,
            rb_scale,
            jitter_c: fc.jitter,
            jitter_b: fb.jitter,
            chol_c: fc.factor,
            chol_b: fb.factor,
        })
    }

    /// Identity (delta-kernel) priors.
    pub fn identity(m: usize, n: usize, sigma2: f64) -> Result<Self> {
        Self::new(DMatrix::identity(m, m), DMatrix::identity(n, n), sigma2)
    }

    pub fn row_kernel(&self) -> &DMatrix<f64> {
        &self.r_c
    }

    pub fn col_kernel(&self) -> &DMatrix<f64> {
        &self.r_b
    }

    /// Noise variance, i.e. the regularization weight `μ`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Factor applied to the supplied `R_B` to match `trace(R_C)`.
    pub fn rb_scale(&self) -> f64 {
        self.rb_scale
    }

    pub fn jitter(&self) -> (f64, f64) {
        (self.jitter_c, self.jitter_b)
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(KblError::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
        }
        let mut p = self.clone();
        p.sigma2 = sigma2;
        Ok(p)
    }

    fn check(&self, data: &MaskedMatrix) -> Result<()> {
        let (m, n) = data.shape();
        if self.r_c.nrows() != m || self.r_b.nrows() != n {
            return Err(KblError::Dimension(format!(
                "priors are {}x{} / {}x{} but data is {m}x{n}",
                self.r_c.nrows(),
                self.r_c.nrows(),
                self.r_b.nrows(),
                self.r_b.nrows()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub factors: FactorPair,
    pub zhat: DMatrix<f64>,
    /// `K_X⁻¹ C`.
    pub coeff_c: DMatrix<f64>,
    /// `K_Y⁻¹ B`.
    pub coeff_b: DMatrix<f64>,
    /// Cost at the initial point and after every sweep.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl CompletionResult {
    pub fn cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds the initial cost")
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KmcOptions {
    pub rank: usize,
    /// Stopping threshold on the per-sweep cost change. `None` uses
    /// `rel_eps ×` the cost after the first sweep.
    pub eps: Option<f64>,
    pub rel_eps: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl KmcOptions {
    pub fn new(rank: usize, seed: u64) -> Self {
        KmcOptions { rank, eps: None, rel_eps: 1e-8, max_sweeps: 5_000, seed }
    }
}

/// Kernel-form ridge column update.
///
/// Minimizes `½ cᵀ Diag(d) c − cᵀ rhs + (μ/2) cᵀ K⁻¹ c` and returns
/// `(c, K⁻¹c)`. Requires `rhs_m = 0` wherever `d_m = 0`.
fn ridge_column(
    d: &DVector<f64>,
    rhs: &DVector<f64>,
    kernel: &DMatrix<f64>,
    mu: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = d.len();
    let support: Vec<usize> = (0..n).filter(|&m| d[m] > 0.0).collect();
    let mut coeff = DVector::zeros(n);
    if support.is_empty() {
        return Ok((DVector::zeros(n), coeff));
    }
    let s = support.len();
    let sqrt_d: Vec<f64> = support.iter().map(|&m| d[m].sqrt()).collect();
    let mut g = DMatrix::zeros(s, s);
    for (a, &ma) in support.iter().enumerate() {
        for (b, &mb) in support.iter().enumerate() {
            g[(a, b)] = sqrt_d[a] * kernel[(ma, mb)] * sqrt_d[b];
        }
        g[(a, a)] += mu;
    }
    let ch = Cholesky::new(g).ok_or_else(|| KblError::Numerical("column system is not positive definite".into()))?;
    let y = ch.solve(&DVector::from_iterator(s, support.iter().zip(&sqrt_d).map(|(&m, sd)| rhs[m] / sd)));
    for (a, &m) in support.iter().enumerate() {
        coeff[m] = sqrt_d[a] * y[a];
    }
    let mut col = DVector::zeros(n);
    for &m in &support {
        if coeff[m] != 0.0 {
            col.axpy(coeff[m], &kernel.column(m), 1.0);
        }
    }
    Ok((col, coeff))
}

/// Eigendecompositions of `K_SS`, keyed by the support `S`.
///
/// When every row in `S` carries the same weight `d₀` (a mask whose observed
/// rows share one pattern), the column system is `d₀K_SS + μI` and one
/// decomposition serves every column and sweep.
#[derive(Default)]
struct KernelCache {
    eig: HashMap<Vec<usize>, SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl KernelCache {
    fn ridge_column(
        &mut self,
        d: &DVector<f64>,
        rhs: &DVector<f64>,
        kernel: &DMatrix<f64>,
        mu: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = d.len();
        let support: Vec<usize> = (0..n).filter(|&m| d[m] > 0.0).collect();
        let Some(&first) = support.first() else {
            return ridge_column(d, rhs, kernel, mu);
        };
        let d0 = d[first];
        if support.iter().any(|&m| d[m] != d0) {
            return ridge_column(d, rhs, kernel, mu);
        }
        let eig = self.eig.entry(support.clone()).or_insert_with(|| {
            let k_ss = DMatrix::from_fn(support.len(), support.len(), |a, b| kernel[(support[a], support[b])]);
            linalg::sym_eigen(&k_ss)
        });
        // c̃_S = (d₀K_SS + μI)⁻¹ r_S; the eigenvalues are clamped at zero so
        // the system stays at least μI.
        let r = DVector::from_iterator(support.len(), support.iter().map(|&m| rhs[m]));
        let mut w = eig.eigenvectors.tr_mul(&r);
        for (wi, &lam) in w.iter_mut().zip(eig.eigenvalues.iter()) {
            *wi /= d0 * lam.max(0.0) + mu;
        }
        let y = &eig.eigenvectors * w;
        let mut coeff = DVector::zeros(n);
        let mut col = DVector::zeros(n);
        for (a, &m) in support.iter().enumerate() {
            coeff[m] = y[a];
            if y[a] != 0.0 {
                col.axpy(y[a], &kernel.column(m), 1.0);
            }
        }
        Ok((col, coeff))
    }
}

/// Masked residual `W ⊙ (Z − C Bᵀ)`.
fn masked_residual(data: &MaskedMatrix, f: &FactorPair) -> DMatrix<f64> {
    (&data.values - f.product()).component_mul(&data.mask)
}

/// `(W ⊙ Z_i) b_i` and `W (b_i ⊙ b_i)` for `Z_i = Z − Σ_{j≠i} c_j b_jᵀ`,
/// from the masked residual of the full product.
fn column_system(
    residual: &DMatrix<f64>,
    mask: &DMatrix<f64>,
    own: &DVector<f64>,
    partner: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let d = mask * partner.component_mul(partner);
    let rhs = residual * partner + own.component_mul(&d);
    (rhs, d)
}

/// [`column_system`] for a column of `B`, without transposing the residual.
fn column_system_t(
    residual: &DMatrix<f64>,
    mask_t: &DMatrix<f64>,
    own: &DVector<f64>,
    partner: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let d = mask_t * partner.component_mul(partner);
    let rhs = residual.tr_mul(partner) + own.component_mul(&d);
    (rhs, d)
}

/// Exact minimizer over column `i` of `C` of the KMC cost:
/// `c_i = (Diag[W(b_i ⊙ b_i)] + μ K_X⁻¹)⁻¹ (W ⊙ Z_i) b_i`.
pub fn kmc_update_c(
    i: usize,
    data: &MaskedMatrix,
    factors: &FactorPair,
    row_kernel: &DMatrix<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    let (m, n) = data.shape();
    if factors.c.nrows() != m || factors.b.nrows() != n || i >= factors.rank() {
        return Err(KblError::Dimension("factor shapes do not match the data".into()));
    }
    if row_kernel.shape() != (m, m) {
        return Err(KblError::Dimension("row kernel does not match the data".into()));
    }
    let res = masked_residual(data, factors);
    let (rhs, d) = column_system(&res, &data.mask, &factors.c.column(i).into_owned(), &factors.b.column(i).into_owned());
    Ok(ridge_column(&d, &rhs, row_kernel, mu)?.0)
}

/// Mirror of [`kmc_update_c`] for column `i` of `B`.
pub fn kmc_update_b(
    i: usize,
    data: &MaskedMatrix,
    factors: &FactorPair,
    col_kernel: &DMatrix<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    let swapped = FactorPair { c: factors.b.clone(), b: factors.c.clone() };
    kmc_update_c(i, &data.transpose(), &swapped, col_kernel, mu)
}

/// How the columns of `C` are updated.
#[derive(Clone, Copy, Debug)]
enum CoefficientRule {
    Ridge,
    Lasso { lambda: f64 },
}

struct Fitter<'a> {
    data: &'a MaskedMatrix,
    priors: &'a PriorPair,
    mu: f64,
    rule: CoefficientRule,
    kx_inv: Option<DMatrix<f64>>,
}

impl Fitter<'_> {
    fn run(&self, opts: &KmcOptions) -> Result<CompletionResult> {
        let (m, n) = self.data.shape();
        if opts.rank == 0 {
            return Err(KblError::InvalidArgument("rank budget must be >= 1".into()));
        }
        let mut f = init_factors(m, n, opts.rank, opts.seed);
        let mut cc = self.priors.chol_c.solve(&f.c);
        let mut cb = self.priors.chol_b.solve(&f.b);
        let mut trace = vec![self.cost(&f, &cc, &cb)];
        let mut eps = opts.eps;
        let mut converged = false;
        let mut sweeps = 0;
        let (mut cache_c, mut cache_b) = (KernelCache::default(), KernelCache::default());
        let mask_t = self.data.mask.transpose();

        while sweeps < opts.max_sweeps {
            let mut res = masked_residual(self.data, &f);
            for i in 0..opts.rank {
                let own = f.c.column(i).into_owned();
                let partner = f.b.column(i).into_owned();
                let (rhs, d) = column_system(&res, &self.data.mask, &own, &partner);
                let (col, coeff) = match self.rule {
                    CoefficientRule::Ridge => cache_c.ridge_column(&d, &rhs, &self.priors.r_c, self.mu)?,
                    CoefficientRule::Lasso { lambda } => self.lasso_column(&d, &rhs, &own, lambda)?,
                };
                res += (&own - &col) * partner.transpose();
                res.component_mul_assign(&self.data.mask);
                f.c.set_column(i, &col);
                cc.set_column(i, &coeff);
            }
            for i in 0..opts.rank {
                let own = f.b.column(i).into_owned();
                let partner = f.c.column(i).into_owned();
                let (rhs, d) = column_system_t(&res, &mask_t, &own, &partner);
                let (col, coeff) = cache_b.ridge_column(&d, &rhs, &self.priors.r_b, self.mu)?;
                res += &partner * (&own - &col).transpose();
                res.component_mul_assign(&self.data.mask);
                f.b.set_column(i, &col);
                cb.set_column(i, &coeff);
            }
            sweeps += 1;
            let cost = self.cost(&f, &cc, &cb);
            let old = *trace.last().expect("nonempty trace");
            trace.push(cost);
            let tol = *eps.get_or_insert(opts.rel_eps * cost);
            if sweeps > 1 && (cost - old).abs() < tol {
                converged = true;
                break;
            }
        }

        Ok(CompletionResult {
            zhat: f.product(),
            factors: f,
            coeff_c: cc,
            coeff_b: cb,
            cost_trace: trace,
            converged,
            sweeps,
        })
    }

    /// Cost given factors and their coefficient matrices.
    fn cost(&self, f: &FactorPair, cc: &DMatrix<f64>, cb: &DMatrix<f64>) -> f64 {
        let fit = 0.5 * frobenius_sq(&masked_residual(self.data, f));
        let pen = f.c.dot(cc) + f.b.dot(cb);
        let l1 = match self.rule {
            CoefficientRule::Ridge => 0.0,
            CoefficientRule::Lasso { lambda } => lambda * f.c.iter().map(|v| v.abs()).sum::<f64>(),
        };
        fit + 0.5 * self.mu * pen + l1
    }

    /// Exact minimizer of `½cᵀHc − cᵀrhs + λ‖c‖₁` with
    /// `H = Diag(d) + μ K_X⁻¹`, by cyclic coordinate descent with scalar
    /// soft-thresholding, warm-started at the current column.
    fn lasso_column(
        &self,
        d: &DVector<f64>,
        rhs: &DVector<f64>,
        current: &DVector<f64>,
        lambda: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let kx_inv = self.kx_inv.as_ref().expect("lasso rule caches K_X⁻¹");
        let mut h = kx_inv * self.mu;
        for (k, dk) in d.iter().enumerate() {
            h[(k, k)] += dk;
        }
        let c = lasso_cd(&h, rhs, current, lambda)?;
        let coeff = self.priors.chol_c.solve(&c);
        Ok((c, coeff))
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn lasso_objective(h: &DMatrix<f64>, rhs: &DVector<f64>, c: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * c.dot(&(h * c)) - c.dot(rhs) + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Coordinate-descent Lasso on a positive definite quadratic, run until the
/// duality gap falls below `LASSO_GAP_TOL`. Returns the start point if no
/// iterate improves on it.
pub(crate) fn lasso_cd(
    h: &DMatrix<f64>,
    rhs: &DVector<f64>,
    start: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    let n = rhs.len();
    let chol = Cholesky::new(h.clone()).ok_or_else(|| KblError::Numerical("Lasso Hessian is not positive definite".into()))?;
    let mut c = start.clone();
    let mut hc = h * &c;
    let start_obj = lasso_objective(h, rhs, start, lambda);
    for _ in 0..LASSO_MAX_PASSES {
        for j in 0..n {
            let hjj = h[(j, j)];
            let old = c[j];
            let partial = rhs[j] - (hc[j] - hjj * old);
            let new = soft_threshold(partial, lambda) / hjj;
            if new != old {
                hc.axpy(new - old, &h.column(j), 1.0);
                c[j] = new;
            }
        }
        // Dual point: clip the gradient residual into the ℓ∞ ball.
        let v = (rhs - &hc).map(|x| x.clamp(-lambda, lambda));
        let u = rhs - &v;
        let dual = -0.5 * u.dot(&chol.solve(&u));
        let primal = 0.5 * c.dot(&hc) - c.dot(rhs) + lambda * c.iter().map(|x| x.abs()).sum::<f64>();
        if primal - dual <= LASSO_GAP_TOL * primal.abs().max(1.0) {
            return Ok(if primal <= start_obj { c } else { start.clone() });
        }
    }
    Err(KblError::NotConverged("inner Lasso exceeded its pass budget".into()))
}

/// Algorithm 1: alternating exact column updates of `C` then `B`.
pub fn kmc_fit(data: &MaskedMatrix, priors: &PriorPair, opts: &KmcOptions) -> Result<CompletionResult> {
    priors.check(data)?;
    Fitter { data, priors, mu: priors.sigma2, rule: CoefficientRule::Ridge, kx_inv: None }.run(opts)
}

/// KMC with an ℓ1 penalty `λ‖C‖₁` on the coefficient columns.
///
/// At `λ = 0` this runs the exact KMC iteration.
pub fn kdl_fit(
    data: &MaskedMatrix,
    priors: &PriorPair,
    lambda: f64,
    opts: &KmcOptions,
) -> Result<CompletionResult> {
    priors.check(data)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(KblError::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return kmc_fit(data, priors, opts);
    }
    let m = data.shape().0;
    let kx_inv = priors.chol_c.solve(&DMatrix::identity(m, m));
    Fitter {
        data,
        priors,
        mu: priors.sigma2,
        rule: CoefficientRule::Lasso { lambda },
        kx_inv: Some(linalg::symmetrize(&kx_inv)),
    }
    .run(opts)
}

/// The KMC (or KDL) cost of an arbitrary factor pair, using the prior
/// factorizations.
pub fn kmc_cost(data: &MaskedMatrix, priors: &PriorPair, factors: &FactorPair, lambda: f64) -> Result<f64> {
    priors.check(data)?;
    let cc = priors.chol_c.solve(&factors.c);
    let cb = priors.chol_b.solve(&factors.b);
    let fit = 0.5 * frobenius_sq(&masked_residual(data, factors));
    let pen = factors.c.dot(&cc) + factors.b.dot(&cb);
    Ok(fit + 0.5 * priors.sigma2 * pen + lambda * factors.c.iter().map(|v| v.abs()).sum::<f64>())
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.sum()
}

/// `½(‖B‖²_F + ‖C‖²_F)`, which upper-bounds `‖C Bᵀ‖_*`.
pub fn factor_penalty(f: &FactorPair) -> f64 {
    0.5 * (frobenius_sq(&f.b) + frobenius_sq(&f.c))
}

/// Singular-value soft-thresholding.
pub fn svt(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values.map(|x| (x - tau).max(0.0));
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (k, &sk) in s.iter().enumerate() {
        if sk > 0.0 {
            out += u.column(k) * vt.row(k) * sk;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SvtResult {
    pub zhat: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn nuclear_objective(data: &MaskedMatrix, a: &DMatrix<f64>, mu: f64) -> f64 {
    0.5 * frobenius_sq(&(&data.values - a).component_mul(&data.mask)) + mu * nuclear_norm(a)
}

/// `min_A ½‖(Z − A) ⊙ W‖²_F + μ‖A‖_*` by proximal gradient with unit step,
/// from `A = 0`, until the relative objective change drops to `tol`.
pub fn svt_oracle(data: &MaskedMatrix, mu: f64, tol: f64) -> Result<SvtResult> {
    svt_oracle_from(data, mu, tol, 100_000, None)
}

pub fn svt_oracle_from(
    data: &MaskedMatrix,
    mu: f64,
    tol: f64,
    max_iters: usize,
    start: Option<&DMatrix<f64>>,
) -> Result<SvtResult> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(KblError::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    let (m, n) = data.shape();
    let mut a = match start {
        Some(s) if s.shape() == (m, n) => s.clone(),
        Some(_) => return Err(KblError::Dimension("start point has the wrong shape".into())),
        None => DMatrix::zeros(m, n),
    };
    let unobserved = data.mask.map(|w| 1.0 - w);
    let mut obj = nuclear_objective(data, &a, mu);
    let mut iterations = 0;
    while iterations < max_iters {
        let step = &data.values + a.component_mul(&unobserved);
        a = svt(&step, mu);
        iterations += 1;
        let next = nuclear_objective(data, &a, mu);
        let change = (obj - next).abs();
        obj = next;
        if change <= tol * obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(SvtResult { zhat: a, objective: obj, iterations })
}
