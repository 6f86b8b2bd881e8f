//! Weighted group Lasso by block coordinate descent.
//!
//! Minimizes `½‖z − Σ_i M_i γ_i‖² + μ Σ_i (γ_iᵀ P_i γ_i)^{1/2}`. Each block
//! subproblem is solved exactly: after the change of variables
//! `γ' = P^{1/2} γ` it becomes a Euclidean-norm penalized least-squares
//! problem whose nonzero solution is pinned down by a scalar secular
//! equation in `s = ‖γ'‖`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{KblError, Result};
use crate::linalg::{self, sym_eigen};

/// Relative eigenvalue floor a penalty matrix must clear after jitter.
const PENALTY_COND_FLOOR: f64 = 1e-12;
/// Relative asymmetry / negativity tolerated in a penalty matrix.
const PENALTY_PSD_TOL: f64 = 1e-10;
const SECULAR_MAX_ITERS: usize = 200;

#[derive(Clone, Debug)]
pub struct Block {
    /// `N × d` design.
    pub design: DMatrix<f64>,
    /// `d × d` PSD penalty.
    pub penalty: DMatrix<f64>,
}

impl Block {
    pub fn new(design: DMatrix<f64>, penalty: DMatrix<f64>) -> Self {
        Block { design, penalty }
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }
}

/// Per-block quantities reused across every update of that block.
#[derive(Clone, Debug)]
struct Prepared {
    inv_sqrt_p: DMatrix<f64>,
    /// Eigenvectors of `Q = P^{-1/2} MᵀM P^{-1/2}`.
    q_vecs: DMatrix<f64>,
    q_vals: DVector<f64>,
}

impl Prepared {
    fn new(design: &DMatrix<f64>, penalty: &DMatrix<f64>) -> Result<Self> {
        let (_, inv_sqrt_p) = linalg::sqrt_and_inv_sqrt(penalty)?;
        let a = design * &inv_sqrt_p;
        let eig = sym_eigen(&a.tr_mul(&a));
        let q_vals = eig.eigenvalues.map(|l| l.max(0.0));
        Ok(Prepared { inv_sqrt_p, q_vecs: eig.eigenvectors, q_vals })
    }

    /// `P^{-1/2} Mᵀ r`.
    fn whitened_correlation(&self, design: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        &self.inv_sqrt_p * design.tr_mul(r)
    }

    fn minimize(&self, design: &DMatrix<f64>, z_i: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        let g = self.whitened_correlation(design, z_i);
        let d = g.len();
        if mu > 0.0 && g.norm() <= mu {
            return Ok(DVector::zeros(d));
        }
        let w = self.q_vecs.tr_mul(&g);
        let scale = if mu == 0.0 {
            // Unpenalized block: least-squares solution of minimum norm.
            let lmax = self.q_vals.max();
            let cut = 1e-12 * lmax.max(f64::MIN_POSITIVE);
            self.q_vals.map(|l| if l > cut { 1.0 / l } else { 0.0 })
        } else {
            let s = solve_secular(&self.q_vals, &w, mu)?;
            self.q_vals.map(|l| s / (l * s + mu))
        };
        let gamma_white = &self.q_vecs * w.component_mul(&scale);
        Ok(&self.inv_sqrt_p * gamma_white)
    }
}

/// Root `s > 0` of `Σ_j w_j² / (λ_j s + μ)² = 1`, given that the left side
/// exceeds one at `s = 0`. The function is convex and decreasing, so Newton
/// iterates started left of the root never overshoot; bisection is the
/// fallback whenever a step leaves the bracket.
fn solve_secular(lambda: &DVector<f64>, w: &DVector<f64>, mu: f64) -> Result<f64> {
    let psi = |s: f64| -> (f64, f64) {
        let mut f = -1.0;
        let mut df = 0.0;
        for (l, wj) in lambda.iter().zip(w.iter()) {
            let den = l * s + mu;
            let w2 = wj * wj;
            f += w2 / (den * den);
            df -= 2.0 * w2 * l / (den * den * den);
        }
        (f, df)
    };

    let lmax = lambda.max();
    if lmax <= 0.0 {
        return Err(KblError::Numerical("block design has no range".into()));
    }
    let mut hi = (w.norm() / lmax).max(f64::MIN_POSITIVE);
    let mut grown = 0;
    while psi(hi).0 > 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > SECULAR_MAX_ITERS || !hi.is_finite() {
            return Err(KblError::NotConverged("secular equation has no bracket".into()));
        }
    }
    let mut lo = 0.0;
    let mut s = 0.0;
    for _ in 0..SECULAR_MAX_ITERS {
        let (f, df) = psi(s);
        if f == 0.0 {
            return Ok(s);
        }
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
        let newton = if df < 0.0 { s - f / df } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= 2.0 * f64::EPSILON * next.abs() {
            return Ok(next);
        }
        s = next;
    }
    Err(KblError::NotConverged(format!(
        "secular equation root finder exceeded {SECULAR_MAX_ITERS} iterations"
    )))
}

/// Exact minimizer of `½‖z_i − Mγ‖² + μ‖P^{1/2}γ‖` for a single block.
///
/// Returns an exact zero vector when `‖P^{-1/2}Mᵀz_i‖ ≤ μ`.
pub fn block_update(
    z_i: &DVector<f64>,
    design: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    if design.nrows() != z_i.len() || penalty.nrows() != design.ncols() || !penalty.is_square() {
        return Err(KblError::Dimension("block operands disagree in size".into()));
    }
    let (penalty, _) = jitter_penalty(penalty)?;
    Prepared::new(design, &penalty)?.minimize(design, z_i, mu)
}

/// Validate a PSD penalty and lift its spectrum off zero if needed.
fn jitter_penalty(p: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let asym = (p - p.transpose()).amax();
    if asym > PENALTY_PSD_TOL * p.amax().max(f64::MIN_POSITIVE) {
        return Err(KblError::InvalidArgument("penalty matrix is not symmetric".into()));
    }
    let p = linalg::symmetrize(p);
    let (min, max) = linalg::eigen_extremes(&p);
    if max <= 0.0 {
        return Err(KblError::InvalidArgument("penalty matrix is zero or negative".into()));
    }
    if min < -PENALTY_PSD_TOL * max {
        return Err(KblError::InvalidArgument(format!(
            "penalty matrix is not PSD (eigenvalues {min:e} .. {max:e})"
        )));
    }
    let floor = PENALTY_COND_FLOOR * max;
    if min >= floor {
        return Ok((p, 0.0));
    }
    let base = f64::EPSILON * p.trace();
    for k in 0..linalg::MAX_JITTER_STEPS {
        let jitter = base * 10f64.powi(k);
        if min + jitter >= floor {
            let mut q = p.clone();
            for i in 0..q.nrows() {
                q[(i, i)] += jitter;
            }
            return Ok((q, jitter));
        }
    }
    Err(KblError::Numerical("penalty matrix singular beyond jitter".into()))
}

/// A weighted group-Lasso instance.
#[derive(Clone, Debug)]
pub struct BlockProblem {
    z: DVector<f64>,
    blocks: Vec<Block>,
    mu: f64,
    penalty_jitter: Vec<f64>,
    prepared: Vec<Prepared>,
}

impl BlockProblem {
    pub fn new(z: DVector<f64>, blocks: Vec<Block>, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(KblError::InvalidArgument(format!("mu must be >= 0, got {mu}")));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(KblError::InvalidArgument("targets must be finite".into()));
        }
        let n = z.len();
        let mut prepared = Vec::with_capacity(blocks.len());
        let mut penalty_jitter = Vec::with_capacity(blocks.len());
        let mut stored = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.into_iter().enumerate() {
            if b.design.nrows() != n {
                return Err(KblError::Dimension(format!(
                    "block {i} design has {} rows, expected {n}",
                    b.design.nrows()
                )));
            }
            if !b.penalty.is_square() || b.penalty.nrows() != b.design.ncols() {
                return Err(KblError::Dimension(format!(
                    "block {i} penalty is {}x{}, design has {} columns",
                    b.penalty.nrows(),
                    b.penalty.ncols(),
                    b.design.ncols()
                )));
            }
            let (penalty, jitter) = jitter_penalty(&b.penalty)?;
            prepared.push(Prepared::new(&b.design, &penalty)?);
            penalty_jitter.push(jitter);
            stored.push(Block { design: b.design, penalty });
        }
        Ok(BlockProblem { z, blocks: stored, mu, penalty_jitter, prepared })
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    /// Blocks with their (possibly jittered) penalties.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn penalty_jitter(&self) -> &[f64] {
        &self.penalty_jitter
    }

    /// Same blocks and targets with a different `μ`.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(KblError::InvalidArgument(format!("mu must be >= 0, got {mu}")));
        }
        let mut p = self.clone();
        p.mu = mu;
        Ok(p)
    }

    pub fn fitted(&self, gammas: &[DVector<f64>]) -> DVector<f64> {
        let mut f = DVector::zeros(self.z.len());
        for (b, g) in self.blocks.iter().zip(gammas) {
            if g.iter().any(|&v| v != 0.0) {
                f += &b.design * g;
            }
        }
        f
    }

    pub fn penalty_norm(&self, i: usize, gamma: &DVector<f64>) -> f64 {
        gamma.dot(&(&self.blocks[i].penalty * gamma)).max(0.0).sqrt()
    }

    pub fn objective(&self, gammas: &[DVector<f64>]) -> f64 {
        self.objective_from_residual(gammas, &(&self.z - self.fitted(gammas)))
    }

    fn objective_from_residual(&self, gammas: &[DVector<f64>], r: &DVector<f64>) -> f64 {
        let pen: f64 = gammas.iter().enumerate().map(|(i, g)| self.penalty_norm(i, g)).sum();
        0.5 * r.norm_squared() + self.mu * pen
    }

    /// `‖P_i^{-1/2} M_iᵀ z‖`: the smallest `μ` zeroing block `i` when all
    /// other blocks are zero.
    pub fn threshold(&self, i: usize) -> f64 {
        self.prepared[i].whitened_correlation(&self.blocks[i].design, &self.z).norm()
    }

    /// Smallest `μ` for which the all-zero solution is optimal.
    pub fn mu_max(&self) -> f64 {
        (0..self.blocks.len()).map(|i| self.threshold(i)).fold(0.0, f64::max)
    }

    fn check_gammas(&self, gammas: &[DVector<f64>]) -> Result<()> {
        if gammas.len() != self.blocks.len()
            || gammas.iter().zip(&self.blocks).any(|(g, b)| g.len() != b.dim())
        {
            return Err(KblError::Dimension("coefficients do not match block layout".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BlockSolution {
    pub gammas: Vec<DVector<f64>>,
    pub support: BTreeSet<usize>,
    pub objective: f64,
    /// Number of completed sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every sweep, starting with the initial point.
    pub trace: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct BcdOptions {
    /// Relative per-sweep decrease below which the solver may stop.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Certificate threshold, relative to `1 + μ_max`.
    pub certificate_tol: f64,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions { tol: 1e-13, max_sweeps: 20_000, certificate_tol: 1e-9 }
    }
}

fn support_of(gammas: &[DVector<f64>]) -> BTreeSet<usize> {
    gammas
        .iter()
        .enumerate()
        .filter(|(_, g)| g.iter().any(|&v| v != 0.0))
        .map(|(i, _)| i)
        .collect()
}

pub fn solve_bcd(problem: &BlockProblem, tol: f64, max_sweeps: usize) -> Result<BlockSolution> {
    let opts = BcdOptions { tol, max_sweeps, ..BcdOptions::default() };
    solve_bcd_with(problem, None, &opts)
}

/// Cyclic block coordinate descent from `init` (or zero).
pub fn solve_bcd_with(
    problem: &BlockProblem,
    init: Option<&[DVector<f64>]>,
    opts: &BcdOptions,
) -> Result<BlockSolution> {
    let mut gammas: Vec<DVector<f64>> = match init {
        Some(g) => {
            problem.check_gammas(g)?;
            g.to_vec()
        }
        None => problem.blocks.iter().map(|b| DVector::zeros(b.dim())).collect(),
    };
    let cert_tol = opts.certificate_tol * (1.0 + problem.mu_max());
    let mut objective = problem.objective(&gammas);
    let mut trace = vec![objective];
    let mut residual = &problem.z - problem.fitted(&gammas);
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        for (i, block) in problem.blocks.iter().enumerate() {
            // The residual turns into z_i in place, then back.
            if gammas[i].iter().any(|&v| v != 0.0) {
                residual.gemv(1.0, &block.design, &gammas[i], 1.0);
            }
            let new = problem.prepared[i].minimize(&block.design, &residual, problem.mu)?;
            if new.iter().any(|&v| v != 0.0) {
                residual.gemv(-1.0, &block.design, &new, 1.0);
            }
            gammas[i] = new;
        }
        sweeps += 1;
        // Resync the running residual to keep rounding from accumulating.
        residual = &problem.z - problem.fitted(&gammas);
        let next = problem.objective_from_residual(&gammas, &residual);
        trace.push(next);
        let decrease = objective - next;
        objective = next;
        if decrease < opts.tol * (1.0 + objective.abs())
            && optimality_certificate(problem, &gammas)? <= cert_tol
        {
            converged = true;
            break;
        }
    }

    Ok(BlockSolution {
        support: support_of(&gammas),
        objective,
        iterations: sweeps,
        converged,
        trace,
        gammas,
    })
}

/// Largest first-order optimality violation over the blocks.
///
/// Active blocks contribute `‖M_iᵀr − μ P_iγ_i / ‖P_i^{1/2}γ_i‖‖`, zero
/// blocks `max(0, ‖P_i^{-1/2}M_iᵀr‖ − μ)`, with `r` the residual.
pub fn optimality_certificate(problem: &BlockProblem, gammas: &[DVector<f64>]) -> Result<f64> {
    problem.check_gammas(gammas)?;
    let r = &problem.z - problem.fitted(gammas);
    let mut worst = 0.0f64;
    for (i, (b, g)) in problem.blocks.iter().zip(gammas).enumerate() {
        let v = if g.iter().any(|&x| x != 0.0) {
            let corr = b.design.tr_mul(&r);
            let norm = problem.penalty_norm(i, g);
            if norm > 0.0 {
                (corr - (&b.penalty * g) * (problem.mu / norm)).norm()
            } else {
                corr.norm()
            }
        } else {
            (problem.prepared[i].whitened_correlation(&b.design, &r).norm() - problem.mu).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
