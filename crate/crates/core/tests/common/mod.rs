//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls into the solvers under test; the oracles use plain
//! loops or nalgebra's Cholesky where a factorization is unavoidable.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).chain([b[i]]).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    DVector::from_vec(x)
}

/// Inverse by Gauss–Jordan elimination.
pub fn gauss_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        out.set_column(j, &gauss_solve(a, &e));
    }
    out
}

/// Random symmetric positive definite matrix `GᵀG + floor·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let g = randn(rng, d + 2, d);
    g.transpose() * g + DMatrix::identity(d, d) * floor
}

pub fn group_lasso_objective(z: &DVector<f64>, blocks: &[(DMatrix<f64>, DMatrix<f64>)], mu: f64, gammas: &[DVector<f64>]) -> f64 {
    let mut r = z.clone();
    let mut pen = 0.0;
    for ((m, p), g) in blocks.iter().zip(gammas) {
        r -= m * g;
        pen += g.dot(&(p * g)).max(0.0).sqrt();
    }
    0.5 * r.norm_squared() + mu * pen
}

/// Accelerated proximal gradient on the group Lasso, in the coordinates
/// `γ' = Lᵀγ` where `P = LLᵀ` (Cholesky), so the penalty becomes `μΣ‖γ'_i‖`.
/// Runs `iters` iterations with adaptive restart and returns the best
/// objective seen.
pub fn group_lasso_oracle(z: &DVector<f64>, blocks: &[(DMatrix<f64>, DMatrix<f64>)], mu: f64, iters: usize) -> f64 {
    let transforms: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|(_, p)| {
            let l = p.clone().cholesky().expect("oracle needs PD penalties").l();
            // L^{-T}
            gauss_inverse(&l.transpose())
        })
        .collect();
    let designs: Vec<DMatrix<f64>> = blocks.iter().zip(&transforms).map(|((m, _), t)| m * t).collect();
    let a = DMatrix::from_fn(z.len(), designs.iter().map(|d| d.ncols()).sum(), |r, c| {
        let mut off = 0;
        for d in &designs {
            if c < off + d.ncols() {
                return d[(r, c - off)];
            }
            off += d.ncols();
        }
        unreachable!()
    });
    let sizes: Vec<usize> = designs.iter().map(|d| d.ncols()).collect();
    let lip = (a.transpose() * &a).symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let n = a.ncols();
    let ata = a.transpose() * &a;
    let atz = a.transpose() * z;
    let obj = |x: &DVector<f64>| -> f64 {
        let r = z - &a * x;
        let mut pen = 0.0;
        let mut off = 0;
        for &s in &sizes {
            pen += x.rows(off, s).norm();
            off += s;
        }
        0.5 * r.norm_squared() + mu * pen
    };
    let prox = |v: DVector<f64>| -> DVector<f64> {
        let mut out = v;
        let mut off = 0;
        for &s in &sizes {
            let nrm = out.rows(off, s).norm();
            let scale = if nrm > mu * step { 1.0 - mu * step / nrm } else { 0.0 };
            for k in off..off + s {
                out[k] *= scale;
            }
            off += s;
        }
        out
    };
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = obj(&x);
    let mut last = best;
    for _ in 0..iters {
        let grad = &ata * &y - &atz;
        let xn = prox(&y - grad * step);
        let fx = obj(&xn);
        if fx > last {
            // restart momentum
            t = 1.0;
            y = x.clone();
            last = obj(&x);
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &xn + (&xn - &x) * ((t - 1.0) / tn);
        let moved = (&xn - &x).norm();
        x = xn;
        t = tn;
        last = fx;
        best = best.min(fx);
        if moved == 0.0 {
            break;
        }
    }
    best
}

/// Gradient descent driven by central finite differences on a smooth
/// function, stopped when the finite-difference gradient norm falls below
/// `gtol`. Step size `1/lip`.
pub fn fd_gradient_descent<F: Fn(&DVector<f64>) -> f64>(f: F, x0: DVector<f64>, lip: f64, gtol: f64, max_iter: usize) -> DVector<f64> {
    let mut x = x0;
    for _ in 0..max_iter {
        let g = fd_gradient(&f, &x, 1e-4);
        if g.norm() <= gtol {
            break;
        }
        x -= g / lip;
    }
    x
}

pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: &F, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// KMC cost with explicit inverse priors (oracle side).
pub fn kmc_cost_explicit(
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    c: &DMatrix<f64>,
    b: &DMatrix<f64>,
    kx_inv: &DMatrix<f64>,
    ky_inv: &DMatrix<f64>,
    mu: f64,
) -> f64 {
    let r = (z - c * b.transpose()).component_mul(w);
    0.5 * r.norm_squared() + 0.5 * mu * ((c.transpose() * kx_inv * c).trace() + (b.transpose() * ky_inv * b).trace())
}

/// Finite-difference gradient norm of the KMC cost over all entries of
/// `C` and `B`.
pub fn kmc_fd_gradient_norm(
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    c: &DMatrix<f64>,
    b: &DMatrix<f64>,
    kx_inv: &DMatrix<f64>,
    ky_inv: &DMatrix<f64>,
    mu: f64,
    h: f64,
) -> f64 {
    let mut sq = 0.0;
    let mut cc = c.clone();
    for idx in 0..c.len() {
        let o = cc[idx];
        cc[idx] = o + h;
        let fp = kmc_cost_explicit(z, w, &cc, b, kx_inv, ky_inv, mu);
        cc[idx] = o - h;
        let fm = kmc_cost_explicit(z, w, &cc, b, kx_inv, ky_inv, mu);
        cc[idx] = o;
        sq += ((fp - fm) / (2.0 * h)).powi(2);
    }
    let mut bb = b.clone();
    for idx in 0..b.len() {
        let o = bb[idx];
        bb[idx] = o + h;
        let fp = kmc_cost_explicit(z, w, c, &bb, kx_inv, ky_inv, mu);
        bb[idx] = o - h;
        let fm = kmc_cost_explicit(z, w, c, &bb, kx_inv, ky_inv, mu);
        bb[idx] = o;
        sq += ((fp - fm) / (2.0 * h)).powi(2);
    }
    sq.sqrt()
}

/// Random binary mask with each entry observed with probability `p`.
pub fn random_mask(rng: &mut ChaCha8Rng, r: usize, c: usize, p: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
