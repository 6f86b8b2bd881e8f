//! Kernel functions, Gram matrices and the closed-form kernel ridge predictor.
//!
//! The ridge solution `α = (K + μI)⁻¹ z` is computed with a Cholesky solve.
//! Its prediction `k(x)ᵀα` is the kriging / GP posterior mean when the kernel
//! is the field covariance and `μ` the noise variance; [`lmmse_predict`]
//! evaluates that second form directly so the two can be compared.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KblError, Result};
use crate::linalg::{self, cholesky_with_jitter};

/// Tolerance on the convex-combination weight sum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A point of the input domain. Coordinates are finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(KblError::InvalidArgument("point must have dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(KblError::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(Point(coords))
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Point::new(vec![v])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// The one-dimensional point made of coordinate `i`.
    pub fn coordinate(&self, i: usize) -> Result<Point> {
        self.0
            .get(i)
            .map(|&c| Point(vec![c]))
            .ok_or_else(|| KblError::Dimension(format!("coordinate {i} of {}-dim point", self.dim())))
    }
}

/// Declarative kernel description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-‖x − x'‖² / θ²)`.
    GaussianRbf { width: f64 },
    /// Normalized `sin(πt)/(πt)` of `t = x − x'`, one-dimensional only.
    Sinc,
    KroneckerDelta,
    /// `xᵀx'`.
    Linear,
    /// `(xᵀx' + offset)^degree`.
    Polynomial { degree: u32, offset: f64 },
    ConvexCombination { weights: Vec<f64>, children: Vec<KernelSpec> },
}

impl KernelSpec {
    pub fn gaussian(width: f64) -> Result<Self> {
        let spec = KernelSpec::GaussianRbf { width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn convex(weights: Vec<f64>, children: Vec<KernelSpec>) -> Result<Self> {
        let spec = KernelSpec::ConvexCombination { weights, children };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::GaussianRbf { width } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(KblError::InvalidArgument(format!(
                        "Gaussian RBF width must be positive, got {width}"
                    )));
                }
            }
            KernelSpec::Polynomial { offset, .. } => {
                if !(offset.is_finite() && *offset >= 0.0) {
                    return Err(KblError::InvalidArgument(
                        "polynomial offset must be finite and nonnegative".into(),
                    ));
                }
            }
            KernelSpec::ConvexCombination { weights, children } => {
                if weights.len() != children.len() || weights.is_empty() {
                    return Err(KblError::InvalidArgument(
                        "convex combination needs one weight per child".into(),
                    ));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(KblError::InvalidArgument(
                        "convex combination weights must be nonnegative".into(),
                    ));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(KblError::InvalidArgument(format!(
                        "convex combination weights sum to {sum}, expected 1"
                    )));
                }
                for c in children {
                    c.validate()?;
                }
            }
            KernelSpec::Sinc | KernelSpec::KroneckerDelta | KernelSpec::Linear => {}
        }
        Ok(())
    }

    /// Evaluate on raw coordinate slices of equal length.
    pub(crate) fn eval_slices(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(KblError::Dimension(format!(
                "kernel arguments have dimensions {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(match self {
            KernelSpec::GaussianRbf { width } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (width * width)).exp()
            }
            KernelSpec::Sinc => {
                if x.len() != 1 {
                    return Err(KblError::Dimension(format!(
                        "sinc kernel is one-dimensional, got dimension {}",
                        x.len()
                    )));
                }
                sinc(x[0] - y[0])
            }
            KernelSpec::KroneckerDelta => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, offset } => {
                let base = dot(x, y) + offset;
                base.powi(*degree as i32)
            }
            KernelSpec::ConvexCombination { weights, children } => {
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(children) {
                    acc += w * c.eval_slices(x, y)?;
                }
                acc
            }
        })
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Normalized sinc; `sinc(0) = 1`.
pub fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let a = PI * t;
        a.sin() / a
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: &Point, y: &Point) -> Result<f64> {
    spec.eval_slices(x.coords(), y.coords())
}

/// How [`gram`] treats a matrix that fails to factorize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterPolicy {
    /// Return the raw kernel evaluations.
    Never,
    /// Add the smallest `10^k · eps · trace` that lets Cholesky succeed.
    #[default]
    Escalate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    /// Kernel evaluations with `jitter` already on the diagonal.
    pub entries: DMatrix<f64>,
    pub jitter: f64,
}

impl GramMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(KblError::Dimension("Gram matrix must be square".into()));
        }
        Ok(GramMatrix { entries, jitter: 0.0 })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Kernel evaluations without the jitter.
    pub fn raw(&self) -> DMatrix<f64> {
        let mut k = self.entries.clone();
        for i in 0..k.nrows() {
            k[(i, i)] -= self.jitter;
        }
        k
    }

    /// Ratio `min eigenvalue / max eigenvalue` of the raw matrix.
    pub fn min_eigen_ratio(&self) -> f64 {
        let (min, max) = linalg::eigen_extremes(&self.raw());
        min / max.abs().max(f64::MIN_POSITIVE)
    }
}

/// Cross-kernel matrix with entries `k(rows_i, cols_j)`.
pub fn cross_gram(spec: &KernelSpec, rows: &[Point], cols: &[Point]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut k = DMatrix::zeros(rows.len(), cols.len());
    for (i, x) in rows.iter().enumerate() {
        for (j, y) in cols.iter().enumerate() {
            k[(i, j)] = spec.eval_slices(x.coords(), y.coords())?;
        }
    }
    Ok(k)
}

pub fn gram(spec: &KernelSpec, points: &[Point], policy: JitterPolicy) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(KblError::InvalidArgument("Gram matrix of zero points".into()));
    }
    spec.validate()?;
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval_slices(points[i].coords(), points[j].coords())?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let jitter = match policy {
        JitterPolicy::Never => 0.0,
        JitterPolicy::Escalate => cholesky_with_jitter(&k)?.jitter,
    };
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    Ok(GramMatrix { entries: k, jitter })
}

/// Solve `(K + μI) α = z` by Cholesky.
pub fn ridge_solve(gram: &GramMatrix, z: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(KblError::InvalidArgument(format!("ridge parameter must be positive, got {mu}")));
    }
    if z.len() != gram.size() {
        return Err(KblError::Dimension(format!(
            "targets have length {}, Gram is {}x{}",
            z.len(),
            gram.size(),
            gram.size()
        )));
    }
    let mut a = gram.entries.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += mu;
    }
    let ch = cholesky_with_jitter(&a)?;
    Ok(ch.solve(z))
}

/// A fitted kernel ridge regressor `f̂(x) = Σ_n α_n k(x_n, x)`.
#[derive(Clone, Debug)]
pub struct RidgeModel {
    pub spec: KernelSpec,
    pub anchors: Vec<Point>,
    pub alpha: DVector<f64>,
    pub mu: f64,
}

impl RidgeModel {
    /// Build the Gram matrix of `anchors` and solve for the coefficients.
    pub fn fit(spec: KernelSpec, anchors: Vec<Point>, z: &DVector<f64>, mu: f64) -> Result<Self> {
        let k = gram(&spec, &anchors, JitterPolicy::Never)?;
        ridge_fit(&k, spec, anchors, z, mu)
    }

    pub fn predict(&self, x: &Point) -> Result<f64> {
        ridge_predict(self, x)
    }
}

/// Ridge fit on a precomputed Gram matrix of `anchors` under `spec`.
pub fn ridge_fit(
    gram: &GramMatrix,
    spec: KernelSpec,
    anchors: Vec<Point>,
    z: &DVector<f64>,
    mu: f64,
) -> Result<RidgeModel> {
    if anchors.len() != gram.size() {
        return Err(KblError::Dimension("anchor count differs from Gram size".into()));
    }
    let alpha = ridge_solve(gram, z, mu)?;
    Ok(RidgeModel { spec, anchors, alpha, mu })
}

pub fn ridge_predict(model: &RidgeModel, x: &Point) -> Result<f64> {
    let mut acc = 0.0;
    for (a, xn) in model.alpha.iter().zip(&model.anchors) {
        acc += a * model.spec.eval_slices(xn.coords(), x.coords())?;
    }
    Ok(acc)
}

/// Kriging / LMMSE estimate `zᵀ (R + σ²I)⁻¹ r` from the covariance `R` of the
/// observations and the cross-covariance `r` with the target.
pub fn lmmse_predict(
    cov: &DMatrix<f64>,
    cross: &DVector<f64>,
    z: &DVector<f64>,
    noise_var: f64,
) -> Result<f64> {
    let n = cov.nrows();
    if cov.ncols() != n || cross.len() != n || z.len() != n {
        return Err(KblError::Dimension("LMMSE operands disagree in size".into()));
    }
    let mut a = cov.clone();
    for i in 0..n {
        a[(i, i)] += noise_var;
    }
    let ch = cholesky_with_jitter(&a)?;
    Ok(z.dot(&ch.solve(cross)))
}

/// [`lmmse_predict`] for several targets sharing one observation set:
/// `cross` holds one cross-covariance column per target.
pub fn lmmse_predict_many(
    cov: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    z: &DVector<f64>,
    noise_var: f64,
) -> Result<DVector<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n || cross.nrows() != n || z.len() != n {
        return Err(KblError::Dimension("LMMSE operands disagree in size".into()));
    }
    let mut a = cov.clone();
    for i in 0..n {
        a[(i, i)] += noise_var;
    }
    let weights = cholesky_with_jitter(&a)?.solve(z);
    Ok(cross.transpose() * weights)
}

/// Squared RKHS norm `αᵀKα` of `Σ_n α_n k(x_n, ·)`.
pub fn rkhs_norm_sq(gram: &GramMatrix, alpha: &DVector<f64>) -> Result<f64> {
    if alpha.len() != gram.size() {
        return Err(KblError::Dimension("coefficient length differs from Gram size".into()));
    }
    Ok(alpha.dot(&(&gram.entries * alpha)).max(0.0))
}
