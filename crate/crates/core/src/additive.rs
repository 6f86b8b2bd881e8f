//! Sparse additive models fitted through the weighted group Lasso.
//!
//! * SpAM: one kernel per input coordinate, `f̂(x) = Σ_i ĉ_i(x_i)`.
//! * MKL: a dictionary of kernels over the full input, each a block.
//! * NBP: bilinear `f̂(x, y) = Σ_i c_i(x) b_i(y)` with prescribed bases `b_i`
//!   and one block per (basis, kernel) pair.
//!
//! Every variant reduces to a [`BlockProblem`]; the fitted model keeps that
//! problem so objective values can be recomputed from the model alone.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{KblError, Result};
use crate::grouplasso::{solve_bcd_with, BcdOptions, Block, BlockProblem, BlockSolution};
use crate::kernels::{cross_gram, gram, JitterPolicy, KernelSpec, Point};
use crate::linalg::logspace;

#[derive(Clone, Debug)]
pub struct TrainingSet {
    inputs: Vec<Point>,
    /// Second argument `y_n` of bilinear models.
    side: Option<Vec<f64>>,
    z: DVector<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Point>, z: DVector<f64>) -> Result<Self> {
        Self::build(inputs, None, z)
    }

    pub fn with_side(inputs: Vec<Point>, side: Vec<f64>, z: DVector<f64>) -> Result<Self> {
        Self::build(inputs, Some(side), z)
    }

    fn build(inputs: Vec<Point>, side: Option<Vec<f64>>, z: DVector<f64>) -> Result<Self> {
        if inputs.len() != z.len() {
            return Err(KblError::Dimension(format!(
                "{} inputs but {} targets",
                inputs.len(),
                z.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|p| p.dim() != first.dim()) {
                return Err(KblError::Dimension("inputs have mixed dimensions".into()));
            }
        }
        if let Some(y) = &side {
            if y.len() != z.len() {
                return Err(KblError::Dimension("side values and targets differ in length".into()));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(KblError::InvalidArgument("side values must be finite".into()));
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(KblError::InvalidArgument("targets must be finite".into()));
        }
        Ok(TrainingSet { inputs, side, z })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn inputs(&self) -> &[Point] {
        &self.inputs
    }

    pub fn side(&self) -> Option<&[f64]> {
        self.side.as_deref()
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Point::dim)
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            side: self.side.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
            z: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.z[i])),
        }
    }
}

/// Scalar function of the side variable.
#[derive(Clone)]
pub enum BasisFn {
    /// Raised-cosine pulse `0.5(1 + cos(2π(y − center)/width))` on
    /// `|y − center| < width/2`, zero elsewhere.
    Hann { center: f64, width: f64 },
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for BasisFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFn::Hann { center, width } => write!(f, "Hann({center}, {width})"),
            BasisFn::Constant(c) => write!(f, "Constant({c})"),
            BasisFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl BasisFn {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            BasisFn::Hann { center, width } => {
                let t = y - center;
                if t.abs() < 0.5 * width {
                    0.5 * (1.0 + (2.0 * std::f64::consts::PI * t / width).cos())
                } else {
                    0.0
                }
            }
            BasisFn::Constant(c) => *c,
            BasisFn::Custom(f) => f(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Basis {
    pub name: String,
    pub func: BasisFn,
}

#[derive(Clone, Debug, Default)]
pub struct BasisSet {
    bases: Vec<Basis>,
}

impl BasisSet {
    pub fn new(bases: Vec<Basis>) -> Self {
        BasisSet { bases }
    }

    pub fn constant() -> Self {
        BasisSet::new(vec![Basis { name: "one".into(), func: BasisFn::Constant(1.0) }])
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Basis> {
        self.bases.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Basis> {
        self.bases.iter()
    }

    pub fn eval(&self, i: usize, y: f64) -> f64 {
        self.bases[i].func.eval(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Spam,
    Mkl,
    Nbp,
}

/// What one block of the group-Lasso problem represents.
#[derive(Clone, Debug)]
pub struct Component {
    pub kernel: KernelSpec,
    pub kernel_index: usize,
    /// Kernel centers. For SpAM these are one-dimensional.
    pub anchors: Vec<Point>,
    /// Input coordinate the component acts on (SpAM).
    pub coordinate: Option<usize>,
    /// Basis multiplying the component (NBP).
    pub basis: Option<usize>,
}

/// A model reduced to group-Lasso form, ready to be solved at any `μ`.
#[derive(Clone, Debug)]
pub struct Reduction {
    kind: ModelKind,
    problem: BlockProblem,
    components: Vec<Component>,
    bases: Option<BasisSet>,
}

impl Reduction {
    pub fn spam(data: &TrainingSet, coord_kernels: &[KernelSpec]) -> Result<Self> {
        let d = data.input_dim();
        if coord_kernels.len() != d {
            return Err(KblError::InvalidArgument(format!(
                "SpAM needs one kernel per coordinate: {} kernels for {d} coordinates",
                coord_kernels.len()
            )));
        }
        if data.len() < 2 {
            return Err(KblError::InvalidArgument("SpAM needs at least two samples".into()));
        }
        let mut blocks = Vec::with_capacity(d);
        let mut components = Vec::with_capacity(d);
        for (i, spec) in coord_kernels.iter().enumerate() {
            let coords = data.inputs.iter().map(|p| p.coordinate(i)).collect::<Result<Vec<_>>>()?;
            let k = gram(spec, &coords, JitterPolicy::Never)?.entries;
            blocks.push(Block::new(k.clone(), k));
            components.push(Component {
                kernel: spec.clone(),
                kernel_index: i,
                anchors: coords,
                coordinate: Some(i),
                basis: None,
            });
        }
        Ok(Reduction {
            kind: ModelKind::Spam,
            problem: BlockProblem::new(data.z.clone(), blocks, 0.0)?,
            components,
            bases: None,
        })
    }

    pub fn mkl(data: &TrainingSet, kernel_dict: &[KernelSpec]) -> Result<Self> {
        if kernel_dict.is_empty() {
            return Err(KblError::InvalidArgument("empty kernel dictionary".into()));
        }
        let mut blocks = Vec::with_capacity(kernel_dict.len());
        let mut components = Vec::with_capacity(kernel_dict.len());
        for (r, spec) in kernel_dict.iter().enumerate() {
            let k = gram(spec, &data.inputs, JitterPolicy::Never)?.entries;
            blocks.push(Block::new(k.clone(), k));
            components.push(Component {
                kernel: spec.clone(),
                kernel_index: r,
                anchors: data.inputs.clone(),
                coordinate: None,
                basis: None,
            });
        }
        Ok(Reduction {
            kind: ModelKind::Mkl,
            problem: BlockProblem::new(data.z.clone(), blocks, 0.0)?,
            components,
            bases: None,
        })
    }

    /// One block per (basis, kernel) pair with design `Diag[b_i(y)]·K_r` and
    /// penalty `K_r`.
    ///
    /// Repeated inputs `x_n` share one kernel center: a function
    /// `Σ_n γ_n k(x_n, ·)` only depends on the summed coefficient of each
    /// distinct center, so the blocks are built over the distinct inputs.
    pub fn nbp(data: &TrainingSet, bases: &BasisSet, kernels: &[KernelSpec]) -> Result<Self> {
        let ys = data
            .side()
            .ok_or_else(|| KblError::MissingInput("NBP training set needs side values y_n".into()))?;
        if kernels.is_empty() {
            return Err(KblError::InvalidArgument("NBP needs at least one kernel".into()));
        }
        if bases.is_empty() {
            return Err(KblError::InvalidArgument("NBP needs at least one basis".into()));
        }
        let anchors = distinct_points(&data.inputs);
        let mut blocks = Vec::new();
        let mut components = Vec::new();
        let grams = kernels
            .iter()
            .map(|spec| {
                let full = cross_gram(spec, &data.inputs, &anchors)?;
                let pen = gram(spec, &anchors, JitterPolicy::Never)?.entries;
                Ok((full, pen))
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, basis) in bases.iter().enumerate() {
            let b: Vec<f64> = ys.iter().map(|&y| basis.func.eval(y)).collect();
            if b.iter().any(|v| !v.is_finite()) {
                return Err(KblError::Numerical(format!("basis {} is not finite on the data", basis.name)));
            }
            if b.iter().all(|&v| v == 0.0) {
                warn!("basis {} ({i}) vanishes on every training y; block dropped", basis.name);
                continue;
            }
            for (r, (full, pen)) in grams.iter().enumerate() {
                let mut design = full.clone();
                for (n, bn) in b.iter().enumerate() {
                    design.row_mut(n).scale_mut(*bn);
                }
                blocks.push(Block::new(design, pen.clone()));
                components.push(Component {
                    kernel: kernels[r].clone(),
                    kernel_index: r,
                    anchors: anchors.clone(),
                    coordinate: None,
                    basis: Some(i),
                });
            }
        }
        if blocks.is_empty() {
            return Err(KblError::InvalidArgument("every basis vanishes on the training data".into()));
        }
        Ok(Reduction {
            kind: ModelKind::Nbp,
            problem: BlockProblem::new(data.z.clone(), blocks, 0.0)?,
            components,
            bases: Some(bases.clone()),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn problem(&self) -> &BlockProblem {
        &self.problem
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Smallest `μ` whose solution is identically zero.
    pub fn mu_max(&self) -> f64 {
        self.problem.mu_max()
    }

    pub fn fit(&self, mu: f64, opts: &BcdOptions, warm: Option<&[DVector<f64>]>) -> Result<AdditiveModel> {
        let problem = self.problem.with_mu(mu)?;
        let solution = solve_bcd_with(&problem, warm, opts)?;
        Ok(AdditiveModel {
            kind: self.kind,
            components: self.components.clone(),
            bases: self.bases.clone(),
            mu,
            problem,
            solution,
        })
    }

    /// Fits along `grid`, largest `μ` first, warm-starting each fit from the
    /// previous one. Results come back in the order of `grid`.
    pub fn fit_path(&self, grid: &[f64], opts: &BcdOptions) -> Result<Vec<AdditiveModel>> {
        let mut order: Vec<usize> = (0..grid.len()).collect();
        order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
        let mut out: Vec<Option<AdditiveModel>> = vec![None; grid.len()];
        let mut warm: Option<Vec<DVector<f64>>> = None;
        for i in order {
            let model = self.fit(grid[i], opts, warm.as_deref())?;
            debug!(
                "mu {:.3e}: {} sweeps, support {:?}, converged {}",
                grid[i],
                model.solution.iterations,
                model.solution.support,
                model.solution.converged
            );
            warm = Some(model.solution.gammas.clone());
            out[i] = Some(model);
        }
        Ok(out.into_iter().map(|m| m.expect("every grid point fitted")).collect())
    }
}

fn distinct_points(points: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for p in points {
        if !out.iter().any(|q| q == p) {
            out.push(p.clone());
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct AdditiveModel {
    pub kind: ModelKind,
    pub components: Vec<Component>,
    pub bases: Option<BasisSet>,
    pub mu: f64,
    pub problem: BlockProblem,
    pub solution: BlockSolution,
}

impl AdditiveModel {
    pub fn gammas(&self) -> &[DVector<f64>] {
        &self.solution.gammas
    }

    pub fn objective(&self) -> f64 {
        self.solution.objective
    }

    pub fn converged(&self) -> bool {
        self.solution.converged
    }

    /// Objective recomputed from the coefficients.
    pub fn recompute_objective(&self) -> f64 {
        self.problem.objective(&self.solution.gammas)
    }

    pub fn fitted(&self) -> DVector<f64> {
        self.problem.fitted(&self.solution.gammas)
    }

    /// Value of component `i` (without its basis factor) at `x`.
    pub fn component_value(&self, i: usize, x: &Point) -> Result<f64> {
        let c = &self.components[i];
        let g = &self.solution.gammas[i];
        if g.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let arg = match c.coordinate {
            Some(j) => x.coordinate(j)?,
            None => x.clone(),
        };
        let mut acc = 0.0;
        for (gn, a) in g.iter().zip(&c.anchors) {
            if *gn != 0.0 {
                acc += gn * c.kernel.eval_slices(a.coords(), arg.coords())?;
            }
        }
        Ok(acc)
    }

    pub fn predict(&self, x: &Point, y: Option<f64>) -> Result<f64> {
        predict(self, x, y)
    }

    /// Indices of blocks with `‖γ_i‖ > tol`.
    pub fn support(&self, tol: f64) -> BTreeSet<usize> {
        self.solution
            .gammas
            .iter()
            .enumerate()
            .filter(|(_, g)| if tol == 0.0 { g.iter().any(|&v| v != 0.0) } else { g.norm() > tol })
            .map(|(i, _)| i)
            .collect()
    }

    /// Bases with at least one active block (NBP).
    pub fn basis_support(&self, tol: f64) -> BTreeSet<usize> {
        self.support(tol).into_iter().filter_map(|i| self.components[i].basis).collect()
    }
}

/// Evaluate the fitted kernel (and basis) expansion.
pub fn predict(model: &AdditiveModel, x: &Point, y: Option<f64>) -> Result<f64> {
    if model.kind == ModelKind::Nbp && y.is_none() {
        return Err(KblError::MissingInput("NBP prediction needs the side value y".into()));
    }
    let mut acc = 0.0;
    for (i, c) in model.components.iter().enumerate() {
        let weight = match (c.basis, &model.bases, y) {
            (Some(b), Some(bases), Some(y)) => bases.eval(b, y),
            _ => 1.0,
        };
        if weight == 0.0 {
            continue;
        }
        acc += weight * model.component_value(i, x)?;
    }
    Ok(acc)
}

pub fn fit_spam(data: &TrainingSet, coord_kernels: &[KernelSpec], mu: f64) -> Result<AdditiveModel> {
    Reduction::spam(data, coord_kernels)?.fit(mu, &BcdOptions::default(), None)
}

pub fn fit_mkl(data: &TrainingSet, kernel_dict: &[KernelSpec], mu: f64) -> Result<AdditiveModel> {
    if kernel_dict.len() < 2 {
        return Err(KblError::InvalidArgument("MKL needs at least two candidate kernels".into()));
    }
    Reduction::mkl(data, kernel_dict)?.fit(mu, &BcdOptions::default(), None)
}

pub fn fit_nbp(
    data: &TrainingSet,
    bases: &BasisSet,
    kernels: &[KernelSpec],
    mu: f64,
) -> Result<AdditiveModel> {
    Reduction::nbp(data, bases, kernels)?.fit(mu, &BcdOptions::default(), None)
}

pub const DEFAULT_GRID_POINTS: usize = 20;

/// Logarithmic grid of `DEFAULT_GRID_POINTS` values spanning
/// `[1e-4, 1e2] · scale`.
pub fn mu_grid(scale: f64) -> Vec<f64> {
    logspace(1e-4 * scale, 1e2 * scale, DEFAULT_GRID_POINTS)
}

/// K-fold prediction error of `fit` at every grid point.
///
/// Fold `f` holds out the samples with `n % folds == f`. Returns the mean
/// squared held-out error per grid value.
pub fn cross_validate<F>(data: &TrainingSet, folds: usize, grid: &[f64], fit: F) -> Result<Vec<f64>>
where
    F: Fn(&TrainingSet, f64) -> Result<AdditiveModel>,
{
    if folds < 2 || folds > data.len() {
        return Err(KblError::InvalidArgument(format!(
            "cannot split {} samples into {folds} folds",
            data.len()
        )));
    }
    let mut errors = vec![0.0; grid.len()];
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|n| n % folds == f);
        let train_set = data.subset(&train);
        for (g, &mu) in grid.iter().enumerate() {
            let model = fit(&train_set, mu)?;
            for &n in &test {
                let y = data.side.as_ref().map(|s| s[n]);
                let e = model.predict(&data.inputs[n], y)? - data.z[n];
                errors[g] += e * e;
            }
        }
    }
    for e in &mut errors {
        *e /= data.len() as f64;
    }
    Ok(errors)
}

/// Grid value with the smallest cross-validation error.
pub fn select_mu<F>(data: &TrainingSet, folds: usize, grid: &[f64], fit: F) -> Result<f64>
where
    F: Fn(&TrainingSet, f64) -> Result<AdditiveModel>,
{
    let errs = cross_validate(data, folds, grid, fit)?;
    let best = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| KblError::InvalidArgument("empty grid".into()))?;
    Ok(grid[best])
}
