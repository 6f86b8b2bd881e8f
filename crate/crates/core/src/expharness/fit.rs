//! `kbl fit` and `kbl sweep` on user-supplied CSV data.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::additive::{AdditiveModel, Basis, BasisFn, BasisSet, Reduction, TrainingSet};
use crate::completion::{kdl_fit, kmc_fit, CompletionResult, KmcOptions, MaskedMatrix, PriorPair};
use crate::error::{KblError, Result};
use crate::expharness::config::{FitConfig, FitModel};
use crate::expharness::io::{read_mask_csv, read_matrix_csv};
use crate::expharness::report::ExperimentReport;
use crate::expharness::Output;
use crate::grouplasso::BcdOptions;
use crate::kernels::Point;
use crate::linalg::logspace;

const SWEEP_POINTS: usize = 20;

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn required<'a>(field: &'a Option<String>, name: &str) -> Result<&'a str> {
    field.as_deref().ok_or_else(|| KblError::Config(format!("fit.{name} is required for this model")))
}

/// Splits a training table into inputs, optional side values and targets.
pub fn training_from_table(t: &DMatrix<f64>, side: bool) -> Result<TrainingSet> {
    let extra = 1 + usize::from(side);
    if t.ncols() <= extra {
        return Err(KblError::Config(format!(
            "training table has {} columns; need at least one input column plus {extra}",
            t.ncols()
        )));
    }
    let d = t.ncols() - extra;
    let inputs = (0..t.nrows())
        .map(|n| Point::new(t.row(n).iter().take(d).copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    let z = t.column(t.ncols() - 1).into_owned();
    if side {
        TrainingSet::with_side(inputs, t.column(d).iter().copied().collect(), z)
    } else {
        TrainingSet::new(inputs, z)
    }
}

fn reduction(cfg: &FitConfig, data: &TrainingSet) -> Result<Reduction> {
    match cfg.model {
        FitModel::Spam => {
            // One kernel given: use it on every coordinate.
            let kernels = if cfg.kernels.len() == 1 {
                vec![cfg.kernels[0].clone(); data.input_dim()]
            } else {
                cfg.kernels.clone()
            };
            Reduction::spam(data, &kernels)
        }
        FitModel::Mkl => Reduction::mkl(data, &cfg.kernels),
        FitModel::Nbp => {
            let bases = cfg
                .bases
                .iter()
                .enumerate()
                .map(|(i, h)| Basis {
                    name: format!("basis{}", i + 1),
                    func: BasisFn::Hann { center: h.center, width: h.width },
                })
                .collect();
            Reduction::nbp(data, &BasisSet::new(bases), &cfg.kernels)
        }
        FitModel::Kmc | FitModel::Kdl => unreachable!("completion models have no reduction"),
    }
}

fn completion_inputs(cfg: &FitConfig, base: &Path) -> Result<(MaskedMatrix, PriorPair)> {
    let values = read_matrix_csv(&resolve(base, required(&cfg.values, "values")?))?;
    let (m, n) = values.shape();
    let mask = match &cfg.mask {
        Some(p) => read_mask_csv(&resolve(base, p))?,
        None => DMatrix::from_element(m, n, 1.0),
    };
    let read_cov = |p: &Option<String>, size: usize| -> Result<DMatrix<f64>> {
        match p {
            Some(p) => read_matrix_csv(&resolve(base, p)),
            None => Ok(DMatrix::identity(size, size)),
        }
    };
    let priors = PriorPair::new(read_cov(&cfg.row_cov, m)?, read_cov(&cfg.col_cov, n)?, cfg.mu)?;
    Ok((MaskedMatrix::new(values, mask)?, priors))
}

fn kmc_options(cfg: &FitConfig) -> KmcOptions {
    KmcOptions { max_sweeps: cfg.max_sweeps, ..KmcOptions::new(cfg.rank, cfg.seed) }
}

fn additive_options(cfg: &FitConfig) -> BcdOptions {
    BcdOptions { max_sweeps: cfg.max_sweeps, ..BcdOptions::default() }
}

fn block_table(model: &AdditiveModel) -> Vec<Vec<f64>> {
    model
        .components
        .iter()
        .zip(model.gammas())
        .enumerate()
        .map(|(i, (c, g))| {
            vec![
                (i + 1) as f64,
                (c.kernel_index + 1) as f64,
                c.coordinate.map_or(0.0, |j| (j + 1) as f64),
                c.basis.map_or(0.0, |b| (b + 1) as f64),
                g.norm(),
            ]
        })
        .collect()
}

const BLOCK_HEADER: [&str; 5] = ["block", "kernel", "coordinate", "basis", "norm"];

fn write_completion(out: &Output, report: &mut ExperimentReport, fit: &CompletionResult) -> Result<()> {
    report.artifacts.push(out.matrix("zhat", &fit.zhat)?);
    report.artifacts.push(out.matrix("c", &fit.factors.c)?);
    report.artifacts.push(out.matrix("b", &fit.factors.b)?);
    Ok(())
}

/// Fits one model at `cfg.mu` (and `cfg.lambda` for KDL). Relative data
/// paths are resolved against `base`.
pub fn run_fit(cfg: &FitConfig, base: &Path, out: Option<&Output>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut report = ExperimentReport::new("fit", cfg.seed, cfg)?;
    report.metric("mu", cfg.mu)?;
    match cfg.model {
        FitModel::Spam | FitModel::Mkl | FitModel::Nbp => {
            let table = read_matrix_csv(&resolve(base, required(&cfg.training, "training")?))?;
            let data = training_from_table(&table, cfg.side)?;
            let red = reduction(cfg, &data)?;
            let model = red.fit(cfg.mu, &additive_options(cfg), None)?;
            report.metric("mu_max", red.mu_max())?;
            report.metric("objective", model.objective())?;
            report.metric("support_size", model.support(0.0).len() as f64)?;
            report.metric("sweeps", model.solution.iterations as f64)?;
            report.flag("converged", model.converged());
            if let Some(out) = out {
                let fitted = model.fitted();
                report.artifacts.push(out.matrix("fitted", &DMatrix::from_column_slice(fitted.len(), 1, fitted.as_slice()))?);
                report.artifacts.push(out.table("blocks", &BLOCK_HEADER, &block_table(&model))?);
            }
        }
        FitModel::Kmc | FitModel::Kdl => {
            let (data, priors) = completion_inputs(cfg, base)?;
            let fit = if cfg.model == FitModel::Kmc {
                kmc_fit(&data, &priors, &kmc_options(cfg))?
            } else {
                report.metric("lambda", cfg.lambda)?;
                kdl_fit(&data, &priors, cfg.lambda, &kmc_options(cfg))?
            };
            report.metric("cost", fit.cost())?;
            report.metric("sweeps", fit.sweeps as f64)?;
            report.metric("rb_scale", priors.rb_scale())?;
            report.flag("converged", fit.converged);
            if let Some(out) = out {
                write_completion(out, &mut report, &fit)?;
            }
        }
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

/// Fits along a grid: μ for the additive models and KMC, λ for KDL. An
/// empty `cfg.grid` selects 20 points scaled to the data.
pub fn run_sweep(cfg: &FitConfig, base: &Path, out: Option<&Output>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut report = ExperimentReport::new("sweep", cfg.seed, cfg)?;
    let (header, rows, all_converged): (Vec<&str>, Vec<Vec<f64>>, bool) = match cfg.model {
        FitModel::Spam | FitModel::Mkl | FitModel::Nbp => {
            let table = read_matrix_csv(&resolve(base, required(&cfg.training, "training")?))?;
            let data = training_from_table(&table, cfg.side)?;
            let red = reduction(cfg, &data)?;
            let grid = if cfg.grid.is_empty() {
                logspace(1e-3 * red.mu_max(), red.mu_max(), SWEEP_POINTS)
            } else {
                cfg.grid.clone()
            };
            report.metric("mu_max", red.mu_max())?;
            let models = red.fit_path(&grid, &additive_options(cfg))?;
            let rows = models
                .iter()
                .map(|m| vec![m.mu, m.objective(), m.support(0.0).len() as f64, f64::from(u8::from(m.converged()))])
                .collect();
            (vec!["mu", "objective", "support_size", "converged"], rows, models.iter().all(|m| m.converged()))
        }
        FitModel::Kmc => {
            let (data, priors) = completion_inputs(cfg, base)?;
            let grid = if cfg.grid.is_empty() {
                let power = data.values().norm_squared() / data.observed_count().max(1) as f64;
                let power = if power > 0.0 { power } else { 1.0 };
                logspace(1e-4 * power, 1e2 * power, SWEEP_POINTS)
            } else {
                cfg.grid.clone()
            };
            let opts = kmc_options(cfg);
            let mut rows = Vec::with_capacity(grid.len());
            let mut ok = true;
            for &mu in &grid {
                let fit = kmc_fit(&data, &priors.with_sigma2(mu)?, &opts)?;
                ok &= fit.converged;
                rows.push(vec![mu, fit.cost(), fit.sweeps as f64, f64::from(u8::from(fit.converged))]);
            }
            (vec!["mu", "cost", "sweeps", "converged"], rows, ok)
        }
        FitModel::Kdl => {
            let (data, priors) = completion_inputs(cfg, base)?;
            let grid = if cfg.grid.is_empty() {
                let scale = data.values().component_mul(data.mask()).norm();
                let scale = if scale > 0.0 { scale } else { 1.0 };
                logspace(1e-4 * scale, scale, SWEEP_POINTS)
            } else {
                cfg.grid.clone()
            };
            let opts = kmc_options(cfg);
            let mut rows = Vec::with_capacity(grid.len());
            let mut ok = true;
            for &lambda in &grid {
                let fit = kdl_fit(&data, &priors, lambda, &opts)?;
                ok &= fit.converged;
                let nnz = fit.factors.c.iter().filter(|&&v| v != 0.0).count();
                rows.push(vec![lambda, fit.cost(), nnz as f64, f64::from(u8::from(fit.converged))]);
            }
            (vec!["lambda", "cost", "nonzeros_c", "converged"], rows, ok)
        }
    };
    report.metric("grid_points", rows.len() as f64)?;
    report.flag("converged", all_converged);
    if let Some(out) = out {
        report.artifacts.push(out.table("path", &header, &rows)?);
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

/// `[x…, z]` rows for a training table, inputs first.
pub fn training_table(inputs: &[Vec<f64>], side: Option<&[f64]>, z: &DVector<f64>) -> DMatrix<f64> {
    let d = inputs.first().map_or(0, Vec::len);
    let cols = d + usize::from(side.is_some()) + 1;
    DMatrix::from_fn(inputs.len(), cols, |n, j| {
        if j < d {
            inputs[n][j]
        } else if j == cols - 1 {
            z[n]
        } else {
            side.expect("side column present")[n]
        }
    })
}
