//! Completion of a matrix with whole missing rows: KMC with covariance
//! priors against nuclear-norm regularization.

use nalgebra::DMatrix;

use crate::completion::{kmc_fit, svt_oracle_from, CompletionResult, KmcOptions, MaskedMatrix, PriorPair};
use crate::error::Result;
use crate::expharness::config::{CompletionExperimentConfig, CovarianceSource};
use crate::expharness::generators::{gen_prior_model, PriorModelData};
use crate::expharness::metrics::{metric_recovery_db, ErrorRatio};
use crate::expharness::report::ExperimentReport;
use crate::expharness::Output;
use crate::linalg::logspace;

const SVT_TOL: f64 = 1e-9;
const SVT_MAX_ITERS: usize = 20_000;

/// Row and column priors as configured.
pub fn build_priors(cfg: &CompletionExperimentConfig, data: &PriorModelData) -> Result<PriorPair> {
    let (r_c, r_b) = match cfg.covariance {
        CovarianceSource::Sample => {
            // E[ZZᵀ] from the side replicates and E[ZᵀZ] from the auxiliary
            // rows, noise term neglected.
            let mut r_c = DMatrix::zeros(cfg.m, cfg.m);
            for z in &data.replicates {
                r_c += z * z.transpose();
            }
            r_c /= (data.replicates.len() * cfg.n) as f64;
            let r_b = data.aux_rows.transpose() * &data.aux_rows / data.aux_rows.nrows() as f64;
            (r_c, r_b)
        }
        CovarianceSource::Structural => (data.r_c.clone(), data.r_b.clone()),
        CovarianceSource::Identity => (DMatrix::identity(cfg.m, cfg.m), DMatrix::identity(cfg.n, cfg.n)),
    };
    PriorPair::new(crate::linalg::symmetrize(&r_c), crate::linalg::symmetrize(&r_b), 1.0)
}

/// Entries the errors are measured on: the hidden ones, or every entry when
/// nothing is hidden.
fn evaluation_sets(data: &PriorModelData) -> (DMatrix<f64>, DMatrix<f64>, bool) {
    let missing = data.mask.map(|w| 1.0 - w);
    let all_observed = missing.iter().all(|&v| v == 0.0);
    let missing = if all_observed { DMatrix::from_element(data.mask.nrows(), data.mask.ncols(), 1.0) } else { missing };
    let mut rows = DMatrix::zeros(data.mask.nrows(), data.mask.ncols());
    for &r in &data.missing_rows {
        rows.row_mut(r).fill(1.0);
    }
    (missing, rows, all_observed)
}

#[derive(Clone, Debug)]
pub struct CurvePoint {
    pub mu: f64,
    pub missing_db: ErrorRatio,
    pub rows_db: Option<ErrorRatio>,
}

#[derive(Clone, Debug)]
pub struct CompletionRun {
    pub data: PriorModelData,
    pub kmc_curve: Vec<CurvePoint>,
    pub svt_curve: Vec<CurvePoint>,
    pub kmc_best: usize,
    pub svt_best: usize,
    pub kmc_fit: CompletionResult,
    pub svt_zhat: DMatrix<f64>,
    /// Grid points whose KMC fit hit the sweep limit.
    pub unconverged: usize,
    pub evaluated_on_all_entries: bool,
}

fn best_index(curve: &[CurvePoint]) -> usize {
    curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.missing_db.value().total_cmp(&b.1.missing_db.value()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

pub fn fit_completion(cfg: &CompletionExperimentConfig) -> Result<CompletionRun> {
    let data = gen_prior_model(cfg)?;
    let priors = build_priors(cfg, &data)?;
    let masked = MaskedMatrix::new(data.z.clone(), data.mask.clone())?;
    let (missing, rows, all_observed) = evaluation_sets(&data);
    let rows_db = |zhat: &DMatrix<f64>| -> Result<Option<ErrorRatio>> {
        if data.missing_rows.is_empty() {
            Ok(None)
        } else {
            metric_recovery_db(zhat, &data.z, &rows).map(Some)
        }
    };

    let observed = masked.observed_count().max(1) as f64;
    let power = masked.values().norm_squared() / observed;
    let mu_grid = logspace(1e-4 * power, 1e2 * power, cfg.mu_points);
    let opts = KmcOptions { rel_eps: cfg.rel_tol, max_sweeps: cfg.max_sweeps, ..KmcOptions::new(cfg.budget, cfg.seed) };
    let mut kmc_curve = Vec::with_capacity(mu_grid.len());
    let mut fits = Vec::with_capacity(mu_grid.len());
    for &mu in &mu_grid {
        let fit = kmc_fit(&masked, &priors.with_sigma2(mu)?, &opts)?;
        kmc_curve.push(CurvePoint { mu, missing_db: metric_recovery_db(&fit.zhat, &data.z, &missing)?, rows_db: rows_db(&fit.zhat)? });
        fits.push(fit);
    }
    let unconverged = fits.iter().filter(|f| !f.converged).count();
    let kmc_best = best_index(&kmc_curve);

    let smax = masked.values().clone().svd(false, false).singular_values.max().max(f64::MIN_POSITIVE);
    let svt_grid = logspace(1e-4 * smax, smax, cfg.mu_points);
    let mut svt_curve = Vec::with_capacity(svt_grid.len());
    let mut svt_fits = Vec::with_capacity(svt_grid.len());
    let mut warm: Option<DMatrix<f64>> = None;
    // Largest μ first so each solve starts from the previous one.
    for &mu in svt_grid.iter().rev() {
        let res = svt_oracle_from(&masked, mu, SVT_TOL, SVT_MAX_ITERS, warm.as_ref())?;
        svt_curve.push(CurvePoint { mu, missing_db: metric_recovery_db(&res.zhat, &data.z, &missing)?, rows_db: rows_db(&res.zhat)? });
        warm = Some(res.zhat.clone());
        svt_fits.push(res.zhat);
    }
    svt_curve.reverse();
    svt_fits.reverse();
    let svt_best = best_index(&svt_curve);

    Ok(CompletionRun {
        kmc_fit: fits.swap_remove(kmc_best),
        svt_zhat: svt_fits.swap_remove(svt_best),
        data,
        kmc_curve,
        svt_curve,
        kmc_best,
        svt_best,
        unconverged,
        evaluated_on_all_entries: all_observed,
    })
}

fn put_ratio(report: &mut ExperimentReport, name: &str, r: ErrorRatio) -> Result<()> {
    report.flag(&format!("{name}_degenerate"), r.is_degenerate());
    report.metric(name, r.value())
}

pub fn run_completion_experiment(cfg: &CompletionExperimentConfig, out: Option<&Output>) -> Result<ExperimentReport> {
    let started = std::time::Instant::now();
    let run = fit_completion(cfg)?;
    let mut report = ExperimentReport::new("completion", cfg.seed, cfg)?;
    let k = &run.kmc_curve[run.kmc_best];
    let s = &run.svt_curve[run.svt_best];
    report.metric("kmc_best_mu", k.mu)?;
    put_ratio(&mut report, "kmc_best_db", k.missing_db)?;
    report.metric("svt_best_mu", s.mu)?;
    put_ratio(&mut report, "svt_best_db", s.missing_db)?;
    if let (Some(kr), Some(sr)) = (k.rows_db, s.rows_db) {
        put_ratio(&mut report, "kmc_rows_db", kr)?;
        put_ratio(&mut report, "svt_rows_db", sr)?;
    }
    report.metric("kmc_sweeps", run.kmc_fit.sweeps as f64)?;
    report.flag("converged", run.kmc_fit.converged);
    report.metric("unconverged_grid_points", run.unconverged as f64)?;
    report.flag("evaluated_on_all_entries", run.evaluated_on_all_entries);

    if let Some(out) = out {
        report.artifacts.push(out.matrix("zhat", &run.kmc_fit.zhat)?);
        report.artifacts.push(out.matrix("svt_zhat", &run.svt_zhat)?);
        report.artifacts.push(out.matrix("truth", &run.data.z)?);
        report.artifacts.push(out.matrix("mask", &run.data.mask)?);
        let rows: Vec<Vec<f64>> = run
            .kmc_curve
            .iter()
            .zip(&run.svt_curve)
            .map(|(a, b)| vec![a.mu, a.missing_db.value(), b.mu, b.missing_db.value()])
            .collect();
        report.artifacts.push(out.table("error_curves", &["kmc_mu", "kmc_db", "svt_mu", "svt_db"], &rows)?);
        let trace: Vec<Vec<f64>> =
            run.kmc_fit.cost_trace.iter().enumerate().map(|(i, c)| vec![i as f64, *c]).collect();
        report.artifacts.push(out.table("cost_trace", &["sweep", "cost"], &trace)?);
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}
