//! Spectrum cartography: NBP with Hann bases over frequency and two
//! Gaussian kernels over space.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::additive::{AdditiveModel, Reduction};
use crate::error::Result;
use crate::expharness::config::CartographyConfig;
use crate::expharness::generators::{gen_rf_field, RfField};
use crate::expharness::metrics::pearson;
use crate::expharness::report::ExperimentReport;
use crate::expharness::Output;
use crate::grouplasso::BcdOptions;
use crate::kernels::Point;
use crate::linalg::logspace;

/// One grid point of the μ sweep.
#[derive(Clone, Debug)]
pub struct PathPoint {
    pub mu: f64,
    /// Occupied bands, 1-based.
    pub support: BTreeSet<usize>,
    /// Truth-map correlation for each source band, in config order.
    pub correlations: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct CartographyRun {
    pub field: RfField,
    pub path: Vec<PathPoint>,
    /// Index into `path` of the reported fit.
    pub best: usize,
    pub models: Vec<AdditiveModel>,
}

fn active_bands(cfg: &CartographyConfig) -> BTreeSet<usize> {
    cfg.sources.iter().map(|s| s.band).collect()
}

/// Estimated per-kernel component maps of `band` (1-based) on the grid.
pub fn component_maps(model: &AdditiveModel, field: &RfField, side: usize, band: usize) -> Result<Vec<DMatrix<f64>>> {
    let points: Vec<Point> = field.grid.iter().map(|p| Point::new(p.to_vec())).collect::<Result<_>>()?;
    let mut maps = Vec::new();
    for (i, c) in model.components.iter().enumerate() {
        if c.basis != Some(band - 1) {
            continue;
        }
        let mut m = DMatrix::zeros(side, side);
        for (g, p) in points.iter().enumerate() {
            m[(g / side, g % side)] = model.component_value(i, p)?;
        }
        maps.push(m);
    }
    Ok(maps)
}

pub fn band_map(model: &AdditiveModel, field: &RfField, side: usize, band: usize) -> Result<DMatrix<f64>> {
    let maps = component_maps(model, field, side, band)?;
    Ok(maps.into_iter().fold(DMatrix::zeros(side, side), |acc, m| acc + m))
}

/// Fits the NBP path and picks the reported μ: among grid points whose
/// support equals the source bands, the one with the highest worst-band
/// correlation; otherwise the best worst-band correlation overall.
pub fn fit_cartography(cfg: &CartographyConfig) -> Result<CartographyRun> {
    let field = gen_rf_field(cfg)?;
    let kernels = cfg.kernels()?;
    let red = Reduction::nbp(&field.data, &field.bases, &kernels)?;
    let top = red.mu_max();
    let grid = logspace(cfg.mu_min_rel * top, top, cfg.mu_points);
    let opts = BcdOptions { certificate_tol: cfg.certificate_tol, max_sweeps: cfg.max_sweeps, ..BcdOptions::default() };
    let models = red.fit_path(&grid, &opts)?;
    let active = active_bands(cfg);
    let side = cfg.grid_side;
    let mut path = Vec::with_capacity(models.len());
    for (model, &mu) in models.iter().zip(&grid) {
        let support: BTreeSet<usize> = model.basis_support(0.0).into_iter().map(|b| b + 1).collect();
        let correlations = active
            .iter()
            .map(|&b| {
                let est = band_map(model, &field, side, b)?;
                Ok(pearson(est.as_slice(), field.truth[b - 1].as_slice()))
            })
            .collect::<Result<Vec<f64>>>()?;
        path.push(PathPoint { mu, support, correlations, converged: model.converged() });
    }
    let worst = |p: &PathPoint| p.correlations.iter().copied().fold(f64::INFINITY, f64::min);
    let pick = |exact_only: bool| {
        path.iter()
            .enumerate()
            .filter(|(_, p)| !exact_only || p.support == active)
            .max_by(|a, b| worst(a.1).total_cmp(&worst(b.1)))
            .map(|(i, _)| i)
    };
    let best = pick(true).or_else(|| pick(false)).unwrap_or(0);
    Ok(CartographyRun { field, path, best, models })
}

pub fn run_cartography(cfg: &CartographyConfig, out: Option<&Output>) -> Result<ExperimentReport> {
    let started = std::time::Instant::now();
    let run = fit_cartography(cfg)?;
    let active = active_bands(cfg);
    let mut report = ExperimentReport::new("cartography", cfg.seed, cfg)?;
    let best = &run.path[run.best];
    report.flag("support_exact_found", run.path.iter().any(|p| p.support == active));
    report.flag("converged", run.path.iter().all(|p| p.converged));
    report.metric("best_mu", best.mu)?;
    report.metric("best_support_size", best.support.len() as f64)?;
    for (&b, &c) in active.iter().zip(&best.correlations) {
        report.metric(&format!("corr_band_{b}"), c)?;
    }
    report.metric("min_active_corr", best.correlations.iter().copied().fold(f64::INFINITY, f64::min).min(1.0))?;
    let energy: Vec<f64> = run.field.truth.iter().map(|m| m.norm_squared()).collect();
    let total: f64 = energy.iter().sum();
    let in_active: f64 = active.iter().map(|&b| energy[b - 1]).sum();
    report.metric("truth_energy_in_active_bands", if total > 0.0 { in_active / total } else { 0.0 })?;

    if let Some(out) = out {
        let side = cfg.grid_side;
        let model = &run.models[run.best];
        let bands: BTreeSet<usize> = active.union(&best.support).copied().collect();
        for &b in &bands {
            report.artifacts.push(out.matrix(&format!("truth_band{b}"), &run.field.truth[b - 1])?);
            let comps = component_maps(model, &run.field, side, b)?;
            let total = comps.iter().fold(DMatrix::zeros(side, side), |acc, m| acc + m);
            report.artifacts.push(out.matrix(&format!("estimate_band{b}"), &total)?);
            for (r, m) in comps.iter().enumerate() {
                report.artifacts.push(out.matrix(&format!("component_band{b}_kernel{}", r + 1), m)?);
            }
        }
        let mut header = vec!["mu".to_string(), "support_size".to_string()];
        header.extend((1..=cfg.bands).map(|b| format!("band{b}")));
        let rows: Vec<Vec<f64>> = run
            .path
            .iter()
            .map(|p| {
                let mut row = vec![p.mu, p.support.len() as f64];
                row.extend((1..=cfg.bands).map(|b| if p.support.contains(&b) { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        report.artifacts.push(out.table("support_path", &header_ref, &rows)?);
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}
