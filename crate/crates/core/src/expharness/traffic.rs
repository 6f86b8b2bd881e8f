//! Link-load prediction over a backbone network: KMC with a temporal row
//! prior and a routing-based column prior, against per-link LMMSE.

use nalgebra::{DMatrix, DVector};

use crate::completion::{kmc_fit, CompletionResult, KmcOptions, MaskedMatrix, PriorPair};
use crate::error::Result;
use crate::expharness::config::TrafficExperimentConfig;
use crate::expharness::generators::{abilene, gen_traffic, Network, TrafficData};
use crate::expharness::metrics::{relative_error, ErrorRatio};
use crate::expharness::report::ExperimentReport;
use crate::expharness::Output;
use crate::kernels::lmmse_predict_many;
use crate::linalg::symmetrize;

/// Observed-slot mask: every link during the first half of the day.
pub fn first_half_mask(slots: usize, links: usize) -> DMatrix<f64> {
    DMatrix::from_fn(slots, links, |t, _| if t < slots / 2 { 1.0 } else { 0.0 })
}

/// Temporal second moment averaged over days and links.
pub fn temporal_covariance(training: &[DMatrix<f64>]) -> DMatrix<f64> {
    let t = training[0].nrows();
    let links = training[0].ncols();
    let mut r = DMatrix::zeros(t, t);
    for z in training {
        r += z * z.transpose();
    }
    symmetrize(&(r / (training.len() * links) as f64))
}

/// `R·Rᵀ`: link covariance under i.i.d. unit-variance flows. The trace
/// matching inside [`PriorPair`] sets the flow variance.
pub fn routing_covariance(network: &Network) -> DMatrix<f64> {
    &network.routing * network.routing.transpose()
}

/// Each link predicted from its own first half, with a covariance estimated
/// from that link's training days only.
pub fn per_link_lmmse(training: &[DMatrix<f64>], test: &DMatrix<f64>, noise_var: f64) -> Result<DMatrix<f64>> {
    let (slots, links) = test.shape();
    let half = slots / 2;
    let mut out = test.clone();
    for l in 0..links {
        let mut cov = DMatrix::zeros(slots, slots);
        for z in training {
            let col = z.column(l);
            cov += &col * col.transpose();
        }
        cov /= training.len() as f64;
        let obs = cov.view((0, 0), (half, half)).into_owned();
        let cross = cov.view((0, half), (half, slots - half)).into_owned();
        let z: DVector<f64> = test.view((0, l), (half, 1)).column(0).into_owned();
        let pred = lmmse_predict_many(&obs, &cross, &z, noise_var)?;
        out.view_mut((half, l), (slots - half, 1)).copy_from(&pred);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TrafficRun {
    pub data: TrafficData,
    /// `(μ_rel, KMC e_p, LMMSE e_p)` per grid point.
    pub curve: Vec<(f64, ErrorRatio, ErrorRatio)>,
    pub kmc_best: usize,
    pub lmmse_best: usize,
    pub kmc_fit: CompletionResult,
    pub lmmse_zhat: DMatrix<f64>,
    /// Grid points whose KMC fit hit the sweep limit.
    pub unconverged: usize,
}

fn argmin(vals: impl Iterator<Item = f64>) -> usize {
    vals.enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).map(|(i, _)| i).unwrap_or(0)
}

pub fn fit_traffic(cfg: &TrafficExperimentConfig) -> Result<TrafficRun> {
    let network = abilene()?;
    let data = gen_traffic(cfg, &network)?;
    let (slots, links) = data.test.shape();
    let mask = first_half_mask(slots, links);
    let predicted = mask.map(|w| 1.0 - w);
    let masked = MaskedMatrix::new(data.test.component_mul(&mask), mask)?;
    let r_c = temporal_covariance(&data.training);
    let level = r_c.trace() / slots as f64;
    // All-zero training days carry no temporal structure and no scale to
    // set μ by; fall back to an uninformative prior at unit level.
    let (r_c, level) = if level > 0.0 { (r_c, level) } else { (DMatrix::identity(slots, slots), 1.0) };
    let priors = PriorPair::new(r_c, routing_covariance(&network), 1.0)?;
    let opts = KmcOptions { rel_eps: cfg.rel_tol, max_sweeps: cfg.max_sweeps, ..KmcOptions::new(cfg.rank, cfg.seed) };

    let mut curve = Vec::with_capacity(cfg.mu_rel.len());
    let mut fits = Vec::with_capacity(cfg.mu_rel.len());
    let mut baselines = Vec::with_capacity(cfg.mu_rel.len());
    for &rel in &cfg.mu_rel {
        let fit = kmc_fit(&masked, &priors.with_sigma2(rel * level)?, &opts)?;
        let base = per_link_lmmse(&data.training, &data.test, rel * level)?;
        curve.push((
            rel,
            relative_error(&fit.zhat, &data.test, &predicted)?,
            relative_error(&base, &data.test, &predicted)?,
        ));
        fits.push(fit);
        baselines.push(base);
    }
    let unconverged = fits.iter().filter(|f| !f.converged).count();
    let kmc_best = argmin(curve.iter().map(|c| c.1.value()));
    let lmmse_best = argmin(curve.iter().map(|c| c.2.value()));
    Ok(TrafficRun {
        kmc_fit: fits.swap_remove(kmc_best),
        lmmse_zhat: baselines.swap_remove(lmmse_best),
        data,
        curve,
        kmc_best,
        lmmse_best,
        unconverged,
    })
}

pub fn run_traffic_experiment(cfg: &TrafficExperimentConfig, out: Option<&Output>) -> Result<ExperimentReport> {
    let started = std::time::Instant::now();
    let run = fit_traffic(cfg)?;
    let mut report = ExperimentReport::new("traffic", cfg.seed, cfg)?;
    let kmc = run.curve[run.kmc_best].1;
    let base = run.curve[run.lmmse_best].2;
    report.flag("degenerate", kmc.is_degenerate() || base.is_degenerate());
    report.metric("kmc_ep", kmc.value())?;
    report.metric("lmmse_ep", base.value())?;
    report.metric("kmc_best_mu_rel", run.curve[run.kmc_best].0)?;
    report.metric("lmmse_best_mu_rel", run.curve[run.lmmse_best].0)?;
    report.metric("links", run.data.network.links.len() as f64)?;
    report.metric("flows", run.data.network.flows.len() as f64)?;
    report.flag("converged", run.kmc_fit.converged);
    report.metric("unconverged_grid_points", run.unconverged as f64)?;

    if let Some(out) = out {
        report.artifacts.push(out.matrix("test_day", &run.data.test)?);
        report.artifacts.push(out.matrix("zhat", &run.kmc_fit.zhat)?);
        report.artifacts.push(out.matrix("lmmse_zhat", &run.lmmse_zhat)?);
        let rows: Vec<Vec<f64>> = run.curve.iter().map(|(r, k, b)| vec![*r, k.value(), b.value()]).collect();
        report.artifacts.push(out.table("error_curve", &["mu_rel", "kmc_ep", "lmmse_ep"], &rows)?);
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}
