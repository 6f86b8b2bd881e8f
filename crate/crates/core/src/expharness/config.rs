//! Experiment configurations and TOML loading.
//!
//! Every section is optional and every field has a default, so a config file
//! only needs to name what it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KblError, Result};
use crate::kernels::KernelSpec;

fn invalid(msg: impl Into<String>) -> KblError {
    KblError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// A transmitter in the cartography scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    /// Position in metres.
    pub position: [f64; 2],
    /// Sub-band, 1-based.
    pub band: usize,
    /// Transmit power in dB.
    pub power_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartographyConfig {
    /// Side of the square area (m).
    pub area_side: f64,
    pub radios: usize,
    pub frequencies: usize,
    /// Frequency range sampled by the radios (MHz).
    pub freq_lo: f64,
    pub freq_hi: f64,
    pub bands: usize,
    /// Support of each Hann pulse (MHz).
    pub hann_width: f64,
    pub pathloss_exponent: f64,
    /// Distance below which pathloss is flat (m).
    pub reference_distance: f64,
    /// Shadowing decorrelation distance (m).
    pub decorrelation: f64,
    /// Shadowing variance in dB².
    pub shadowing_var_db: f64,
    /// Measurement noise variance in dB (linear variance `10^(v/10)`).
    pub noise_var_db: f64,
    pub kernel_widths: Vec<f64>,
    pub sources: Vec<Source>,
    /// Points per side of the evaluation grid.
    pub grid_side: usize,
    /// Smallest μ on the sweep, as a fraction of the smallest μ that
    /// zeroes every block.
    pub mu_min_rel: f64,
    /// BCD stopping threshold on the optimality certificate, relative to
    /// `1 + μ_max`.
    pub certificate_tol: f64,
    pub max_sweeps: usize,
    pub mu_points: usize,
    pub seed: u64,
}

impl Default for CartographyConfig {
    fn default() -> Self {
        CartographyConfig {
            area_side: 100.0,
            radios: 100,
            frequencies: 24,
            freq_lo: 2400.0,
            freq_hi: 2496.0,
            bands: 14,
            hann_width: 22.0,
            pathloss_exponent: 3.0,
            reference_distance: 60.0,
            decorrelation: 25.0,
            shadowing_var_db: 25.0,
            noise_var_db: -10.0,
            kernel_widths: vec![10.0, 20.0],
            sources: vec![
                Source { position: [25.0, 70.0], band: 5, power_db: 10.0 },
                Source { position: [75.0, 30.0], band: 8, power_db: 10.0 },
            ],
            grid_side: 20,
            mu_min_rel: 1e-3,
            certificate_tol: 1e-6,
            max_sweeps: 20_000,
            mu_points: 20,
            seed: 1,
        }
    }
}

impl CartographyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("area_side", self.area_side),
            ("hann_width", self.hann_width),
            ("pathloss_exponent", self.pathloss_exponent),
            ("reference_distance", self.reference_distance),
            ("decorrelation", self.decorrelation),
        ] {
            positive(name, v)?;
        }
        if !(self.shadowing_var_db.is_finite() && self.shadowing_var_db >= 0.0) {
            return Err(invalid("shadowing_var_db must be nonnegative"));
        }
        if !self.noise_var_db.is_finite() && self.noise_var_db != f64::NEG_INFINITY {
            return Err(invalid("noise_var_db must be a number or -inf"));
        }
        if !(self.freq_lo < self.freq_hi) {
            return Err(invalid("freq_lo must be below freq_hi"));
        }
        if self.radios < 2 || self.frequencies < 2 || self.grid_side < 2 || self.mu_points == 0 {
            return Err(invalid("radios, frequencies and grid_side must be at least 2; mu_points at least 1"));
        }
        if self.bands == 0 || self.bands > 14 {
            return Err(invalid(format!("bands must be in 1..=14 (802.11 channels), got {}", self.bands)));
        }
        if !(self.mu_min_rel > 0.0 && self.mu_min_rel < 1.0) {
            return Err(invalid("mu_min_rel must be in (0, 1)"));
        }
        positive("certificate_tol", self.certificate_tol)?;
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps must be positive"));
        }
        if self.kernel_widths.is_empty() {
            return Err(invalid("kernel_widths must not be empty"));
        }
        for &w in &self.kernel_widths {
            positive("kernel width", w)?;
        }
        for s in &self.sources {
            if s.band == 0 || s.band > self.bands {
                return Err(invalid(format!("source band {} outside 1..={}", s.band, self.bands)));
            }
            if !s.power_db.is_finite() || s.position.iter().any(|p| !p.is_finite()) {
                return Err(invalid("source position and power must be finite"));
            }
        }
        Ok(())
    }

    /// Linear noise variance.
    pub fn noise_var(&self) -> f64 {
        10f64.powf(self.noise_var_db / 10.0)
    }

    pub fn kernels(&self) -> Result<Vec<KernelSpec>> {
        self.kernel_widths.iter().map(|&w| KernelSpec::gaussian(w)).collect()
    }
}

/// Where the completion priors come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Sample estimates from auxiliary replicates (`R_C`) and auxiliary rows (`R_B`).
    Sample,
    /// The generating covariances themselves.
    Structural,
    /// Identity priors; KMC then reduces to nuclear-norm regularization.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionExperimentConfig {
    pub m: usize,
    pub n: usize,
    /// Rank of the generated matrix.
    pub rank: usize,
    /// Rank budget `P` given to KMC.
    pub budget: usize,
    pub missing_fraction: f64,
    pub missing_rows: usize,
    /// Row clusters in the generating `R_C`.
    pub clusters: usize,
    /// Within-cluster correlation of `R_C`.
    pub cluster_corr: f64,
    /// Correlation length of the exponential `R_B` over time points.
    pub time_scale: f64,
    pub noise_std: f64,
    pub replicates: usize,
    /// Rows of the auxiliary matrix used for `R_B`.
    pub aux_rows: usize,
    pub covariance: CovarianceSource,
    pub mu_points: usize,
    /// KMC stops once a sweep lowers the cost by less than this fraction of
    /// the cost after the first sweep.
    pub rel_tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for CompletionExperimentConfig {
    fn default() -> Self {
        CompletionExperimentConfig {
            m: 100,
            n: 13,
            rank: 4,
            budget: 13,
            missing_fraction: 0.9,
            missing_rows: 25,
            clusters: 5,
            cluster_corr: 0.9,
            time_scale: 3.0,
            noise_std: 0.05,
            replicates: 2,
            aux_rows: 400,
            covariance: CovarianceSource::Sample,
            mu_points: 20,
            rel_tol: 1e-6,
            max_sweeps: 10_000,
            seed: 1,
        }
    }
}

impl CompletionExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(invalid("m and n must be positive"));
        }
        if self.rank == 0 || self.rank > self.m.min(self.n) {
            return Err(invalid(format!("rank must be in 1..={}", self.m.min(self.n))));
        }
        if self.budget == 0 || self.max_sweeps == 0 {
            return Err(invalid("budget and max_sweeps must be positive"));
        }
        positive("rel_tol", self.rel_tol)?;
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(invalid("missing_fraction must be in [0, 1)"));
        }
        if self.missing_rows >= self.m {
            return Err(invalid("missing_rows must leave at least one row"));
        }
        let total = (self.m * self.n) as f64;
        if (self.missing_rows * self.n) as f64 > self.missing_fraction * total + 1e-9 {
            return Err(invalid("missing_rows exceed the missing fraction"));
        }
        if self.clusters == 0 || self.clusters > self.m {
            return Err(invalid("clusters must be in 1..=m"));
        }
        if !(0.0..1.0).contains(&self.cluster_corr) {
            return Err(invalid("cluster_corr must be in [0, 1)"));
        }
        positive("time_scale", self.time_scale)?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(invalid("noise_std must be nonnegative"));
        }
        if self.replicates == 0 || self.aux_rows == 0 || self.mu_points == 0 {
            return Err(invalid("replicates, aux_rows and mu_points must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficExperimentConfig {
    pub slots_per_day: usize,
    pub training_days: usize,
    /// Flow means are drawn uniformly from `[flow_mean_lo, flow_mean_hi]`.
    pub flow_mean_lo: f64,
    pub flow_mean_hi: f64,
    /// Overall multiplier on every flow; 0 gives silent traffic.
    pub flow_scale: f64,
    /// Relative amplitude of the daily sinusoid.
    pub daily_amplitude: f64,
    /// Flow phases are drawn uniformly from `[0, phase_spread)` radians.
    pub phase_spread: f64,
    pub ar_coeff: f64,
    /// Stationary standard deviation of the AR(1) part, relative to the flow mean.
    pub ar_std: f64,
    pub noise_std: f64,
    /// Regularization candidates, relative to the mean diagonal of each
    /// method's covariance. Each method reports its best candidate.
    pub mu_rel: Vec<f64>,
    /// KMC rank budget.
    pub rank: usize,
    /// KMC stops once a sweep lowers the cost by less than this fraction of
    /// the cost after the first sweep.
    pub rel_tol: f64,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for TrafficExperimentConfig {
    fn default() -> Self {
        TrafficExperimentConfig {
            slots_per_day: 288,
            training_days: 2,
            flow_mean_lo: 0.5,
            flow_mean_hi: 1.5,
            flow_scale: 1.0,
            daily_amplitude: 0.6,
            phase_spread: std::f64::consts::FRAC_PI_4,
            ar_coeff: 0.98,
            ar_std: 0.3,
            noise_std: 0.02,
            mu_rel: vec![0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0],
            rank: 10,
            rel_tol: 1e-6,
            max_sweeps: 10_000,
            seed: 1,
        }
    }
}

impl TrafficExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slots_per_day < 4 || self.slots_per_day % 2 != 0 {
            return Err(invalid("slots_per_day must be even and at least 4"));
        }
        if self.training_days == 0 {
            return Err(invalid("training_days must be positive"));
        }
        if !(self.flow_mean_lo >= 0.0 && self.flow_mean_lo <= self.flow_mean_hi && self.flow_mean_hi.is_finite()) {
            return Err(invalid("flow means must satisfy 0 <= lo <= hi"));
        }
        if !(self.flow_scale.is_finite() && self.flow_scale >= 0.0) {
            return Err(invalid("flow_scale must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.ar_coeff.abs()) {
            return Err(invalid("ar_coeff must satisfy |a| < 1"));
        }
        for (name, v) in [
            ("daily_amplitude", self.daily_amplitude),
            ("phase_spread", self.phase_spread),
            ("ar_std", self.ar_std),
            ("noise_std", self.noise_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be nonnegative")));
            }
        }
        if self.mu_rel.is_empty() {
            return Err(invalid("mu_rel must not be empty"));
        }
        for &m in &self.mu_rel {
            positive("mu_rel entry", m)?;
        }
        if self.rank == 0 || self.max_sweeps == 0 {
            return Err(invalid("rank and max_sweeps must be positive"));
        }
        positive("rel_tol", self.rel_tol)?;
        Ok(())
    }
}

/// Additive models understood by `kbl fit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Spam,
    Mkl,
    Nbp,
    Kmc,
    Kdl,
}

/// A Hann pulse over the side variable, for NBP fits from config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HannSpec {
    pub center: f64,
    pub width: f64,
}

/// Generic fitting on user data (`kbl fit` and `kbl sweep`).
///
/// Additive models read `training`: one sample per row, inputs first, then the
/// side value when `side = true` (NBP), then the target. Completion models
/// read `values` with optional `mask`, `row_cov` and `col_cov` (identity when
/// absent). Relative paths are resolved against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: FitModel,
    pub training: Option<String>,
    pub side: bool,
    pub kernels: Vec<KernelSpec>,
    pub bases: Vec<HannSpec>,
    pub values: Option<String>,
    pub mask: Option<String>,
    pub row_cov: Option<String>,
    pub col_cov: Option<String>,
    pub mu: f64,
    pub rank: usize,
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Explicit grid for `sweep`; when empty a 20-point grid scaled to the data is used.
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            model: FitModel::Kmc,
            training: None,
            side: false,
            kernels: Vec::new(),
            bases: Vec::new(),
            values: None,
            mask: None,
            row_cov: None,
            col_cov: None,
            mu: 0.1,
            rank: 2,
            lambda: 0.0,
            max_sweeps: 5_000,
            grid: Vec::new(),
            seed: 1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        positive("mu", self.mu)?;
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(invalid("lambda must be nonnegative"));
        }
        match self.model {
            FitModel::Spam | FitModel::Mkl | FitModel::Nbp => {
                if self.training.is_none() {
                    return Err(invalid("additive models need `training`"));
                }
                if self.kernels.is_empty() {
                    return Err(invalid("additive models need at least one kernel"));
                }
                for k in &self.kernels {
                    k.validate().map_err(|e| invalid(e.to_string()))?;
                }
                if self.model == FitModel::Nbp && (!self.side || self.bases.is_empty()) {
                    return Err(invalid("nbp needs `side = true` and at least one basis"));
                }
            }
            FitModel::Kmc | FitModel::Kdl => {
                if self.values.is_none() {
                    return Err(invalid("completion models need `values`"));
                }
                if self.rank == 0 {
                    return Err(invalid("rank must be positive"));
                }
            }
        }
        for &g in &self.grid {
            positive("grid entry", g)?;
        }
        Ok(())
    }
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub cartography: CartographyConfig,
    pub completion: CompletionExperimentConfig,
    pub traffic: TrafficExperimentConfig,
    pub fit: FitConfig,
}

pub fn parse_config(text: &str) -> Result<HarnessConfig> {
    toml::from_str(text).map_err(|e| invalid(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<HarnessConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        KblError::Config(m) => invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}
