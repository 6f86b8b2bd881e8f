//! Synthetic data for the three experiments.

use nalgebra::{DMatrix, DVector};
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::additive::{Basis, BasisFn, BasisSet, TrainingSet};
use crate::error::{KblError, Result};
use crate::expharness::config::{CartographyConfig, CompletionExperimentConfig, TrafficExperimentConfig};
use crate::kernels::Point;
use crate::linalg::cholesky_with_jitter;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn normal_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Center frequency (MHz) of 802.11 channel `band` (1-based).
pub fn channel_center(band: usize) -> f64 {
    if band == 14 {
        2484.0
    } else {
        2407.0 + 5.0 * band as f64
    }
}

/// `n` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Hann pulses of common `width` at `centers`. Warns about pulses that fall
/// between grid points and therefore vanish on `grid`.
pub fn hann_bases(grid: &[f64], centers: &[f64], width: f64) -> Result<BasisSet> {
    if !(width.is_finite() && width > 0.0) {
        return Err(KblError::InvalidArgument(format!("Hann width must be positive, got {width}")));
    }
    let (lo, hi) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut bases = Vec::with_capacity(centers.len());
    for (i, &c) in centers.iter().enumerate() {
        if !(lo..=hi).contains(&c) {
            return Err(KblError::InvalidArgument(format!("center {c} lies outside the grid [{lo}, {hi}]")));
        }
        let func = BasisFn::Hann { center: c, width };
        if grid.iter().all(|&y| func.eval(y) == 0.0) {
            log::warn!("Hann pulse {} at {c} has no grid point inside its support", i + 1);
        }
        bases.push(Basis { name: format!("band{}", i + 1), func });
    }
    Ok(BasisSet::new(bases))
}

/// One draw of a zero-mean Gaussian field with covariance
/// `var·exp(−‖x − x'‖/decorrelation)` at `points`.
pub fn sample_shadowing(points: &[[f64; 2]], var: f64, decorrelation: f64, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let n = points.len();
    if var == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let cov = shadowing_covariance(points, var, decorrelation);
    let l = cholesky_with_jitter(&cov)?.l();
    Ok(l * normal_vec(rng, n))
}

pub fn shadowing_covariance(points: &[[f64; 2]], var: f64, decorrelation: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| var * (-distance(&points[i], &points[j]) / decorrelation).exp())
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Received power in dB from pathloss alone.
pub fn pathloss_db(power_db: f64, d: f64, reference: f64, exponent: f64) -> f64 {
    power_db - 10.0 * exponent * (d.max(reference) / reference).log10()
}

/// Synthetic spectrum-cartography scene.
#[derive(Clone, Debug)]
pub struct RfField {
    pub radios: Vec<[f64; 2]>,
    pub freqs: Vec<f64>,
    /// Samples ordered radio-major: sample `r·N_f + f` is radio `r` at frequency `f`.
    pub data: TrainingSet,
    /// Noise-free samples in the same order.
    pub clean: DVector<f64>,
    /// Evaluation grid, row-major over `grid_side × grid_side`.
    pub grid: Vec<[f64; 2]>,
    /// Noise-free linear power per band at each radio.
    pub radio_power: Vec<DVector<f64>>,
    /// Linear power per band on the grid (`grid_side × grid_side`, row = y index).
    pub truth: Vec<DMatrix<f64>>,
    pub bases: BasisSet,
}

pub fn grid_points(side: f64, n: usize) -> Vec<[f64; 2]> {
    let ax = linspace(0.0, side, n);
    let mut out = Vec::with_capacity(n * n);
    for &y in &ax {
        for &x in &ax {
            out.push([x, y]);
        }
    }
    out
}

/// Generates radio measurements and per-band truth maps.
///
/// Each source's power map is `P − 10 n_p log₁₀(max(d, Δ₀)/Δ₀) + X(x)` in dB
/// with its own shadowing field `X`, drawn jointly over the radios and the
/// evaluation grid, then converted to linear power. A measurement at
/// frequency `y` sums each source's linear power times its band's Hann mask
/// at `y`, plus white noise.
pub fn gen_rf_field(cfg: &CartographyConfig) -> Result<RfField> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let radios: Vec<[f64; 2]> = (0..cfg.radios)
        .map(|_| [rng.random::<f64>() * cfg.area_side, rng.random::<f64>() * cfg.area_side])
        .collect();
    let freqs = linspace(cfg.freq_lo, cfg.freq_hi, cfg.frequencies);
    let centers: Vec<f64> = (1..=cfg.bands).map(channel_center).collect();
    let bases = hann_bases(&freqs, &centers, cfg.hann_width)?;
    let grid = grid_points(cfg.area_side, cfg.grid_side);

    let mut all = radios.clone();
    all.extend_from_slice(&grid);
    let nr = radios.len();
    let mut radio_power = vec![DVector::<f64>::zeros(nr); cfg.bands];
    let mut truth = vec![DMatrix::zeros(cfg.grid_side, cfg.grid_side); cfg.bands];
    for s in &cfg.sources {
        let shadow = sample_shadowing(&all, cfg.shadowing_var_db, cfg.decorrelation, &mut rng)?;
        let linear = |k: usize| {
            let db = pathloss_db(s.power_db, distance(&s.position, &all[k]), cfg.reference_distance, cfg.pathloss_exponent);
            10f64.powf((db + shadow[k]) / 10.0)
        };
        for r in 0..nr {
            radio_power[s.band - 1][r] += linear(r);
        }
        for g in 0..grid.len() {
            truth[s.band - 1][(g / cfg.grid_side, g % cfg.grid_side)] += linear(nr + g);
        }
    }

    let nf = freqs.len();
    let noise_std = cfg.noise_var().sqrt();
    let mut clean = DVector::zeros(nr * nf);
    let mut z = DVector::zeros(nr * nf);
    let mut inputs = Vec::with_capacity(nr * nf);
    let mut side = Vec::with_capacity(nr * nf);
    for r in 0..nr {
        for (f, &y) in freqs.iter().enumerate() {
            let n = r * nf + f;
            let v: f64 = (0..cfg.bands).map(|b| radio_power[b][r] * bases.eval(b, y)).sum();
            clean[n] = v;
            let e: f64 = StandardNormal.sample(&mut rng);
            z[n] = v + noise_std * e;
            inputs.push(Point::new(radios[r].to_vec())?);
            side.push(y);
        }
    }
    Ok(RfField { radios, freqs, data: TrainingSet::with_side(inputs, side, z)?, clean, grid, radio_power, truth, bases })
}

/// Low-rank matrix drawn from the Gaussian factor prior, with the
/// auxiliary data used to estimate its covariances.
#[derive(Clone, Debug)]
pub struct PriorModelData {
    pub z: DMatrix<f64>,
    pub clean: DMatrix<f64>,
    pub mask: DMatrix<f64>,
    /// Rows with no observed entry.
    pub missing_rows: Vec<usize>,
    pub r_c: DMatrix<f64>,
    pub r_b: DMatrix<f64>,
    /// Side datasets on the same rows: they share the row factor `C` of `z`
    /// but draw their own column factor with no temporal correlation.
    pub replicates: Vec<DMatrix<f64>>,
    /// Extra rows sharing the column structure (for `R̂_B`).
    pub aux_rows: DMatrix<f64>,
}

/// Block-diagonal cluster correlation: `corr` within clusters, 1 on the diagonal.
pub fn cluster_covariance(m: usize, clusters: usize, corr: f64) -> DMatrix<f64> {
    let label = |i: usize| i * clusters / m;
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else if label(i) == label(j) { corr } else { 0.0 })
}

pub fn exponential_covariance(n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| (-(i as f64 - j as f64).abs() / scale).exp())
}

fn factor_product(rng: &mut ChaCha8Rng, c: &DMatrix<f64>, l_b: &DMatrix<f64>, noise: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let rank = c.ncols();
    let b = l_b * normal_mat(rng, l_b.nrows(), rank);
    let clean = c * b.transpose() / (rank as f64).sqrt();
    let noisy = &clean + normal_mat(rng, clean.nrows(), clean.ncols()) * noise;
    (clean, noisy)
}

pub fn gen_prior_model(cfg: &CompletionExperimentConfig) -> Result<PriorModelData> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let r_c = cluster_covariance(cfg.m, cfg.clusters, cfg.cluster_corr);
    let r_b = exponential_covariance(cfg.n, cfg.time_scale);
    let l_c = cholesky_with_jitter(&r_c)?.l();
    let l_b = cholesky_with_jitter(&r_b)?.l();
    let c = l_c * normal_mat(&mut rng, cfg.m, cfg.rank);
    let (clean, z) = factor_product(&mut rng, &c, &l_b, cfg.noise_std);
    let white = DMatrix::identity(cfg.n, cfg.n);
    let replicates = (0..cfg.replicates).map(|_| factor_product(&mut rng, &c, &white, cfg.noise_std).1).collect();
    // Auxiliary rows: same column structure, unrelated rows.
    let aux_c = normal_mat(&mut rng, cfg.aux_rows, cfg.rank);
    let aux_rows = factor_product(&mut rng, &aux_c, &l_b, cfg.noise_std).1;

    let (mask, missing_rows) = row_and_entry_mask(&mut rng, cfg.m, cfg.n, cfg.missing_fraction, cfg.missing_rows);
    Ok(PriorModelData { z, clean, mask, missing_rows, r_c, r_b, replicates, aux_rows })
}

/// Hides `missing_rows` whole rows, then hides entries uniformly in the
/// remaining rows until `missing_fraction` of all entries are hidden.
pub fn row_and_entry_mask(
    rng: &mut ChaCha8Rng,
    m: usize,
    n: usize,
    missing_fraction: f64,
    missing_rows: usize,
) -> (DMatrix<f64>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..m).collect();
    for i in 0..missing_rows {
        let j = rng.random_range(i..m);
        rows.swap(i, j);
    }
    let mut hidden: Vec<usize> = rows[..missing_rows].to_vec();
    hidden.sort_unstable();
    let mut mask = DMatrix::from_element(m, n, 1.0);
    for &r in &hidden {
        mask.row_mut(r).fill(0.0);
    }
    let target = (missing_fraction * (m * n) as f64).round() as usize;
    let mut candidates: Vec<(usize, usize)> =
        (0..m).filter(|r| hidden.binary_search(r).is_err()).flat_map(|r| (0..n).map(move |c| (r, c))).collect();
    let extra = target.saturating_sub(missing_rows * n).min(candidates.len());
    for i in 0..extra {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
        let (r, c) = candidates[i];
        mask[(r, c)] = 0.0;
    }
    (mask, hidden)
}

/// Router names of the Abilene backbone.
pub const ABILENE_NODES: [&str; 11] =
    ["ATLA", "CHIN", "DNVR", "HSTN", "IPLS", "KSCY", "LOSA", "NYCM", "SNVA", "STTL", "WASH"];

/// The 14 Abilene backbone edges plus a Chicago–Kansas City shortcut, giving
/// 15 bidirectional edges, i.e. 30 directed links.
pub const ABILENE_EDGES: [(usize, usize); 15] = [
    (0, 3),
    (0, 4),
    (0, 10),
    (1, 4),
    (1, 7),
    (2, 5),
    (2, 8),
    (2, 9),
    (3, 5),
    (3, 6),
    (4, 5),
    (6, 8),
    (7, 10),
    (8, 9),
    (1, 5),
];

/// Network with directed links and one flow per ordered node pair.
#[derive(Clone, Debug)]
pub struct Network {
    /// Directed links `(from, to)`.
    pub links: Vec<(usize, usize)>,
    /// Ordered node pairs `(src, dst)`.
    pub flows: Vec<(usize, usize)>,
    /// Links × flows, 1 where the flow's shortest path uses the link.
    pub routing: DMatrix<f64>,
}

/// Hop-count shortest-path routing over the undirected `edges`.
pub fn shortest_path_routing(nodes: usize, edges: &[(usize, usize)]) -> Result<Network> {
    let mut g: UnGraph<(), ()> = UnGraph::new_undirected();
    let idx: Vec<NodeIndex> = (0..nodes).map(|_| g.add_node(())).collect();
    for &(a, b) in edges {
        g.add_edge(idx[a], idx[b], ());
    }
    let links: Vec<(usize, usize)> = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let flows: Vec<(usize, usize)> =
        (0..nodes).flat_map(|s| (0..nodes).filter(move |&d| d != s).map(move |d| (s, d))).collect();
    let mut routing = DMatrix::zeros(links.len(), flows.len());
    for (j, &(s, d)) in flows.iter().enumerate() {
        let (_, path) = petgraph::algo::astar(&g, idx[s], |n| n == idx[d], |_| 1usize, |_| 0)
            .ok_or_else(|| KblError::InvalidArgument(format!("no path from node {s} to node {d}")))?;
        for hop in path.windows(2) {
            let l = links
                .iter()
                .position(|&(a, b)| idx[a] == hop[0] && idx[b] == hop[1])
                .expect("path hops follow edges");
            routing[(l, j)] = 1.0;
        }
    }
    if let Some(l) = (0..links.len()).find(|&l| routing.row(l).iter().all(|&v| v == 0.0)) {
        return Err(KblError::InvalidArgument(format!("link {:?} carries no flow", links[l])));
    }
    Ok(Network { links, flows, routing })
}

pub fn abilene() -> Result<Network> {
    shortest_path_routing(ABILENE_NODES.len(), &ABILENE_EDGES)
}

/// Link loads over several days, as time × links matrices.
#[derive(Clone, Debug)]
pub struct TrafficData {
    pub network: Network,
    pub training: Vec<DMatrix<f64>>,
    pub test: DMatrix<f64>,
}

/// Flows are `scale·a_j(1 + A sin(2πt/T + φ_j)) + AR(1)` with a daily period
/// `T`; the AR(1) state runs on across day boundaries. Link loads are
/// `R·f(t)` plus white noise.
pub fn gen_traffic(cfg: &TrafficExperimentConfig, network: &Network) -> Result<TrafficData> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let nf = network.flows.len();
    let nl = network.links.len();
    let t_day = cfg.slots_per_day;
    let means: Vec<f64> =
        (0..nf).map(|_| cfg.flow_mean_lo + (cfg.flow_mean_hi - cfg.flow_mean_lo) * rng.random::<f64>()).collect();
    let phases: Vec<f64> = (0..nf).map(|_| cfg.phase_spread * rng.random::<f64>()).collect();
    let innov = cfg.ar_std * (1.0 - cfg.ar_coeff * cfg.ar_coeff).sqrt();
    let mut state: Vec<f64> = (0..nf).map(|_| cfg.ar_std * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let days = cfg.training_days + 1;
    let mut out = Vec::with_capacity(days);
    for _ in 0..days {
        let mut flows = DMatrix::zeros(nf, t_day);
        for t in 0..t_day {
            let angle = std::f64::consts::TAU * t as f64 / t_day as f64;
            for j in 0..nf {
                let e: f64 = StandardNormal.sample(&mut rng);
                state[j] = cfg.ar_coeff * state[j] + innov * e;
                let profile = 1.0 + cfg.daily_amplitude * (angle + phases[j]).sin() + state[j];
                flows[(j, t)] = cfg.flow_scale * means[j] * profile;
            }
        }
        let noise = normal_mat(&mut rng, t_day, nl) * cfg.noise_std;
        out.push((&network.routing * flows).transpose() + noise);
    }
    let test = out.pop().expect("at least one day");
    Ok(TrafficData { network: network.clone(), training: out, test })
}
