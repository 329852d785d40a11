//! Monte-Carlo lifetime and reliability extrapolation.
//!
//! Given fitted parameters and a target (usually normal) stress, degradation
//! paths are simulated forward on a uniform grid, the first-passage time
//! over the failure threshold is read off each path, and the reliability
//! curve is the complement of the empirical lifetime CDF. Every path has its
//! own counter-derived random stream, so results are identical for any
//! number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AdtError, Result};
use crate::fbm::{fbm_covariance, FgnSampler, TimeGrid};
use crate::model::ModelParams;
use crate::rng::{substream, StreamDomain};
use rand::RngExt;
use rand_distr::StandardNormal;

/// Default number of Monte-Carlo paths for reliability curves.
pub const DEFAULT_MC_PATHS: usize = 10_000;
/// Default number of grid steps spanning the simulation horizon.
pub const DEFAULT_MC_STEPS: usize = 2_000;
/// Default ensemble size for degradation-band evaluation.
pub const DEFAULT_ENSEMBLE_PATHS: usize = 1_000;

/// Monte-Carlo settings: path count, simulation grid, failure threshold,
/// and the master seed all path streams derive from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    n_paths: usize,
    grid: TimeGrid,
    x_th: f64,
    master_seed: u64,
}

impl McConfig {
    /// A config on an explicit uniform-from-zero grid.
    pub fn new(n_paths: usize, grid: TimeGrid, x_th: f64, master_seed: u64) -> Result<Self> {
        if n_paths == 0 {
            return Err(AdtError::InvalidParameter(
                "n_paths must be at least 1".into(),
            ));
        }
        if grid.uniform_step_from_zero().is_none() {
            return Err(AdtError::InvalidGrid(
                "Monte-Carlo simulation needs a uniform grid starting at 0".into(),
            ));
        }
        if !x_th.is_finite() || x_th <= 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "failure threshold must be positive, got {x_th}"
            )));
        }
        Ok(Self {
            n_paths,
            grid,
            x_th,
            master_seed,
        })
    }

    /// Default-shaped config: `n_paths` paths on `DEFAULT_MC_STEPS` uniform
    /// steps spanning `horizon`.
    pub fn with_horizon(n_paths: usize, horizon: f64, x_th: f64, master_seed: u64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let grid =
            TimeGrid::uniform_from_zero(horizon / DEFAULT_MC_STEPS as f64, DEFAULT_MC_STEPS)?;
        Self::new(n_paths, grid, x_th, master_seed)
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn x_th(&self) -> f64 {
        self.x_th
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }
}

/// First-passage outcome of one path over the simulation horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstPassage {
    /// First grid time at which the path reached the threshold.
    Crossed(f64),
    /// The path stayed below the threshold for the whole horizon.
    Censored,
}

/// First grid time with `path(t_j) ≥ x_th`.
///
/// The infimum over continuous time is approximated at grid resolution;
/// boundary equality counts as a failure (the margin `x_th − X` is
/// non-positive there). `path` and `times` are paired by index.
pub fn first_passage(path: &[f64], times: &[f64], x_th: f64) -> FirstPassage {
    debug_assert_eq!(path.len(), times.len());
    for (&x, &t) in path.iter().zip(times) {
        if x >= x_th {
            return FirstPassage::Crossed(t);
        }
    }
    FirstPassage::Censored
}

/// Simulate `cfg.n_paths` degradation paths of `theta` at normalized stress
/// `s_star` on `cfg.grid`; row `q` is path `q`.
///
/// Each path's stream is `substream(master_seed, McPath, [q])`; within a
/// stream the unit drift draw comes first, then the noise draws, so path `q`
/// is bit-reproducible in isolation. Paths start at exactly 0 at `t = 0`.
pub fn simulate_degradation_paths(
    theta: &ModelParams,
    s_star: f64,
    cfg: &McConfig,
) -> Result<Vec<Vec<f64>>> {
    let grid = &cfg.grid;
    let dt = grid
        .uniform_step_from_zero()
        .expect("validated at construction");
    let n_steps = grid.len() - 1;
    let sampler = FgnSampler::new(n_steps, dt, theta.hurst())?;
    let (drift_mean, drift_sd) = theta.drift_distribution(s_star);
    let sigma = theta.diffusion_sd();
    let beta = theta.time_exp();
    let trend_shape: Vec<f64> = grid.times().iter().map(|t| t.powf(beta)).collect();

    let paths: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|q| {
            let mut rng = substream(cfg.master_seed, StreamDomain::McPath, &[q as u64]);
            // The drift draw happens even when its variance is zero so that
            // the noise draws land on the same stream positions for every
            // variant.
            let z: f64 = rng.sample(StandardNormal);
            let drift = drift_mean + drift_sd * z;
            let fgn = sampler.sample(&mut rng);
            let mut path = Vec::with_capacity(grid.len());
            let mut noise = 0.0;
            path.push(0.0);
            for (j, increment) in fgn.iter().enumerate() {
                noise += increment;
                path.push(drift * trend_shape[j + 1] + sigma * noise);
            }
            path
        })
        .collect();
    Ok(paths)
}

/// Simulate paths one at a time and keep only their first-passage times.
///
/// Statistically identical to [`simulate_degradation_paths`] followed by
/// [`FirstPassages::from_paths`] (path `q` uses the same stream either way),
/// but memory stays O(paths + grid) instead of O(paths × grid), which is
/// what makes 10⁵-path lifetime runs practical.
pub fn simulate_first_passages(
    theta: &ModelParams,
    s_star: f64,
    cfg: &McConfig,
) -> Result<FirstPassages> {
    let grid = &cfg.grid;
    let dt = grid
        .uniform_step_from_zero()
        .expect("validated at construction");
    let n_steps = grid.len() - 1;
    let sampler = FgnSampler::new(n_steps, dt, theta.hurst())?;
    let (drift_mean, drift_sd) = theta.drift_distribution(s_star);
    let sigma = theta.diffusion_sd();
    let beta = theta.time_exp();
    let times = grid.times();
    let trend_shape: Vec<f64> = times.iter().map(|t| t.powf(beta)).collect();
    let x_th = cfg.x_th;

    let outcomes: Vec<FirstPassage> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|q| {
            let mut rng = substream(cfg.master_seed, StreamDomain::McPath, &[q as u64]);
            let z: f64 = rng.sample(StandardNormal);
            let drift = drift_mean + drift_sd * z;
            let fgn = sampler.sample(&mut rng);
            let mut noise = 0.0;
            // x(0) = 0 < x_th by construction, so start scanning at step 1.
            for (j, increment) in fgn.iter().enumerate() {
                noise += increment;
                if drift * trend_shape[j + 1] + sigma * noise >= x_th {
                    return FirstPassage::Crossed(times[j + 1]);
                }
            }
            FirstPassage::Censored
        })
        .collect();

    let mut crossing_times: Vec<f64> = outcomes
        .into_iter()
        .filter_map(|o| match o {
            FirstPassage::Crossed(t) => Some(t),
            FirstPassage::Censored => None,
        })
        .collect();
    crossing_times.sort_by(f64::total_cmp);
    Ok(FirstPassages {
        crossing_times,
        n_paths: cfg.n_paths,
    })
}

/// Sorted first-passage sample extracted from a path set.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstPassages {
    crossing_times: Vec<f64>,
    n_paths: usize,
}

impl FirstPassages {
    pub fn from_paths(paths: &[Vec<f64>], grid: &TimeGrid, x_th: f64) -> Self {
        let mut crossing_times: Vec<f64> = paths
            .iter()
            .filter_map(|path| match first_passage(path, grid.times(), x_th) {
                FirstPassage::Crossed(t) => Some(t),
                FirstPassage::Censored => None,
            })
            .collect();
        crossing_times.sort_by(f64::total_cmp);
        Self {
            crossing_times,
            n_paths: paths.len(),
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Paths that never crossed within the horizon.
    pub fn censored(&self) -> usize {
        self.n_paths - self.crossing_times.len()
    }

    /// Empirical lifetime CDF; censored paths count as surviving.
    pub fn cdf_at(&self, t: f64) -> f64 {
        let failed = self.crossing_times.partition_point(|&tau| tau <= t);
        failed as f64 / self.n_paths as f64
    }

    pub fn reliability_at(&self, t: f64) -> f64 {
        1.0 - self.cdf_at(t)
    }

    /// Sorted crossing times (censored paths excluded).
    pub fn crossing_times(&self) -> &[f64] {
        &self.crossing_times
    }
}

/// Empirical reliability curve on an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityCurve {
    times: Vec<f64>,
    r_values: Vec<f64>,
    n_paths: usize,
    censored_fraction: f64,
    /// More than half of the paths were still alive at the last evaluation
    /// time — the horizon (or the evaluation window) is too short to see the
    /// bulk of the lifetime distribution.
    short_horizon: bool,
}

impl ReliabilityCurve {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn r_values(&self) -> &[f64] {
        &self.r_values
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored_fraction
    }

    pub fn short_horizon(&self) -> bool {
        self.short_horizon
    }

    /// CSV rendering: `time_hours,reliability` rows with provenance columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_hours,reliability,n_paths,censored_fraction\n");
        for (t, r) in self.times.iter().zip(&self.r_values) {
            out.push_str(&format!(
                "{t},{r},{},{}\n",
                self.n_paths, self.censored_fraction
            ));
        }
        out
    }
}

/// Simulate at `s_star` and evaluate `R(t) = 1 − F(t)` on `eval_times`.
pub fn reliability_curve(
    theta: &ModelParams,
    s_star: f64,
    cfg: &McConfig,
    eval_times: &TimeGrid,
) -> Result<ReliabilityCurve> {
    if eval_times.last() > cfg.grid.last() * (1.0 + 1e-12) {
        return Err(AdtError::HorizonExceeded(format!(
            "evaluation extends to {} but the simulation horizon ends at {}",
            eval_times.last(),
            cfg.grid.last()
        )));
    }
    let passages = simulate_first_passages(theta, s_star, cfg)?;
    let r_values: Vec<f64> = eval_times
        .times()
        .iter()
        .map(|&t| passages.reliability_at(t))
        .collect();
    let censored_fraction = passages.censored() as f64 / passages.n_paths() as f64;
    let short_horizon = *r_values.last().unwrap() > 0.5;
    Ok(ReliabilityCurve {
        times: eval_times.times().to_vec(),
        r_values,
        n_paths: cfg.n_paths,
        censored_fraction,
        short_horizon,
    })
}

/// Largest evaluation time still meeting `R(t) ≥ r_target`.
///
/// Errors when the curve never drops to the target within its window (the
/// answer would be censored). Returns 0 when even the first evaluation time
/// is below target — the device fails the requirement immediately.
pub fn time_at_reliability(curve: &ReliabilityCurve, r_target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r_target) || r_target == 0.0 {
        return Err(AdtError::InvalidParameter(format!(
            "reliability target must lie in (0, 1), got {r_target}"
        )));
    }
    let last_ok = curve
        .r_values
        .iter()
        .rposition(|&r| r >= r_target)
        .map(|idx| (idx, curve.times[idx]));
    match last_ok {
        None => Ok(0.0),
        Some((idx, _)) if idx + 1 == curve.times.len() => Err(AdtError::HorizonExceeded(format!(
            "reliability stays at or above {r_target} through the whole window \
             (last value {:.4}); extend the horizon",
            curve.r_values[idx]
        ))),
        Some((_, t)) => Ok(t),
    }
}

/// A simulated path bundle on a common grid, with pointwise summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    paths: Vec<Vec<f64>>,
}

impl PathEnsemble {
    pub fn new(grid: TimeGrid, paths: Vec<Vec<f64>>) -> Result<Self> {
        if paths.is_empty() || paths.iter().any(|p| p.len() != grid.len()) {
            return Err(AdtError::InvalidParameter(
                "ensemble needs at least one path, all on the ensemble grid".into(),
            ));
        }
        Ok(Self { grid, paths })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> &[Vec<f64>] {
        &self.paths
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// Cross-path mean at every grid time.
    pub fn pointwise_mean(&self) -> Vec<f64> {
        let n = self.paths.len() as f64;
        (0..self.grid.len())
            .map(|j| self.paths.iter().map(|p| p[j]).sum::<f64>() / n)
            .collect()
    }

    /// Pointwise empirical quantile with the nearest-rank convention:
    /// the `⌈p·n⌉`-th smallest value at each time.
    pub fn pointwise_quantile(&self, p: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(AdtError::InvalidParameter(format!(
                "quantile level must lie in [0, 1], got {p}"
            )));
        }
        let n = self.paths.len();
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        Ok((0..self.grid.len())
            .map(|j| {
                let mut column: Vec<f64> = self.paths.iter().map(|path| path[j]).collect();
                column.sort_by(f64::total_cmp);
                column[rank]
            })
            .collect())
    }
}

/// Exact-covariance ensemble on an observation grid (strictly positive
/// times), for degradation-band evaluation and fan plots.
///
/// Unlike [`simulate_degradation_paths`] this samples the memory noise with
/// a dense Cholesky factor on the exact grid — no uniform-grid requirement
/// and no embedding error. Stream `q` is `substream(master_seed, Ensemble, [q])`.
pub fn simulate_observation_ensemble(
    theta: &ModelParams,
    s_star: f64,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(AdtError::InvalidParameter(
            "ensemble needs at least one path".into(),
        ));
    }
    let cov = fbm_covariance(grid, theta.hurst(), theta.diffusion_var())?;
    let (drift_mean, drift_sd) = theta.drift_distribution(s_star);
    let beta = theta.time_exp();
    let trend_shape: Vec<f64> = grid.times().iter().map(|t| t.powf(beta)).collect();
    let paths: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|q| {
            let mut rng = substream(master_seed, StreamDomain::Ensemble, &[q as u64]);
            let z: f64 = rng.sample(StandardNormal);
            let drift = drift_mean + drift_sd * z;
            let noise = cov.sample(&mut rng);
            trend_shape
                .iter()
                .zip(&noise)
                .map(|(shape, n)| drift * shape + n)
                .collect()
        })
        .collect();
    PathEnsemble::new(grid.clone(), paths)
}
