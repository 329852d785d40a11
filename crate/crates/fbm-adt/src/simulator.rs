//! Synthetic constant-stress ADT data generation for estimator studies:
//! single datasets from a ground-truth parameter vector, and design sweeps
//! that fit every generated dataset with one or more methods and aggregate
//! accuracy summaries.

use serde::{Deserialize, Serialize};

use crate::dataset::{AdtDataset, StressLevel, UnitObservations};
use crate::error::{AdtError, Result};
use crate::evaluation::relative_error;
use crate::fbm::{fbm_covariance, TimeGrid};
use crate::inference::{fit, FitMethod, FitOptions};
use crate::model::{AccelerationKind, ModelParams, ModelVariant, StressSpec};
use crate::rng::{derive_seed, substream, StreamDomain};
use rand::RngExt;
use rand_distr::StandardNormal;

/// A constant-stress test plan plus the data-generating truth.
///
/// Stress levels are in native units (e.g. °C), strictly increasing; every
/// level gets `n_units_per_level` units measured at
/// `{interval, 2·interval, …, n_measurements·interval}` hours. The highest
/// level anchors the stress normalization at 1, `normal_stress` at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDesign {
    pub stress_levels: Vec<f64>,
    pub normal_stress: f64,
    pub acceleration: AccelerationKind,
    pub n_units_per_level: usize,
    pub n_measurements: usize,
    pub inspection_interval: f64,
    pub theta_true: ModelParams,
    pub master_seed: u64,
}

impl SimDesign {
    #[allow(clippy::too_many_arguments)] // mirrors the struct fields one-to-one
    pub fn new(
        stress_levels: Vec<f64>,
        normal_stress: f64,
        acceleration: AccelerationKind,
        n_units_per_level: usize,
        n_measurements: usize,
        inspection_interval: f64,
        theta_true: ModelParams,
        master_seed: u64,
    ) -> Result<Self> {
        let design = Self {
            stress_levels,
            normal_stress,
            acceleration,
            n_units_per_level,
            n_measurements,
            inspection_interval,
            theta_true,
            master_seed,
        };
        design.validate()?;
        Ok(design)
    }

    // The negated comparison is deliberate: a NaN level must fail the check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.stress_levels.is_empty() {
            return Err(AdtError::InvalidParameter(
                "design needs at least one stress level".into(),
            ));
        }
        for w in self.stress_levels.windows(2) {
            if !(w[1] > w[0]) {
                return Err(AdtError::InvalidParameter(format!(
                    "stress levels must be strictly increasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        if self.n_units_per_level == 0 {
            return Err(AdtError::InvalidParameter(
                "need at least one unit per level".into(),
            ));
        }
        if self.n_measurements == 0 {
            return Err(AdtError::InvalidParameter(
                "need at least one measurement per unit".into(),
            ));
        }
        if !self.inspection_interval.is_finite() || self.inspection_interval <= 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "inspection interval must be positive, got {}",
                self.inspection_interval
            )));
        }
        // Anchors and per-level normalization must be well-defined.
        let spec = self.stress_spec()?;
        for &s in &self.stress_levels {
            spec.normalize(s)?;
        }
        Ok(())
    }

    /// Normalization anchors implied by the design: normal stress → 0,
    /// highest planned stress → 1.
    pub fn stress_spec(&self) -> Result<StressSpec> {
        let highest = *self.stress_levels.last().ok_or_else(|| {
            AdtError::InvalidParameter("design needs at least one stress level".into())
        })?;
        StressSpec::new(self.acceleration, self.normal_stress, highest)
    }

    /// The common measurement grid `{interval, …, M·interval}`.
    pub fn measurement_grid(&self) -> Result<TimeGrid> {
        TimeGrid::inspection(self.inspection_interval, self.n_measurements)
    }

    /// The same design with a different unit count, measurement count, and
    /// seed — the knobs a design sweep turns.
    pub fn resized(&self, n_units: usize, n_measurements: usize, master_seed: u64) -> Self {
        Self {
            n_units_per_level: n_units,
            n_measurements,
            master_seed,
            ..self.clone()
        }
    }
}

/// Generate one synthetic dataset from the design's ground truth.
///
/// For level `l` (0-based) and unit `i`, the random stream is
/// `substream(master_seed, UnitNoise, [l, i])`; the unit's drift draw comes
/// first, then its noise vector (exact Cholesky sampling of the memory
/// process on the measurement grid). Unit ids are `"1"…"N"` within each
/// level. Same design and seed → byte-identical CSV.
pub fn generate_dataset(design: &SimDesign) -> Result<AdtDataset> {
    design.validate()?;
    let spec = design.stress_spec()?;
    let grid = design.measurement_grid()?;
    let theta = &design.theta_true;
    let cov = fbm_covariance(&grid, theta.hurst(), theta.diffusion_var())?;
    let beta = theta.time_exp();
    let trend_shape: Vec<f64> = grid.times().iter().map(|t| t.powf(beta)).collect();

    let mut levels = Vec::with_capacity(design.stress_levels.len());
    for (l, &stress) in design.stress_levels.iter().enumerate() {
        let s_star = spec.normalize(stress)?;
        let (drift_mean, drift_sd) = theta.drift_distribution(s_star);
        let mut units = Vec::with_capacity(design.n_units_per_level);
        for i in 0..design.n_units_per_level {
            let mut rng = substream(
                design.master_seed,
                StreamDomain::UnitNoise,
                &[l as u64, i as u64],
            );
            // Drift is drawn even when its sd is zero so that fixed-drift
            // and random-drift truths consume the stream identically.
            let z: f64 = rng.sample(StandardNormal);
            let drift = drift_mean + drift_sd * z;
            let noise = cov.sample(&mut rng);
            let values: Vec<f64> = trend_shape
                .iter()
                .zip(&noise)
                .map(|(shape, n)| drift * shape + n)
                .collect();
            units.push(UnitObservations::new(
                (i + 1).to_string(),
                grid.clone(),
                values,
            )?);
        }
        levels.push(StressLevel::new(stress, units)?);
    }
    AdtDataset::new(levels, spec)
}

/// A design sweep: (units, measurements) combinations × replications,
/// each generated dataset fitted with every listed method.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// Stress plan, truth, and sweep master seed; its unit/measurement
    /// counts are overridden by each design point.
    pub base: SimDesign,
    /// `(n_units_per_level, n_measurements)` combinations.
    pub designs: Vec<(usize, usize)>,
    pub replications: usize,
    pub methods: Vec<FitMethod>,
    pub variant: ModelVariant,
    #[serde(default)]
    pub options: FitOptions,
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.designs.is_empty() {
            return Err(AdtError::InvalidParameter(
                "sweep needs at least one design".into(),
            ));
        }
        if self.replications == 0 {
            return Err(AdtError::InvalidParameter(
                "sweep needs at least one replication".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(AdtError::InvalidParameter(
                "sweep needs at least one fit method".into(),
            ));
        }
        self.options.validate()
    }
}

/// One fit attempt inside a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub n_units: usize,
    pub n_measurements: usize,
    pub replication: usize,
    pub method: FitMethod,
    /// `Ok`: fitted parameters with their log-likelihood and accuracy;
    /// `Err`: the failure message (the sweep keeps going).
    pub outcome: std::result::Result<SweepFit, String>,
}

/// The recorded essentials of one successful sweep fit.
#[derive(Debug, Clone, Serialize)]
pub struct SweepFit {
    pub theta: ModelParams,
    pub log_likelihood: f64,
    /// Summed componentwise relative error against the design truth
    /// (absent when the truth has a zero component or variants differ).
    pub relative_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-(design, method) aggregates over replications.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub n_units: usize,
    pub n_measurements: usize,
    pub method: FitMethod,
    pub n_fitted: usize,
    pub n_failed: usize,
    pub median_relative_error: Option<f64>,
    pub median_log_likelihood: Option<f64>,
    /// Fraction of replications where this method attained the best
    /// log-likelihood among all methods (ties within 1e-9 share the win).
    pub win_rate_log_likelihood: f64,
    /// Fraction of replications where this method attained the smallest
    /// relative error.
    pub win_rate_relative_error: f64,
}

/// Full sweep output: the raw per-fit rows plus per-cell aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub truth: ModelParams,
    pub replications: usize,
    pub runs: Vec<SweepRun>,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    /// The aggregate row for one design × method cell.
    pub fn cell(
        &self,
        n_units: usize,
        n_measurements: usize,
        method: FitMethod,
    ) -> Option<&SweepCell> {
        self.cells.iter().find(|c| {
            c.n_units == n_units && c.n_measurements == n_measurements && c.method == method
        })
    }
}

/// Run the sweep: for each design and replication, generate one dataset
/// (seeded by `derive_seed(base seed, Sweep, [design, replication])`) and
/// fit it with every method. Individual fit failures are recorded as rows
/// and excluded from medians; the sweep itself only fails on invalid
/// settings.
pub fn run_design_sweep(settings: &SweepSettings) -> Result<SweepReport> {
    settings.validate()?;
    let truth = settings.base.theta_true;
    let mut runs = Vec::new();
    for (d, &(n_units, n_meas)) in settings.designs.iter().enumerate() {
        for rep in 0..settings.replications {
            let seed = derive_seed(
                settings.base.master_seed,
                StreamDomain::Sweep,
                &[d as u64, rep as u64],
            );
            let design = settings.base.resized(n_units, n_meas, seed);
            let data = generate_dataset(&design)?;
            for &method in &settings.methods {
                let outcome = match fit(&data, settings.variant, method, &settings.options) {
                    Ok(result) => Ok(SweepFit {
                        relative_error: relative_error(&result.theta, &truth).ok(),
                        theta: result.theta,
                        log_likelihood: result.log_likelihood,
                        iterations: result.iterations,
                        converged: result.converged,
                    }),
                    Err(e) => Err(e.to_string()),
                };
                runs.push(SweepRun {
                    n_units,
                    n_measurements: n_meas,
                    replication: rep,
                    method,
                    outcome,
                });
            }
        }
    }

    let cells = aggregate_cells(settings, &runs);
    Ok(SweepReport {
        truth,
        replications: settings.replications,
        runs,
        cells,
    })
}

fn aggregate_cells(settings: &SweepSettings, runs: &[SweepRun]) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &(n_units, n_meas) in &settings.designs {
        for &method in &settings.methods {
            let mine: Vec<&SweepRun> = runs
                .iter()
                .filter(|r| {
                    r.n_units == n_units && r.n_measurements == n_meas && r.method == method
                })
                .collect();
            let fits: Vec<&SweepFit> = mine
                .iter()
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let res: Vec<f64> = fits.iter().filter_map(|f| f.relative_error).collect();
            let lls: Vec<f64> = fits.iter().map(|f| f.log_likelihood).collect();

            let mut ll_wins = 0usize;
            let mut re_wins = 0usize;
            for rep in 0..settings.replications {
                let group: Vec<&SweepRun> = runs
                    .iter()
                    .filter(|r| {
                        r.n_units == n_units && r.n_measurements == n_meas && r.replication == rep
                    })
                    .collect();
                let best_ll = group
                    .iter()
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .map(|f| f.log_likelihood)
                    .fold(f64::NEG_INFINITY, f64::max);
                let best_re = group
                    .iter()
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .filter_map(|f| f.relative_error)
                    .fold(f64::INFINITY, f64::min);
                if let Some(Ok(f)) = group
                    .iter()
                    .find(|r| r.method == method)
                    .map(|r| &r.outcome)
                {
                    if f.log_likelihood >= best_ll - 1e-9 {
                        ll_wins += 1;
                    }
                    if let Some(re) = f.relative_error {
                        if re <= best_re + 1e-9 {
                            re_wins += 1;
                        }
                    }
                }
            }

            cells.push(SweepCell {
                n_units,
                n_measurements: n_meas,
                method,
                n_fitted: fits.len(),
                n_failed: mine.len() - fits.len(),
                median_relative_error: median(&res),
                median_log_likelihood: median(&lls),
                win_rate_log_likelihood: ll_wins as f64 / settings.replications as f64,
                win_rate_relative_error: re_wins as f64 / settings.replications as f64,
            });
        }
    }
    cells
}

/// Median of a sample (mean of the central pair for even sizes);
/// `None` on an empty sample.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}
