//! The TOML run configuration shared by all subcommands.
//!
//! One file drives a whole analysis: stress normalization anchors, the
//! model variant and estimator, Monte-Carlo settings, and (for synthetic
//! studies) the data-generating design. Two invariants hold throughout:
//!
//! * every random procedure in a run derives from the single
//!   `master_seed`, so reruns reproduce artifacts byte for byte;
//! * a parsed configuration serializes back to an equivalent file
//!   (lossless round-trip), which keeps archived configs authoritative.
//!
//! Unknown keys are rejected everywhere — a typo fails fast instead of
//! silently falling back to a default.

use std::path::{Path, PathBuf};

use fbm_adt::evaluation::CrossValPlan;
use fbm_adt::inference::{FitMethod, FitOptions, SearchBounds};
use fbm_adt::model::{AccelerationKind, ModelParams, ModelVariant, StressSpec};
use fbm_adt::reliability::McConfig;
use fbm_adt::simulator::SimDesign;
use fbm_adt::TimeGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Default number of uniform Monte-Carlo steps when `[mc] step` is absent.
const DEFAULT_MC_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed from which every random stream in the run is derived
    /// (`--seed` overrides it).
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// Artifact directory, created if missing (`--out` overrides it).
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Stress normalization anchors; required by every subcommand.
    pub stress: StressSection,
    #[serde(default)]
    pub fit: FitSection,
    /// Monte-Carlo settings; required by the `reliability` subcommand.
    #[serde(default)]
    pub mc: Option<McSection>,
    /// Synthetic test plan; required by the `simulate` subcommand.
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub crossval: CrossvalSection,
}

fn default_master_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("artifacts")
}

impl RunConfig {
    /// Read and parse a TOML config; also returns the SHA-256 of the raw
    /// file bytes, which every artifact embeds for provenance.
    pub fn load(path: &Path) -> CliResult<(Self, String)> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::Config(format!("{} is not valid UTF-8", path.display())))?;
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok((config, sha256_hex(&bytes)))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.stress.spec()?;
        self.fit.options().validate()?;
        if let Some(mc) = &self.mc {
            mc.validate()?;
        }
        if let Some(sim) = &self.simulate {
            sim.validate(&self.stress)?;
        }
        self.evaluate.validate()?;
        self.crossval.validate()?;
        Ok(())
    }
}

/// `[stress]`: how native stress values (e.g. °C) map to the normalized
/// scale — `normal` → 0 and `highest` → 1 under the chosen acceleration
/// law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressSection {
    /// `arrhenius` (temperature), `power-law`, or `exponential`.
    pub acceleration: AccelerationKind,
    /// Normal operating stress in native units.
    pub normal: f64,
    /// Highest test stress in native units.
    pub highest: f64,
}

impl StressSection {
    pub fn spec(&self) -> CliResult<StressSpec> {
        Ok(StressSpec::new(
            self.acceleration,
            self.normal,
            self.highest,
        )?)
    }
}

/// `[fit]`: estimator settings. `epsilon` is the relative-change stopping
/// threshold of the EM iteration; `theta0` optionally overrides the
/// two-step starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub variant: ModelVariant,
    pub method: FitMethod,
    pub epsilon: f64,
    pub max_iter: usize,
    pub bounds: SearchBounds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<ModelParams>,
}

impl Default for FitSection {
    fn default() -> Self {
        let options = FitOptions::default();
        Self {
            variant: ModelVariant::Full,
            method: FitMethod::Em,
            epsilon: options.epsilon,
            max_iter: options.max_iter,
            bounds: options.bounds,
            theta0: None,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            bounds: self.bounds,
            theta0: self.theta0,
        }
    }
}

/// `[mc]`: Monte-Carlo extrapolation settings. The simulation grid is
/// uniform from 0 to `horizon` hours; `step` defaults to `horizon / 2000`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_mc_paths")]
    pub n_paths: usize,
    /// Simulation horizon in hours.
    pub horizon: f64,
    /// Failure threshold in degradation units.
    pub x_th: f64,
    /// Grid step in hours (defaults to `horizon / 2000`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

fn default_mc_paths() -> usize {
    10_000
}

impl McSection {
    pub fn validate(&self) -> CliResult<()> {
        self.grid()?;
        if self.n_paths == 0 {
            return Err(CliError::Config("[mc] n_paths must be at least 1".into()));
        }
        if !self.x_th.is_finite() || self.x_th <= 0.0 {
            return Err(CliError::Config(format!(
                "[mc] x_th must be positive, got {}",
                self.x_th
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> CliResult<TimeGrid> {
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return Err(CliError::Config(format!(
                "[mc] horizon must be positive, got {}",
                self.horizon
            )));
        }
        let step = match self.step {
            Some(step) if step.is_finite() && step > 0.0 && step <= self.horizon => step,
            Some(step) => {
                return Err(CliError::Config(format!(
                    "[mc] step must lie in (0, horizon], got {step}"
                )))
            }
            None => self.horizon / DEFAULT_MC_STEPS as f64,
        };
        let n_steps = (self.horizon / step).round().max(1.0) as usize;
        Ok(TimeGrid::uniform_from_zero(step, n_steps)?)
    }

    pub fn mc_config(&self, master_seed: u64) -> CliResult<McConfig> {
        Ok(McConfig::new(
            self.n_paths,
            self.grid()?,
            self.x_th,
            master_seed,
        )?)
    }
}

/// `[simulate]`: the synthetic constant-stress test plan. Units at every
/// level are measured at `{interval, 2·interval, …}` hours; the truth is
/// given on the standard-deviation scale (`drift_sd`, `diffusion_sd`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Accelerated stress levels in native units, strictly increasing.
    pub stress_levels: Vec<f64>,
    pub n_units_per_level: usize,
    pub n_measurements: usize,
    /// Hours between consecutive inspections.
    pub inspection_interval: f64,
    /// Data-generating parameters.
    pub theta_true: ModelParams,
}

impl SimulateSection {
    pub fn validate(&self, stress: &StressSection) -> CliResult<()> {
        self.design(stress, 0).map(|_| ())
    }

    /// Assemble the design, checking that the `[stress]` anchors agree
    /// with the planned levels (the highest level must be the `highest`
    /// anchor, otherwise fitting the simulated data would silently use a
    /// different normalization than generation did).
    pub fn design(&self, stress: &StressSection, master_seed: u64) -> CliResult<SimDesign> {
        match self.stress_levels.last() {
            Some(&top) if top == stress.highest => {}
            Some(&top) => {
                return Err(CliError::Config(format!(
                    "[simulate] highest stress level {top} must equal the [stress] highest \
                     anchor {}",
                    stress.highest
                )))
            }
            None => {
                return Err(CliError::Config(
                    "[simulate] stress_levels must not be empty".into(),
                ))
            }
        }
        Ok(SimDesign::new(
            self.stress_levels.clone(),
            stress.normal,
            stress.acceleration,
            self.n_units_per_level,
            self.n_measurements,
            self.inspection_interval,
            self.theta_true,
            master_seed,
        )?)
    }
}

/// `[evaluate]`: settings for the four-variant comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Simulated paths per stress level behind the band indices.
    pub ensemble_paths: usize,
    /// Band quantile: upper band at `1 − quantile`, lower at `quantile`.
    pub quantile: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            ensemble_paths: 1000,
            quantile: 0.05,
        }
    }
}

impl EvaluateSection {
    pub fn validate(&self) -> CliResult<()> {
        if self.ensemble_paths == 0 {
            return Err(CliError::Config(
                "[evaluate] ensemble_paths must be at least 1".into(),
            ));
        }
        if !(self.quantile > 0.0 && self.quantile < 0.5) {
            return Err(CliError::Config(format!(
                "[evaluate] quantile must lie in (0, 0.5), got {}",
                self.quantile
            )));
        }
        Ok(())
    }
}

/// `[crossval]`: hold-one-stress-out extrapolation checks. Each listed
/// plan is run for every model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossvalSection {
    pub plans: Vec<CrossValPlan>,
    /// Simulated paths behind the held-out-level band indices.
    pub ensemble_paths: usize,
}

impl Default for CrossvalSection {
    fn default() -> Self {
        Self {
            plans: vec![CrossValPlan::LowestStress, CrossValPlan::HighestStress],
            ensemble_paths: 1000,
        }
    }
}

impl CrossvalSection {
    pub fn validate(&self) -> CliResult<()> {
        if self.plans.is_empty() {
            return Err(CliError::Config(
                "[crossval] plans must not be empty".into(),
            ));
        }
        if self.ensemble_paths == 0 {
            return Err(CliError::Config(
                "[crossval] ensemble_paths must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
