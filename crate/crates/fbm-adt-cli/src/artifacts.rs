//! Artifact schemas and writers.
//!
//! Every artifact embeds the SHA-256 of the configuration file it was
//! produced from plus the effective master seed, so a report can always be
//! traced back to its inputs. JSON artifacts are pretty-printed with a
//! trailing newline; CSV artifacts carry `#` comment headers documenting
//! units (hours, native stress units such as °C, degradation units).
//! Identical config bytes and input data produce byte-identical artifacts.

use std::path::{Path, PathBuf};

use fbm_adt::dataset::AdtDataset;
use fbm_adt::evaluation::{CrossValPlan, ErReport};
use fbm_adt::inference::{FitMethod, FitResult};
use fbm_adt::model::{ModelParams, ModelVariant};
use fbm_adt::reliability::ReliabilityCurve;
use serde::{Deserialize, Serialize};

use crate::config::StressSection;
use crate::error::{CliError, CliResult};

/// Provenance stamp carried by every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStamp {
    pub config_sha256: String,
    pub master_seed: u64,
}

impl RunStamp {
    /// The stamp as CSV comment lines.
    pub fn csv_comment(&self) -> String {
        format!(
            "# config_sha256: {}\n# master_seed: {}\n",
            self.config_sha256, self.master_seed
        )
    }
}

// ---------------------------------------------------------------------
// Fit report
// ---------------------------------------------------------------------

/// `fit-report.json`: the complete outcome of one fit, self-contained
/// enough for the `reliability` subcommand to extrapolate from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    /// Schema tag, `fbm-adt/fit-report/v1`.
    pub schema: String,
    #[serde(flatten)]
    pub stamp: RunStamp,
    /// Stress normalization the fit used (needed to extrapolate later).
    pub stress: StressSection,
    pub variant: ModelVariant,
    pub method: FitMethod,
    /// Estimated parameters (standard-deviation scale in serialized form).
    pub theta: ModelParams,
    /// Observed-data (marginal) log-likelihood at `theta`.
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    /// Per-iteration parameter and log-likelihood trail.
    pub trace: Vec<TraceRow>,
    /// Per-unit drift posteriors (empty for fixed-drift variants).
    pub posteriors: Vec<PosteriorRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub theta: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorRow {
    /// Native stress of the unit's level.
    pub stress: f64,
    pub unit: String,
    pub mean: f64,
    pub sd: f64,
}

pub const FIT_REPORT_SCHEMA: &str = "fbm-adt/fit-report/v1";

impl FitReport {
    pub fn from_result(result: &FitResult, stress: StressSection, stamp: RunStamp) -> Self {
        Self {
            schema: FIT_REPORT_SCHEMA.to_string(),
            stamp,
            stress,
            variant: result.theta.variant(),
            method: result.method,
            theta: result.theta,
            log_likelihood: result.log_likelihood,
            aic: result.aic,
            n_params: result.n_params,
            iterations: result.iterations,
            converged: result.converged,
            warnings: result.warnings.clone(),
            trace: result
                .trace
                .iter()
                .map(|t| TraceRow {
                    iteration: t.iteration,
                    log_likelihood: t.log_likelihood,
                    theta: t.theta,
                })
                .collect(),
            posteriors: result
                .posteriors
                .iter()
                .map(|p| PosteriorRow {
                    stress: p.stress,
                    unit: p.unit_id.clone(),
                    mean: p.mean,
                    sd: p.sd,
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Artifact(format!("cannot read {}: {e}", path.display())))?;
        let report: FitReport = serde_json::from_str(&text)?;
        if report.schema != FIT_REPORT_SCHEMA {
            return Err(CliError::Artifact(format!(
                "{} has schema {:?}, expected {FIT_REPORT_SCHEMA:?}",
                path.display(),
                report.schema
            )));
        }
        Ok(report)
    }
}

// ---------------------------------------------------------------------
// Evaluate / crossval reports
// ---------------------------------------------------------------------

/// `evaluate-report.json`: all four variants fitted to one dataset, with
/// fit quality (log-likelihood, AIC) and degradation-band agreement
/// indices.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    /// Schema tag, `fbm-adt/evaluate-report/v1`.
    pub schema: String,
    #[serde(flatten)]
    pub stamp: RunStamp,
    pub method: FitMethod,
    pub ensemble_paths: usize,
    pub quantile: f64,
    pub rows: Vec<EvaluateRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateRow {
    pub variant: ModelVariant,
    pub n_params: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub theta: ModelParams,
    pub er: ErReport,
}

pub const EVALUATE_REPORT_SCHEMA: &str = "fbm-adt/evaluate-report/v1";

impl EvaluateReport {
    /// The companion CSV table: one row per variant.
    pub fn to_csv(&self, stamp: &RunStamp) -> String {
        let mut out = String::from(
            "# fbm-adt model comparison\n\
             # aic = -2*log_likelihood + 2*n_params (lower is better)\n\
             # er columns: mean/upper/lower degradation-band agreement (0 is perfect)\n",
        );
        out.push_str(&stamp.csv_comment());
        out.push_str("variant,n_params,log_likelihood,aic,er_mean,er_upper,er_lower\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.variant,
                row.n_params,
                row.log_likelihood,
                row.aic,
                row.er.er_mean,
                row.er.er_upper,
                row.er.er_lower
            ));
        }
        out
    }
}

/// `crossval-report.json`: hold-one-stress-out extrapolation results for
/// every requested plan × variant.
#[derive(Debug, Clone, Serialize)]
pub struct CrossvalReport {
    /// Schema tag, `fbm-adt/crossval-report/v1`.
    pub schema: String,
    #[serde(flatten)]
    pub stamp: RunStamp,
    pub method: FitMethod,
    pub ensemble_paths: usize,
    pub rows: Vec<CrossvalRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossvalRow {
    pub plan: CrossValPlan,
    /// Native stress of the held-out level.
    pub held_out_stress: f64,
    pub variant: ModelVariant,
    pub n_params: usize,
    /// Log-likelihood of the training fit (held-out level excluded).
    pub log_likelihood: f64,
    pub aic: f64,
    pub theta: ModelParams,
    /// Band agreement on the held-out level only.
    pub er: ErReport,
}

pub const CROSSVAL_REPORT_SCHEMA: &str = "fbm-adt/crossval-report/v1";

impl CrossvalReport {
    pub fn to_csv(&self, stamp: &RunStamp) -> String {
        let mut out = String::from(
            "# fbm-adt hold-one-stress-out extrapolation\n\
             # er columns score predictions on the held-out level (0 is perfect)\n",
        );
        out.push_str(&stamp.csv_comment());
        out.push_str(
            "plan,held_out_stress,variant,n_params,log_likelihood,aic,er_mean,er_upper,er_lower\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.plan,
                row.held_out_stress,
                row.variant,
                row.n_params,
                row.log_likelihood,
                row.aic,
                row.er.er_mean,
                row.er.er_upper,
                row.er.er_lower
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------

/// `dataset.csv`: measurement data with a documenting comment header.
pub fn dataset_csv(data: &AdtDataset, stamp: &RunStamp) -> String {
    let mut out = String::from(
        "# fbm-adt dataset\n\
         # schema: stress,unit,time,value\n\
         # units: stress native (e.g. degC), time hours, value degradation units\n",
    );
    out.push_str(&stamp.csv_comment());
    out.push_str(&data.to_csv_string());
    out
}

/// `residuals.csv`: per-observation trend residuals of a fit. The fitted
/// trend uses each unit's posterior-mean drift for random-drift variants
/// and the common drift estimate otherwise.
pub fn residuals_csv(data: &AdtDataset, result: &FitResult, stamp: &RunStamp) -> String {
    let mut out = String::from(
        "# fbm-adt residual diagnostics\n\
         # fitted_trend = (unit drift estimate) * exp(alpha * s_star) * time^beta\n\
         # units: stress native (e.g. degC), time hours, value/fitted_trend/residual \
         degradation units\n",
    );
    out.push_str(&stamp.csv_comment());
    out.push_str("stress,unit,time_hours,value,fitted_trend,residual\n");
    let stresses = data.normalized_stresses();
    let theta = &result.theta;
    for (idx, (l, unit)) in data.units().enumerate() {
        let drift = if theta.variant().has_random_drift() {
            result.posteriors[idx].mean
        } else {
            theta.drift_mean()
        };
        let stress = data.levels()[l].stress();
        let scale = (theta.stress_coef() * stresses[l]).exp();
        for (&t, &x) in unit.grid().times().iter().zip(unit.values()) {
            let trend = drift * scale * t.powf(theta.time_exp());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                stress,
                unit.unit_id(),
                t,
                x,
                trend,
                x - trend
            ));
        }
    }
    out
}

/// `reliability-curve.csv`: the extrapolated curve with provenance header.
pub fn reliability_csv(curve: &ReliabilityCurve, stamp: &RunStamp) -> String {
    let mut out = String::from(
        "# fbm-adt reliability extrapolation at the normal operating stress\n\
         # units: time hours; reliability is a probability\n",
    );
    out.push_str(&stamp.csv_comment());
    out.push_str(&curve.to_csv());
    out
}

// ---------------------------------------------------------------------
// SVG plot
// ---------------------------------------------------------------------

/// Render the reliability curve as a static SVG line plot. The output is
/// fully deterministic: same curve and stamp, same bytes.
pub fn reliability_svg(curve: &ReliabilityCurve, stamp: &RunStamp) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const ML: f64 = 70.0; // left margin
    const MR: f64 = 25.0;
    const MT: f64 = 45.0;
    const MB: f64 = 60.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;

    let t_max = curve
        .times()
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let x_of = |t: f64| ML + t / t_max * plot_w;
    let y_of = |r: f64| MT + (1.0 - r) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "  <desc>config_sha256={}; master_seed={}; n_paths={}</desc>\n",
        stamp.config_sha256,
        stamp.master_seed,
        curve.n_paths()
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">Reliability at the normal operating stress</text>\n",
        ML + plot_w / 2.0
    ));

    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        y0 = MT + plot_h,
        x1 = ML + plot_w
    ));
    svg.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        MT + plot_h
    ));

    // Y ticks every 0.2.
    for k in 0..=5 {
        let r = k as f64 * 0.2;
        let y = y_of(r);
        svg.push_str(&format!(
            "  <line x1=\"{x0}\" y1=\"{y}\" x2=\"{ML}\" y2=\"{y}\" stroke=\"black\"/>\n",
            x0 = ML - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{r:.1}</text>\n",
            x = ML - 9.0,
            ty = y + 4.0
        ));
        if k > 0 {
            svg.push_str(&format!(
                "  <line x1=\"{ML}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
                ML + plot_w
            ));
        }
    }

    // X ticks: six round-valued ticks.
    let tick_step = nice_step(t_max / 5.0);
    let mut t = 0.0;
    while t <= t_max * (1.0 + 1e-9) {
        let x = x_of(t);
        let y0 = MT + plot_h;
        svg.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{t}</text>\n",
            y0 + 20.0
        ));
        t += tick_step;
    }

    // Axis labels.
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">time (hours)</text>\n",
        ML + plot_w / 2.0,
        H - 15.0
    ));
    svg.push_str(&format!(
        "  <text x=\"20\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {y})\">reliability</text>\n",
        (MT + plot_h / 2.0),
        y = MT + plot_h / 2.0
    ));

    // The curve itself.
    let points: Vec<String> = curve
        .times()
        .iter()
        .zip(curve.r_values())
        .map(|(&t, &r)| format!("{},{}", x_of(t), y_of(r)))
        .collect();
    svg.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Round an axis step to 1/2/5 × 10^k.
fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.abs().max(f64::MIN_POSITIVE).log10().floor());
    let unit = raw / mag;
    let nice = if unit <= 1.0 {
        1.0
    } else if unit <= 2.0 {
        2.0
    } else if unit <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

// ---------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Artifact(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Artifact(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
