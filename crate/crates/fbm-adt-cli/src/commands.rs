//! The five subcommand implementations.
//!
//! Each command reads the resolved [`RunConfig`], does its work through the
//! library, writes artifacts into the configured output directory, and
//! prints one `wrote <path>` line per artifact plus a one-line summary.

use std::path::Path;

use fbm_adt::dataset::AdtDataset;
use fbm_adt::evaluation::{cross_validate, er_indices};
use fbm_adt::inference::fit;
use fbm_adt::model::ModelVariant;
use fbm_adt::reliability::{reliability_curve, simulate_observation_ensemble, PathEnsemble};
use fbm_adt::rng::{derive_seed, StreamDomain};
use fbm_adt::simulator::generate_dataset;

use crate::artifacts::{
    self, CrossvalReport, CrossvalRow, EvaluateReport, EvaluateRow, FitReport, RunStamp,
    CROSSVAL_REPORT_SCHEMA, EVALUATE_REPORT_SCHEMA,
};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Generate a synthetic dataset from the `[simulate]` plan and write it as
/// `dataset.csv`.
pub fn run_simulate(config: &RunConfig, stamp: &RunStamp) -> CliResult<()> {
    let section = config.simulate.as_ref().ok_or_else(|| {
        CliError::Config("the simulate subcommand needs a [simulate] section".into())
    })?;
    let design = section.design(&config.stress, config.master_seed)?;
    let data = generate_dataset(&design)?;
    let csv = artifacts::dataset_csv(&data, stamp);
    let path = artifacts::write_text(&config.out_dir, "dataset.csv", &csv)?;
    println!("wrote {}", path.display());
    println!(
        "simulated {} units across {} stress levels, {} measurements each",
        design.n_units_per_level * design.stress_levels.len(),
        design.stress_levels.len(),
        design.n_measurements
    );
    Ok(())
}

/// Fit the configured variant to a dataset; write `fit-report.json` and
/// `residuals.csv`.
pub fn run_fit(config: &RunConfig, stamp: &RunStamp, data_path: &Path) -> CliResult<()> {
    let data = read_dataset(config, data_path)?;
    let result = fit(
        &data,
        config.fit.variant,
        config.fit.method,
        &config.fit.options(),
    )?;
    let report = FitReport::from_result(&result, config.stress, stamp.clone());

    let json_path = artifacts::write_json(&config.out_dir, "fit-report.json", &report)?;
    println!("wrote {}", json_path.display());
    let residuals = artifacts::residuals_csv(&data, &result, stamp);
    let csv_path = artifacts::write_text(&config.out_dir, "residuals.csv", &residuals)?;
    println!("wrote {}", csv_path.display());

    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "fit {} by {}: log-likelihood {:.4}, aic {:.4}, {} iterations, converged: {}",
        report.variant,
        report.method,
        report.log_likelihood,
        report.aic,
        report.iterations,
        report.converged
    );
    Ok(())
}

/// Extrapolate a fitted model to the normal operating stress; write the
/// reliability curve as CSV and SVG.
pub fn run_reliability(config: &RunConfig, stamp: &RunStamp, params_path: &Path) -> CliResult<()> {
    let report = FitReport::load(params_path)?;
    let mc = config.mc.as_ref().ok_or_else(|| {
        CliError::Config("the reliability subcommand needs an [mc] section".into())
    })?;
    let cfg = mc.mc_config(config.master_seed)?;
    // The fit report records the anchors its stress coefficient was
    // estimated under; extrapolation must use the same normalization.
    let s_star = report.stress.spec()?.normalize(report.stress.normal)?;
    let curve = reliability_curve(&report.theta, s_star, &cfg, cfg.grid())?;

    let csv = artifacts::reliability_csv(&curve, stamp);
    let csv_path = artifacts::write_text(&config.out_dir, "reliability-curve.csv", &csv)?;
    println!("wrote {}", csv_path.display());
    let svg = artifacts::reliability_svg(&curve, stamp);
    let svg_path = artifacts::write_text(&config.out_dir, "reliability-curve.svg", &svg)?;
    println!("wrote {}", svg_path.display());

    let r_end = curve.r_values().last().copied().unwrap_or(f64::NAN);
    println!(
        "reliability at {} h under stress {}: {:.4}{} ({} paths, censored fraction {:.4})",
        cfg.grid().last(),
        report.stress.normal,
        r_end,
        if curve.short_horizon() {
            " [short horizon]"
        } else {
            ""
        },
        curve.n_paths(),
        curve.censored_fraction()
    );
    Ok(())
}

/// Fit all four model variants and score each against simulated
/// degradation bands; write `evaluate-report.json` and `evaluate-table.csv`.
pub fn run_evaluate(config: &RunConfig, stamp: &RunStamp, data_path: &Path) -> CliResult<()> {
    let data = read_dataset(config, data_path)?;
    let stresses = data.normalized_stresses();
    let options = config.fit.options();
    let mut rows = Vec::with_capacity(ModelVariant::ALL.len());
    for (v_idx, variant) in ModelVariant::ALL.into_iter().enumerate() {
        let result = fit(&data, variant, config.fit.method, &options)?;
        let mut ensembles: Vec<PathEnsemble> = Vec::with_capacity(data.n_levels());
        for (l_idx, level) in data.levels().iter().enumerate() {
            let seed = derive_seed(
                config.master_seed,
                StreamDomain::Ensemble,
                &[v_idx as u64, l_idx as u64],
            );
            ensembles.push(simulate_observation_ensemble(
                &result.theta,
                stresses[l_idx],
                level.common_grid()?,
                config.evaluate.ensemble_paths,
                seed,
            )?);
        }
        let er = er_indices(&data, &ensembles, config.evaluate.quantile)?;
        rows.push(EvaluateRow {
            variant,
            n_params: result.n_params,
            log_likelihood: result.log_likelihood,
            aic: result.aic,
            iterations: result.iterations,
            converged: result.converged,
            theta: result.theta,
            er,
        });
    }

    let report = EvaluateReport {
        schema: EVALUATE_REPORT_SCHEMA.to_string(),
        stamp: stamp.clone(),
        method: config.fit.method,
        ensemble_paths: config.evaluate.ensemble_paths,
        quantile: config.evaluate.quantile,
        rows,
    };
    let json_path = artifacts::write_json(&config.out_dir, "evaluate-report.json", &report)?;
    println!("wrote {}", json_path.display());
    let csv_path =
        artifacts::write_text(&config.out_dir, "evaluate-table.csv", &report.to_csv(stamp))?;
    println!("wrote {}", csv_path.display());

    let best = report
        .rows
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .expect("four rows");
    println!("lowest aic: {} ({:.4})", best.variant, best.aic);
    Ok(())
}

/// Hold-one-stress-out extrapolation for every configured plan and all
/// four variants; write `crossval-report.json` and `crossval-table.csv`.
pub fn run_crossval(config: &RunConfig, stamp: &RunStamp, data_path: &Path) -> CliResult<()> {
    let data = read_dataset(config, data_path)?;
    let options = config.fit.options();
    let mut rows = Vec::new();
    for (p_idx, &plan) in config.crossval.plans.iter().enumerate() {
        for (v_idx, variant) in ModelVariant::ALL.into_iter().enumerate() {
            let seed = derive_seed(
                config.master_seed,
                StreamDomain::Ensemble,
                &[p_idx as u64, v_idx as u64, 0],
            );
            let outcome = cross_validate(
                &data,
                variant,
                config.fit.method,
                &options,
                plan,
                config.crossval.ensemble_paths,
                seed,
            )?;
            rows.push(CrossvalRow {
                plan,
                held_out_stress: outcome.held_out_stress,
                variant,
                n_params: outcome.fit.n_params,
                log_likelihood: outcome.fit.log_likelihood,
                aic: outcome.fit.aic,
                theta: outcome.fit.theta,
                er: outcome.er,
            });
        }
    }

    let report = CrossvalReport {
        schema: CROSSVAL_REPORT_SCHEMA.to_string(),
        stamp: stamp.clone(),
        method: config.fit.method,
        ensemble_paths: config.crossval.ensemble_paths,
        rows,
    };
    let json_path = artifacts::write_json(&config.out_dir, "crossval-report.json", &report)?;
    println!("wrote {}", json_path.display());
    let csv_path =
        artifacts::write_text(&config.out_dir, "crossval-table.csv", &report.to_csv(stamp))?;
    println!("wrote {}", csv_path.display());

    let best = report
        .rows
        .iter()
        .min_by(|a, b| a.er.er_mean.total_cmp(&b.er.er_mean))
        .expect("at least one row");
    println!(
        "best held-out band agreement: {} under {} (er_mean {:.4})",
        best.variant, best.plan, best.er.er_mean
    );
    Ok(())
}

fn read_dataset(config: &RunConfig, path: &Path) -> CliResult<AdtDataset> {
    let spec = config.stress.spec()?;
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Artifact(format!("cannot read {}: {e}", path.display())))?;
    Ok(AdtDataset::from_csv_reader(file, spec)?)
}
