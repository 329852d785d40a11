//! Model comparison and fit-quality metrics: information criterion,
//! parameter relative error, degradation-band agreement indices, and a
//! hold-one-stress-level-out cross-validation driver.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::AdtDataset;
use crate::error::{AdtError, Result};
use crate::inference::{fit, FitMethod, FitOptions, FitResult};
use crate::model::{ModelParams, ModelVariant};
use crate::reliability::{simulate_observation_ensemble, PathEnsemble};

/// Default quantile level for the band indices (bands at 5% / 95%).
pub const DEFAULT_ER_QUANTILE: f64 = 0.05;

/// Observed reference values smaller than this (in absolute value) are
/// skipped when forming relative errors — they would blow the ratio up on
/// what is numerically a zero.
pub const OBSERVED_REFERENCE_FLOOR: f64 = 1e-9;

/// Akaike information criterion: `−2·l_max + 2·n_params`.
pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * n_params as f64
}

/// Summed componentwise relative error of an estimate against the truth,
/// over the variant's free parameters only. Standard-deviation scale is
/// used for the two spread parameters.
///
/// Zero is attained exactly when every free component matches; each term is
/// `|θ̂_j − θ_j| / |θ_j|`, so the result is scale-free per component.
pub fn relative_error(estimate: &ModelParams, truth: &ModelParams) -> Result<f64> {
    if estimate.variant() != truth.variant() {
        return Err(AdtError::InvalidParameter(format!(
            "cannot compare a {} estimate against a {} truth",
            estimate.variant(),
            truth.variant()
        )));
    }
    let pairs = free_components(estimate)
        .into_iter()
        .zip(free_components(truth));
    let mut total = 0.0;
    for (hat, true_value) in pairs {
        if true_value == 0.0 {
            return Err(AdtError::UndefinedRelativeError(
                "a true parameter component is zero; its relative error is undefined".into(),
            ));
        }
        total += (hat - true_value).abs() / true_value.abs();
    }
    Ok(total)
}

/// The variant's free parameters, spread parameters on sd scale.
fn free_components(theta: &ModelParams) -> Vec<f64> {
    let mut out = vec![theta.drift_mean()];
    if theta.variant().has_random_drift() {
        out.push(theta.drift_sd());
    }
    out.push(theta.stress_coef());
    out.push(theta.time_exp());
    out.push(theta.diffusion_sd());
    if theta.variant().estimates_memory() {
        out.push(theta.hurst().value());
    }
    out
}

/// Band-agreement indices for one stress level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelEr {
    pub stress: f64,
    pub er_mean: f64,
    pub er_upper: f64,
    pub er_lower: f64,
    /// Terms dropped at this level because the observed reference was ~0.
    pub skipped_terms: usize,
}

/// Degradation-band agreement between observed data and a simulated
/// ensemble: relative errors of the cross-unit mean against the ensemble
/// mean, of the cross-unit max against the upper quantile band, and of the
/// cross-unit min against the lower band — per level and overall.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErReport {
    pub levels: Vec<LevelEr>,
    pub er_mean: f64,
    pub er_upper: f64,
    pub er_lower: f64,
    pub skipped_terms: usize,
}

struct ErAccumulator {
    sum: f64,
    count: usize,
}

impl ErAccumulator {
    fn new() -> Self {
        Self { sum: 0.0, count: 0 }
    }

    fn add(&mut self, observed: f64, predicted: f64, skipped: &mut usize) {
        if observed.abs() < OBSERVED_REFERENCE_FLOOR {
            *skipped += 1;
        } else {
            self.sum += (predicted - observed).abs() / observed.abs();
            self.count += 1;
        }
    }

    fn mean(&self, what: &str, stress: f64) -> Result<f64> {
        if self.count == 0 {
            return Err(AdtError::Estimation(format!(
                "every {what} reference at stress level {stress} is numerically zero; \
                 the band index is undefined there"
            )));
        }
        Ok(self.sum / self.count as f64)
    }
}

/// Compare observed degradation against simulated ensembles, one ensemble
/// per stress level (in level order), with bands at
/// `quantile_level`/`1 − quantile_level`.
///
/// Each level needs its units on a common grid, and the ensemble must be
/// simulated on that same grid. Observed references below
/// [`OBSERVED_REFERENCE_FLOOR`] are skipped and counted.
pub fn er_indices(
    data: &AdtDataset,
    ensembles: &[PathEnsemble],
    quantile_level: f64,
) -> Result<ErReport> {
    if ensembles.len() != data.n_levels() {
        return Err(AdtError::InvalidParameter(format!(
            "need one simulated ensemble per stress level: {} levels, {} ensembles",
            data.n_levels(),
            ensembles.len()
        )));
    }
    if !(quantile_level > 0.0 && quantile_level < 0.5) {
        return Err(AdtError::InvalidParameter(format!(
            "band quantile level must lie in (0, 0.5), got {quantile_level}"
        )));
    }

    let mut levels = Vec::with_capacity(data.n_levels());
    let mut skipped_total = 0;
    for (level, ensemble) in data.levels().iter().zip(ensembles) {
        let grid = level.common_grid()?;
        if ensemble.grid() != grid {
            return Err(AdtError::GridAlignment(format!(
                "ensemble for stress level {} is not on the level's measurement grid",
                level.stress()
            )));
        }
        let pre_mean = ensemble.pointwise_mean();
        let pre_upper = ensemble.pointwise_quantile(1.0 - quantile_level)?;
        let pre_lower = ensemble.pointwise_quantile(quantile_level)?;

        let mut acc_mean = ErAccumulator::new();
        let mut acc_upper = ErAccumulator::new();
        let mut acc_lower = ErAccumulator::new();
        let mut skipped = 0;
        let n_units = level.n_units() as f64;
        for j in 0..grid.len() {
            let column = level.units().iter().map(|u| u.values()[j]);
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            for v in column {
                sum += v;
                max = max.max(v);
                min = min.min(v);
            }
            acc_mean.add(sum / n_units, pre_mean[j], &mut skipped);
            acc_upper.add(max, pre_upper[j], &mut skipped);
            acc_lower.add(min, pre_lower[j], &mut skipped);
        }
        levels.push(LevelEr {
            stress: level.stress(),
            er_mean: acc_mean.mean("cross-unit mean", level.stress())?,
            er_upper: acc_upper.mean("cross-unit max", level.stress())?,
            er_lower: acc_lower.mean("cross-unit min", level.stress())?,
            skipped_terms: skipped,
        });
        skipped_total += skipped;
    }

    let k = levels.len() as f64;
    Ok(ErReport {
        er_mean: levels.iter().map(|l| l.er_mean).sum::<f64>() / k,
        er_upper: levels.iter().map(|l| l.er_upper).sum::<f64>() / k,
        er_lower: levels.iter().map(|l| l.er_lower).sum::<f64>() / k,
        skipped_terms: skipped_total,
        levels,
    })
}

/// Which stress level to hold out for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossValPlan {
    LowestStress,
    HighestStress,
}

impl CrossValPlan {
    /// Index of the held-out level (levels are stored in ascending stress).
    pub fn held_out_index(&self, data: &AdtDataset) -> usize {
        match self {
            CrossValPlan::LowestStress => 0,
            CrossValPlan::HighestStress => data.n_levels() - 1,
        }
    }
}

impl fmt::Display for CrossValPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrossValPlan::LowestStress => "lowest_stress",
            CrossValPlan::HighestStress => "highest_stress",
        })
    }
}

impl FromStr for CrossValPlan {
    type Err = AdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lowest_stress" | "lowest" => Ok(CrossValPlan::LowestStress),
            "highest_stress" | "highest" => Ok(CrossValPlan::HighestStress),
            other => Err(AdtError::InvalidParameter(format!(
                "unknown cross-validation plan {other:?} (expected lowest_stress or highest_stress)"
            ))),
        }
    }
}

/// Outcome of one hold-one-level-out run: the training fit plus the band
/// indices scored on the held-out level.
#[derive(Debug, Clone, Serialize)]
pub struct CrossValReport {
    pub plan: CrossValPlan,
    pub held_out_stress: f64,
    pub fit: FitResult,
    pub er: ErReport,
}

/// Fit on all levels except the planned one, simulate an ensemble at the
/// held-out stress (normalized against the original full-design anchors),
/// and score the band indices on the held-out level only.
pub fn cross_validate(
    data: &AdtDataset,
    variant: ModelVariant,
    method: FitMethod,
    options: &FitOptions,
    plan: CrossValPlan,
    n_paths: usize,
    master_seed: u64,
) -> Result<CrossValReport> {
    if data.n_levels() < 2 {
        return Err(AdtError::Dataset(
            "cross-validation needs at least two stress levels".into(),
        ));
    }
    let held = plan.held_out_index(data);
    let train = data.without_level(held)?;
    let fit_result = fit(&train, variant, method, options)?;

    let held_view = data.only_level(held)?;
    let level = &held_view.levels()[0];
    let grid = level.common_grid()?.clone();
    let s_star = held_view.normalized_stresses()[0];
    let ensemble =
        simulate_observation_ensemble(&fit_result.theta, s_star, &grid, n_paths, master_seed)?;
    let er = er_indices(&held_view, &[ensemble], DEFAULT_ER_QUANTILE)?;

    Ok(CrossValReport {
        plan,
        held_out_stress: level.stress(),
        fit: fit_result,
        er,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{StressLevel, UnitObservations};
    use crate::fbm::{HurstExponent, TimeGrid};
    use crate::model::{AccelerationKind, StressSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn aic_arithmetic() {
        assert_abs_diff_eq!(aic(0.0, 1), 2.0);
        assert_abs_diff_eq!(aic(532.326, 6), -1052.65, epsilon = 0.01);
        assert_abs_diff_eq!(aic(479.483, 4), -950.966, epsilon = 0.01);
    }

    fn m0(
        drift_mean: f64,
        drift_sd: f64,
        alpha: f64,
        beta: f64,
        sigma: f64,
        hurst: f64,
    ) -> ModelParams {
        ModelParams::new(
            ModelVariant::Full,
            drift_mean,
            drift_sd * drift_sd,
            alpha,
            beta,
            sigma * sigma,
            HurstExponent::new(hurst).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn relative_error_identity_is_zero() {
        let theta = m0(1e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        assert_abs_diff_eq!(relative_error(&theta, &theta).unwrap(), 0.0);
    }

    #[test]
    fn ten_percent_inflation_counts_free_params() {
        let truth = m0(1e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        let inflated = m0(1.1e-5, 2.2e-6, 2.75, 1.65, 0.11, 0.33);
        assert_relative_eq!(
            relative_error(&inflated, &truth).unwrap(),
            0.6,
            epsilon = 1e-9
        );

        let truth_m3 = ModelParams::new(
            ModelVariant::Basic,
            1e-5,
            0.0,
            2.5,
            1.5,
            0.01,
            HurstExponent::BROWNIAN,
        )
        .unwrap();
        let hat_m3 = ModelParams::new(
            ModelVariant::Basic,
            1.1e-5,
            0.0,
            2.75,
            1.65,
            0.0121,
            HurstExponent::BROWNIAN,
        )
        .unwrap();
        assert_relative_eq!(
            relative_error(&hat_m3, &truth_m3).unwrap(),
            0.4,
            epsilon = 1e-9
        );
    }

    #[test]
    fn scale_equivariance_per_component() {
        let truth = m0(1e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        let hat = m0(2e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        let truth2 = m0(2e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        let hat2 = m0(4e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        assert_relative_eq!(
            relative_error(&hat, &truth).unwrap(),
            relative_error(&hat2, &truth2).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_truth_component_is_rejected() {
        let truth = m0(1e-5, 2e-6, 0.0, 1.5, 0.1, 0.3);
        let hat = m0(1e-5, 2e-6, 1.0, 1.5, 0.1, 0.3);
        assert!(matches!(
            relative_error(&hat, &truth),
            Err(AdtError::UndefinedRelativeError(_))
        ));
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let truth = m0(1e-5, 2e-6, 2.5, 1.5, 0.1, 0.3);
        let other = ModelParams::new(
            ModelVariant::Basic,
            1e-5,
            0.0,
            2.5,
            1.5,
            0.01,
            HurstExponent::BROWNIAN,
        )
        .unwrap();
        assert!(matches!(
            relative_error(&other, &truth),
            Err(AdtError::InvalidParameter(_))
        ));
    }

    fn one_level_dataset(stress: f64, unit_values: &[&[f64]], times: &[f64]) -> AdtDataset {
        let spec = StressSpec::new(AccelerationKind::Arrhenius, 40.0, 120.0).unwrap();
        let grid = TimeGrid::new(times.to_vec()).unwrap();
        let units: Vec<UnitObservations> = unit_values
            .iter()
            .enumerate()
            .map(|(i, vals)| {
                UnitObservations::new((i + 1).to_string(), grid.clone(), vals.to_vec()).unwrap()
            })
            .collect();
        AdtDataset::new(vec![StressLevel::new(stress, units).unwrap()], spec).unwrap()
    }

    fn ensemble_of(times: &[f64], paths: &[&[f64]]) -> PathEnsemble {
        let grid = TimeGrid::new(times.to_vec()).unwrap();
        PathEnsemble::new(grid, paths.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn matching_ensemble_mean_gives_zero_er_mean() {
        let data = one_level_dataset(80.0, &[&[1.0, 3.0], &[3.0, 5.0]], &[100.0, 200.0]);
        let ens = ensemble_of(&[100.0, 200.0], &[&[2.0, 4.0], &[2.0, 4.0]]);
        let report = er_indices(&data, &[ens], 0.05).unwrap();
        assert_abs_diff_eq!(report.er_mean, 0.0);
        // Both ensemble bands collapse onto [2,4]; observed max [3,5], min [1,3].
        assert_relative_eq!(
            report.er_upper,
            (1.0 / 3.0 + 1.0 / 5.0) / 2.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            report.er_lower,
            (1.0 / 1.0 + 1.0 / 3.0) / 2.0,
            epsilon = 1e-12
        );
        assert_eq!(report.skipped_terms, 0);
    }

    #[test]
    fn single_point_example() {
        let data = one_level_dataset(80.0, &[&[2.0]], &[100.0]);
        let ens = ensemble_of(&[100.0], &[&[1.0]]);
        let report = er_indices(&data, &[ens], 0.05).unwrap();
        assert_abs_diff_eq!(report.er_mean, 0.5);
        assert_abs_diff_eq!(report.er_upper, 0.5);
        assert_abs_diff_eq!(report.er_lower, 0.5);
    }

    #[test]
    fn near_zero_references_are_skipped_and_counted() {
        let data = one_level_dataset(80.0, &[&[0.0, 2.0]], &[100.0, 200.0]);
        let ens = ensemble_of(&[100.0, 200.0], &[&[0.5, 1.0]]);
        let report = er_indices(&data, &[ens], 0.05).unwrap();
        // All three observed references vanish at the first time.
        assert_eq!(report.skipped_terms, 3);
        assert_abs_diff_eq!(report.er_mean, 0.5);
    }

    #[test]
    fn all_zero_level_is_an_error() {
        let data = one_level_dataset(80.0, &[&[0.0, 0.0]], &[100.0, 200.0]);
        let ens = ensemble_of(&[100.0, 200.0], &[&[0.5, 1.0]]);
        assert!(matches!(
            er_indices(&data, &[ens], 0.05),
            Err(AdtError::Estimation(_))
        ));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let data = one_level_dataset(80.0, &[&[1.0, 2.0]], &[100.0, 200.0]);
        let ens = ensemble_of(&[100.0, 250.0], &[&[1.0, 2.0]]);
        assert!(matches!(
            er_indices(&data, &[ens], 0.05),
            Err(AdtError::GridAlignment(_))
        ));
    }

    #[test]
    fn ensemble_count_must_match_levels() {
        let data = one_level_dataset(80.0, &[&[1.0, 2.0]], &[100.0, 200.0]);
        assert!(matches!(
            er_indices(&data, &[], 0.05),
            Err(AdtError::InvalidParameter(_))
        ));
    }

    #[test]
    fn report_is_invariant_to_path_order() {
        let data = one_level_dataset(80.0, &[&[1.0, 3.0], &[3.0, 5.0]], &[100.0, 200.0]);
        let forward = ensemble_of(&[100.0, 200.0], &[&[1.5, 3.5], &[2.5, 4.5], &[2.0, 4.0]]);
        let shuffled = ensemble_of(&[100.0, 200.0], &[&[2.0, 4.0], &[1.5, 3.5], &[2.5, 4.5]]);
        let a = er_indices(&data, &[forward], 0.05).unwrap();
        let b = er_indices(&data, &[shuffled], 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overall_is_the_mean_over_levels() {
        let spec = StressSpec::new(AccelerationKind::Arrhenius, 40.0, 120.0).unwrap();
        let grid = TimeGrid::new(vec![100.0]).unwrap();
        let mk_level = |stress: f64, value: f64| {
            StressLevel::new(
                stress,
                vec![UnitObservations::new("1", grid.clone(), vec![value]).unwrap()],
            )
            .unwrap()
        };
        let data = AdtDataset::new(vec![mk_level(80.0, 2.0), mk_level(100.0, 4.0)], spec).unwrap();
        let ens_a = ensemble_of(&[100.0], &[&[1.0]]); // er 0.5
        let ens_b = ensemble_of(&[100.0], &[&[5.0]]); // er 0.25
        let report = er_indices(&data, &[ens_a, ens_b], 0.05).unwrap();
        assert_abs_diff_eq!(report.levels[0].er_mean, 0.5);
        assert_abs_diff_eq!(report.levels[1].er_mean, 0.25);
        assert_abs_diff_eq!(report.er_mean, 0.375);
    }

    #[test]
    fn plan_strings_round_trip() {
        for plan in [CrossValPlan::LowestStress, CrossValPlan::HighestStress] {
            let s = plan.to_string();
            assert_eq!(s.parse::<CrossValPlan>().unwrap(), plan);
        }
        assert_eq!(
            "lowest".parse::<CrossValPlan>().unwrap(),
            CrossValPlan::LowestStress
        );
        assert!("median_stress".parse::<CrossValPlan>().is_err());
    }
}
