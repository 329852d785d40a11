//! Parameter estimation: EM for random-drift variants, a two-step baseline,
//! and direct maximum likelihood for fixed-drift variants.
//!
//! All estimators report the observed-data (marginal) log-likelihood at
//! their estimate — the unit drift integrated out where applicable — so fits
//! of different variants and methods are directly comparable, and the AIC is
//! computed from that value.

mod baselines;
mod context;
mod em;
mod search;

use serde::{Deserialize, Serialize};

use crate::dataset::AdtDataset;
use crate::error::{AdtError, Result};
use crate::fbm::{fbm_covariance, HurstExponent, TimeGrid};
use crate::model::{ModelParams, ModelVariant};

pub use baselines::{mle_fixed, two_step_mle};
pub use em::em_fit;

use context::FitContext;
use search::{profile_search_impl, DriftTreatment};

/// Gaussian posterior of one unit's drift given its observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPosterior {
    pub mean: f64,
    /// Posterior variance; never exceeds the prior drift variance.
    pub var: f64,
}

impl DriftPosterior {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !var.is_finite() || var < 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "drift posterior needs finite mean and non-negative variance, \
                 got ({mean}, {var})"
            )));
        }
        Ok(Self { mean, var })
    }
}

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// EM for random-drift variants; falls back to the direct maximizer for
    /// fixed-drift variants (they have no latent drift to integrate out).
    Em,
    /// Two-step baseline: free per-unit drifts, then moment matching.
    TwoStep,
    /// Direct likelihood maximization for fixed-drift variants.
    MleFixed,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            FitMethod::Em => "em",
            FitMethod::TwoStep => "two_step",
            FitMethod::MleFixed => "mle_fixed",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for FitMethod {
    type Err = AdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(FitMethod::Em),
            "two_step" => Ok(FitMethod::TwoStep),
            "mle_fixed" => Ok(FitMethod::MleFixed),
            other => Err(AdtError::InvalidParameter(format!(
                "unknown fit method `{other}`; expected em, two_step, or mle_fixed"
            ))),
        }
    }
}

/// Box constraints for the structural-parameter search.
///
/// The time-exponent lower bound is exclusive (`β = 0` would make the trend
/// constant); the Hurst bounds are clamped into the open unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBounds {
    pub stress_coef: (f64, f64),
    pub time_exp: (f64, f64),
    pub hurst: (f64, f64),
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            stress_coef: (-20.0, 20.0),
            time_exp: (0.0, 5.0),
            hurst: (HurstExponent::MIN, HurstExponent::MAX),
        }
    }
}

impl SearchBounds {
    pub(crate) fn hurst_clamped(&self) -> (f64, f64) {
        (
            self.hurst.0.clamp(HurstExponent::MIN, HurstExponent::MAX),
            self.hurst.1.clamp(HurstExponent::MIN, HurstExponent::MAX),
        )
    }

    fn validate(&self) -> Result<()> {
        let ordered = self.stress_coef.0 < self.stress_coef.1
            && self.time_exp.0 < self.time_exp.1
            && self.hurst.0 < self.hurst.1;
        if !ordered || !self.time_exp.1.is_finite() || self.time_exp.0 < 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "malformed search bounds: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Estimation settings shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// EM stopping tolerance on the maximum relative parameter change.
    pub epsilon: f64,
    /// EM iteration cap.
    pub max_iter: usize,
    pub bounds: SearchBounds,
    /// EM starting point; when absent the two-step estimate is used.
    pub theta0: Option<ModelParams>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iter: 500,
            bounds: SearchBounds::default(),
            theta0: None,
        }
    }
}

impl FitOptions {
    // The negated comparison is deliberate: a NaN epsilon must fail the check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_iter == 0 {
            return Err(AdtError::InvalidParameter(format!(
                "fit options need epsilon > 0 and max_iter ≥ 1, got \
                 epsilon = {}, max_iter = {}",
                self.epsilon, self.max_iter
            )));
        }
        self.bounds.validate()
    }
}

/// One EM iterate for the fit trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub theta: ModelParams,
    pub log_likelihood: f64,
}

/// A unit's drift posterior tagged with its position in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitPosterior {
    pub stress: f64,
    pub unit_id: String,
    pub mean: f64,
    pub sd: f64,
}

/// Outcome of any estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub method: FitMethod,
    pub theta: ModelParams,
    /// Observed-data (marginal) log-likelihood at `theta`.
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_params: usize,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub trace: Vec<TraceEntry>,
    /// Drift posteriors at `theta` (random-drift variants only).
    pub posteriors: Vec<UnitPosterior>,
}

impl FitResult {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        data: &AdtDataset,
        method: FitMethod,
        theta: ModelParams,
        log_likelihood: f64,
        iterations: usize,
        converged: bool,
        trace: Vec<TraceEntry>,
        warnings: Vec<String>,
        posteriors: Vec<DriftPosterior>,
    ) -> Self {
        let n_params = theta.variant().n_params();
        let aic = crate::evaluation::aic(log_likelihood, n_params);
        let posteriors = data
            .levels()
            .iter()
            .flat_map(|level| {
                level
                    .units()
                    .iter()
                    .map(move |unit| (level.stress(), unit.unit_id()))
            })
            .zip(posteriors)
            .map(|((stress, unit_id), p)| UnitPosterior {
                stress,
                unit_id: unit_id.to_string(),
                mean: p.mean,
                sd: p.var.sqrt(),
            })
            .collect();
        Self {
            method,
            theta,
            log_likelihood,
            aic,
            n_params,
            iterations,
            converged,
            warnings,
            trace,
            posteriors,
        }
    }
}

/// Fit `variant` to `data` with `method`.
///
/// The EM method applies to the random-drift variants; asking for it on a
/// fixed-drift variant runs the direct maximizer instead (there is no latent
/// drift to integrate out). The two-step baseline works for every variant.
pub fn fit(
    data: &AdtDataset,
    variant: ModelVariant,
    method: FitMethod,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    match method {
        FitMethod::TwoStep => two_step_mle(data, variant, options),
        FitMethod::MleFixed => mle_fixed(data, variant, options),
        FitMethod::Em => {
            if !variant.has_random_drift() {
                return mle_fixed(data, variant, options);
            }
            let theta0 = match &options.theta0 {
                Some(t) => {
                    if t.variant() != variant {
                        return Err(AdtError::InvalidParameter(format!(
                            "starting point is for variant {}, requested {variant}",
                            t.variant()
                        )));
                    }
                    *t
                }
                None => two_step_mle(data, variant, options)?.theta,
            };
            em_fit(data, &theta0, options)
        }
    }
}

/// Gaussian drift posterior for a single unit at `theta`.
///
/// With `ψ_j = exp(α·s*)·t_j^β` and `Σ` the unit-variance memory covariance
/// on `grid`, the posterior mean and variance are
///
/// ```text
/// μ  = (xᵀΣ⁻¹ψ·σ_a² + μ_a·σ²) / (ψᵀΣ⁻¹ψ·σ_a² + σ²)
/// v  =  σ²·σ_a² / (ψᵀΣ⁻¹ψ·σ_a² + σ²)
/// ```
///
/// All solves go through the cached Cholesky factor; no matrix is inverted.
pub fn posterior_drift(
    theta: &ModelParams,
    x: &[f64],
    grid: &TimeGrid,
    s_star: f64,
) -> Result<DriftPosterior> {
    if x.len() != grid.len() {
        return Err(AdtError::InvalidParameter(format!(
            "unit has {} values on a grid of {} times",
            x.len(),
            grid.len()
        )));
    }
    let cov = fbm_covariance(grid, theta.hurst(), 1.0)?;
    let psi = theta.basis_vector(s_star, grid);
    let solved = cov.solve(&psi);
    let a = psi.dot(&solved);
    let b = nalgebra::DVector::from_column_slice(x).dot(&solved);
    let sigma2 = theta.diffusion_var();
    let sigma_a2 = theta.drift_var();
    let denom = a * sigma_a2 + sigma2;
    DriftPosterior::new(
        (b * sigma_a2 + theta.drift_mean() * sigma2) / denom,
        sigma2 * sigma_a2 / denom,
    )
}

fn check_posterior_count(posteriors: &[DriftPosterior], ctx: &FitContext) -> Result<()> {
    if posteriors.len() != ctx.n_units {
        return Err(AdtError::InvalidParameter(format!(
            "{} drift posteriors supplied for {} units",
            posteriors.len(),
            ctx.n_units
        )));
    }
    Ok(())
}

/// Expected complete-data log-likelihood (EM surrogate) of `theta` under
/// fixed drift posteriors, summed over all units in dataset order.
pub fn q_function(
    theta: &ModelParams,
    posteriors: &[DriftPosterior],
    data: &AdtDataset,
) -> Result<f64> {
    let ctx = FitContext::new(data)?;
    check_posterior_count(posteriors, &ctx)?;
    let ht = ctx.hurst_tables(theta.hurst())?;
    let bt = ctx.basis_tables(&ht, theta.time_exp());
    ctx.q_value(&ht, &bt, theta, posteriors)
}

/// Closed-form maximizers `(μ_a, σ_a², σ²)` of the EM surrogate at fixed
/// structural parameters `(α, β, H)`.
pub fn m_step_closed(
    posteriors: &[DriftPosterior],
    data: &AdtDataset,
    stress_coef: f64,
    time_exp: f64,
    hurst: HurstExponent,
) -> Result<(f64, f64, f64)> {
    let ctx = FitContext::new(data)?;
    check_posterior_count(posteriors, &ctx)?;
    let ht = ctx.hurst_tables(hurst)?;
    let bt = ctx.basis_tables(&ht, time_exp);
    Ok(ctx.m_step(&ht, &bt, posteriors, stress_coef))
}

/// Observed-data (marginal) log-likelihood of `theta` on `data`: per unit,
/// the density of `N(μ_a·ψ, σ²Σ + σ_a²·ψψᵀ)`, the drift integrated out.
pub fn observed_loglik(theta: &ModelParams, data: &AdtDataset) -> Result<f64> {
    let ctx = FitContext::new(data)?;
    let ht = ctx.hurst_tables(theta.hurst())?;
    let bt = ctx.basis_tables(&ht, theta.time_exp());
    Ok(ctx.observed_loglik(&ht, &bt, theta))
}

/// Maximizer of the profiled EM surrogate found by [`profile_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub stress_coef: f64,
    pub time_exp: f64,
    pub hurst: HurstExponent,
    /// Profiled objective value at the maximizer.
    pub objective: f64,
    /// Whether the polish stage met its tolerances.
    pub converged: bool,
}

/// Search `(α, β, H)` for the maximum of the profiled EM surrogate under
/// fixed drift posteriors; `pin_hurst` freezes the memory dimension (pass
/// `Some(0.5)` for memoryless variants).
pub fn profile_search(
    data: &AdtDataset,
    posteriors: &[DriftPosterior],
    bounds: &SearchBounds,
    pin_hurst: Option<f64>,
) -> Result<ProfilePoint> {
    bounds.validate()?;
    let ctx = FitContext::new(data)?;
    check_posterior_count(posteriors, &ctx)?;
    let out = profile_search_impl(
        &ctx,
        DriftTreatment::Posterior(posteriors),
        pin_hurst,
        bounds,
        &[],
    )?;
    Ok(ProfilePoint {
        stress_coef: out.alpha,
        time_exp: out.beta,
        hurst: out.hurst,
        objective: out.objective,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{StressLevel, UnitObservations};
    use crate::model::{AccelerationKind, StressSpec};
    use crate::rng::{substream, StreamDomain};
    use crate::simulator::{generate_dataset, tests::benchmark_design};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::{Cholesky, DMatrix, DVector};
    use rand::RngExt;

    const LN_2PI: f64 = 1.8378770664093453;

    /// Independent fBm covariance oracle (no reuse of the fbm module).
    fn fbm_cov_matrix(times: &[f64], h: f64, sigma2: f64) -> DMatrix<f64> {
        DMatrix::from_fn(times.len(), times.len(), |i, j| {
            let (t, r) = (times[i], times[j]);
            sigma2 * 0.5 * (t.powf(2.0 * h) + r.powf(2.0 * h) - (t - r).abs().powf(2.0 * h))
        })
    }

    /// Dense multivariate-normal log-density oracle.
    fn mvn_loglik(x: &DVector<f64>, mean: &DVector<f64>, cov: DMatrix<f64>) -> f64 {
        let n = x.len();
        let chol = Cholesky::new(cov).expect("oracle covariance must be PD");
        let log_det: f64 = (0..n).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
        let r = x - mean;
        let solved = chol.solve(&r);
        -0.5 * (n as f64 * LN_2PI + log_det + r.dot(&solved))
    }

    /// Trapezoid-quadrature posterior of the unit drift: moments of
    /// `p(a | x) ∝ N(x; a·ψ, σ²Σ) · N(a; μ_a, σ_a²)` on a wide window.
    fn quadrature_posterior(
        theta: &ModelParams,
        x: &[f64],
        grid: &TimeGrid,
        s_star: f64,
    ) -> (f64, f64) {
        let analytic = posterior_drift(theta, x, grid, s_star).unwrap();
        let sd = analytic.var.sqrt().max(theta.drift_sd() * 1e-3).max(1e-12);
        let (lo, hi) = (analytic.mean - 12.0 * sd, analytic.mean + 12.0 * sd);
        let n = 16_001;
        let xs = DVector::from_column_slice(x);
        let psi = theta.basis_vector(s_star, grid);
        let cov = fbm_cov_matrix(grid.times(), theta.hurst().value(), theta.diffusion_var());
        let chol = Cholesky::new(cov).unwrap();
        let log_det: f64 = (0..grid.len()).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
        let loglik = |a: f64| -> f64 {
            let r = &xs - &psi * a;
            let solved = chol.solve(&r);
            let obs = -0.5 * (grid.len() as f64 * LN_2PI + log_det + r.dot(&solved));
            let prior = -0.5
                * (LN_2PI
                    + theta.drift_var().ln()
                    + (a - theta.drift_mean()).powi(2) / theta.drift_var());
            obs + prior
        };
        let step = (hi - lo) / (n - 1) as f64;
        let points: Vec<(f64, f64)> = (0..n)
            .map(|i| lo + i as f64 * step)
            .map(|a| (a, loglik(a)))
            .collect();
        let peak = points
            .iter()
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut z = 0.0;
        let mut mean = 0.0;
        for (i, (a, l)) in points.iter().enumerate() {
            let w = weight(i) * (l - peak).exp();
            z += w;
            mean += w * a;
        }
        mean /= z;
        let mut var = 0.0;
        for (i, (a, l)) in points.iter().enumerate() {
            var += weight(i) * (l - peak).exp() * (a - mean).powi(2);
        }
        (mean, var / z)
    }

    fn scalar_theta() -> ModelParams {
        // One observation x = 1 at t = 1: posterior (0.9, 0.2), marginal
        // log-likelihood ln N(1; 0.5, 1.25) = −1.13051...
        ModelParams::new(
            ModelVariant::Memoryless,
            0.5,
            1.0,
            0.0,
            1.0,
            0.25,
            HurstExponent::BROWNIAN,
        )
        .unwrap()
    }

    fn scalar_dataset() -> AdtDataset {
        let spec = StressSpec::new(AccelerationKind::Exponential, 0.0, 1.0).unwrap();
        let grid = TimeGrid::new(vec![1.0]).unwrap();
        let unit = UnitObservations::new("1", grid, vec![1.0]).unwrap();
        AdtDataset::new(vec![StressLevel::new(0.5, vec![unit]).unwrap()], spec).unwrap()
    }

    #[test]
    fn posterior_scalar_oracle() {
        let grid = TimeGrid::new(vec![1.0]).unwrap();
        let p = posterior_drift(&scalar_theta(), &[1.0], &grid, 0.7).unwrap();
        // α = 0 makes the stress factor 1 regardless of s*.
        assert_relative_eq!(p.mean, 0.9, epsilon = 1e-12);
        assert_relative_eq!(p.var, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn posterior_matches_quadrature() {
        let mut rng = substream(777, StreamDomain::Sweep, &[0]);
        for (k, &h) in [0.1, 0.5, 0.9].iter().enumerate() {
            for rep in 0..2 {
                let m = 2 + (k + rep) % 4;
                let mut times: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..50.0_f64)).collect();
                times.sort_by(f64::total_cmp);
                times.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
                let grid = TimeGrid::new(times).unwrap();
                let theta = ModelParams::new(
                    ModelVariant::Full,
                    rng.random_range(0.05..2.0),
                    rng.random_range(0.01..0.5),
                    rng.random_range(-1.0..2.0),
                    rng.random_range(0.5..2.0),
                    rng.random_range(0.05..2.0),
                    HurstExponent::new(h).unwrap(),
                )
                .unwrap();
                let x: Vec<f64> = (0..grid.len())
                    .map(|_| rng.random_range(-2.0..8.0))
                    .collect();
                let s_star = rng.random_range(0.0..1.0);
                let analytic = posterior_drift(&theta, &x, &grid, s_star).unwrap();
                let (mean_q, var_q) = quadrature_posterior(&theta, &x, &grid, s_star);
                assert_relative_eq!(analytic.mean, mean_q, max_relative = 1e-6);
                assert_relative_eq!(analytic.var, var_q, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn posterior_degenerate_and_diffuse_priors() {
        let grid = TimeGrid::new(vec![1.0, 2.0, 4.0]).unwrap();
        let x = [0.9, 2.1, 3.7];
        let point_mass = ModelParams::new(
            ModelVariant::Full,
            0.8,
            0.0,
            0.3,
            1.0,
            0.5,
            HurstExponent::new(0.3).unwrap(),
        )
        .unwrap();
        let p = posterior_drift(&point_mass, &x, &grid, 0.6).unwrap();
        assert_eq!(p.mean, 0.8);
        assert_eq!(p.var, 0.0);

        // A very diffuse prior converges to the per-unit GLS rate b/A.
        let diffuse = ModelParams::new(
            ModelVariant::Full,
            0.8,
            1e12,
            0.3,
            1.0,
            0.5,
            HurstExponent::new(0.3).unwrap(),
        )
        .unwrap();
        let p = posterior_drift(&diffuse, &x, &grid, 0.6).unwrap();
        let cov = fbm_cov_matrix(grid.times(), 0.3, 1.0);
        let chol = Cholesky::new(cov).unwrap();
        let psi = diffuse.basis_vector(0.6, &grid);
        let solved = chol.solve(&psi);
        let gls = DVector::from_column_slice(&x).dot(&solved) / psi.dot(&solved);
        assert_relative_eq!(p.mean, gls, max_relative = 1e-9);
    }

    #[test]
    fn posterior_shrinks_between_prior_and_gls() {
        let grid = TimeGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let theta = ModelParams::new(
            ModelVariant::Full,
            1.0,
            0.09,
            0.0,
            1.0,
            0.25,
            HurstExponent::new(0.4).unwrap(),
        )
        .unwrap();
        let x = [1.4, 2.9, 4.5]; // implies a drift above the prior mean
        let p = posterior_drift(&theta, &x, &grid, 0.0).unwrap();
        let cov = fbm_cov_matrix(grid.times(), 0.4, 1.0);
        let chol = Cholesky::new(cov).unwrap();
        let psi = theta.basis_vector(0.0, &grid);
        let solved = chol.solve(&psi);
        let gls = DVector::from_column_slice(&x).dot(&solved) / psi.dot(&solved);
        assert!(
            (theta.drift_mean()..=gls).contains(&p.mean),
            "posterior mean {} should sit between prior 1.0 and GLS {gls}",
            p.mean
        );
        assert!(p.var < theta.drift_var(), "data must reduce the variance");
        assert!(p.var > 0.0);
    }

    #[test]
    fn posterior_rejects_length_mismatch() {
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            posterior_drift(&scalar_theta(), &[1.0], &grid, 0.0),
            Err(AdtError::InvalidParameter(_))
        ));
    }

    #[test]
    fn q_equals_complete_data_loglik_at_point_masses() {
        let data = generate_dataset(&benchmark_design(2, 4, 11)).unwrap();
        let theta = ModelParams::new(
            ModelVariant::Full,
            1.1e-5,
            4e-12,
            2.2,
            1.4,
            0.012,
            HurstExponent::new(0.2).unwrap(),
        )
        .unwrap();
        // Point-mass posteriors at arbitrary per-unit drifts.
        let drifts = [0.9e-5, 1.2e-5, 1.05e-5, 0.95e-5, 1.3e-5, 1.0e-5];
        let posteriors: Vec<DriftPosterior> = drifts
            .iter()
            .map(|&a| DriftPosterior { mean: a, var: 0.0 })
            .collect();
        let q = q_function(&theta, &posteriors, &data).unwrap();

        let mut expected = 0.0;
        for ((l, unit), &a) in data.units().zip(&drifts) {
            let s_star = data.normalized_stresses()[l];
            let psi = theta.basis_vector(s_star, unit.grid());
            let cov = fbm_cov_matrix(
                unit.grid().times(),
                theta.hurst().value(),
                theta.diffusion_var(),
            );
            expected += mvn_loglik(&unit.values_vector(), &(psi * a), cov);
            expected += -0.5
                * (LN_2PI
                    + theta.drift_var().ln()
                    + (a - theta.drift_mean()).powi(2) / theta.drift_var());
        }
        assert_relative_eq!(q, expected, max_relative = 1e-10);
    }

    #[test]
    fn q_requires_positive_drift_variance() {
        let data = scalar_dataset();
        let theta = ModelParams::new(
            ModelVariant::Full,
            0.5,
            0.0,
            0.0,
            1.0,
            0.25,
            HurstExponent::BROWNIAN,
        )
        .unwrap();
        let posteriors = vec![DriftPosterior {
            mean: 0.5,
            var: 0.0,
        }];
        assert!(matches!(
            q_function(&theta, &posteriors, &data),
            Err(AdtError::Estimation(_))
        ));
    }

    #[test]
    fn q_posterior_count_mismatch() {
        let data = scalar_dataset();
        assert!(matches!(
            q_function(&scalar_theta(), &[], &data),
            Err(AdtError::InvalidParameter(_))
        ));
    }

    #[test]
    fn m_step_is_the_q_maximizer() {
        let data = generate_dataset(&benchmark_design(3, 5, 21)).unwrap();
        let theta_p = ModelParams::new(
            ModelVariant::Full,
            1e-5,
            4e-12,
            2.5,
            1.5,
            0.01,
            HurstExponent::new(0.1).unwrap(),
        )
        .unwrap();
        let ctx_posteriors: Vec<DriftPosterior> = data
            .units()
            .map(|(l, unit)| {
                posterior_drift(
                    &theta_p,
                    unit.values(),
                    unit.grid(),
                    data.normalized_stresses()[l],
                )
                .unwrap()
            })
            .collect();
        let (alpha, beta, h) = (2.3, 1.45, HurstExponent::new(0.15).unwrap());
        let (mu_a, sigma_a2, sigma2) =
            m_step_closed(&ctx_posteriors, &data, alpha, beta, h).unwrap();

        // Numerical maximization of q over (μ_a, σ_a², σ²) from a deliberately
        // shifted start must land on the closed form.
        let objective = |p: &[f64]| -> f64 {
            match ModelParams::new(ModelVariant::Full, p[0], p[1], alpha, beta, p[2], h) {
                Ok(theta) => {
                    q_function(&theta, &ctx_posteriors, &data).unwrap_or(f64::NEG_INFINITY)
                }
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let start = [mu_a * 1.4, sigma_a2 * 2.0, sigma2 * 0.5];
        let boxes = [
            (mu_a * 0.2, mu_a * 5.0),
            (sigma_a2 * 0.05, sigma_a2 * 20.0),
            (sigma2 * 0.05, sigma2 * 20.0),
        ];
        let opts = crate::optim::NelderMeadOptions {
            max_iter: 2000,
            ..Default::default()
        };
        let found = crate::optim::nelder_mead_max(objective, &start, &boxes, &opts);
        assert_relative_eq!(found.point[0], mu_a, max_relative = 1e-4);
        assert_relative_eq!(found.point[1], sigma_a2, max_relative = 1e-3);
        assert_relative_eq!(found.point[2], sigma2, max_relative = 1e-4);
        assert!(found.value <= objective(&[mu_a, sigma_a2, sigma2]) + 1e-9);
    }

    #[test]
    fn m_step_trivial_identities() {
        let data = generate_dataset(&benchmark_design(2, 3, 31)).unwrap();
        // Six units, all sharing the same posterior (μ, v): the drift mean is
        // μ, the drift variance collapses to v.
        let posteriors = vec![
            DriftPosterior {
                mean: 2e-5,
                var: 3e-12
            };
            6
        ];
        let (mu_a, sigma_a2, _) = m_step_closed(
            &posteriors,
            &data,
            2.5,
            1.5,
            HurstExponent::new(0.1).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(mu_a, 2e-5, max_relative = 1e-12);
        assert_relative_eq!(sigma_a2, 3e-12, max_relative = 1e-12);
    }

    #[test]
    fn observed_loglik_scalar_oracle() {
        let ll = observed_loglik(&scalar_theta(), &scalar_dataset()).unwrap();
        // x ~ N(0.5, 0.25 + 1) marginally; ln pdf(1) = −1.130509...
        let expected = -0.5 * (LN_2PI + 1.25f64.ln() + 0.25 / 1.25);
        assert_relative_eq!(ll, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(ll, -1.13051, epsilon = 1e-5);
    }

    #[test]
    fn observed_loglik_zero_drift_var_is_plain_gaussian() {
        let data = generate_dataset(&benchmark_design(2, 4, 17)).unwrap();
        let theta = ModelParams::new(
            ModelVariant::FixedDrift,
            1e-5,
            0.0,
            2.5,
            1.5,
            0.01,
            HurstExponent::new(0.1).unwrap(),
        )
        .unwrap();
        let ll = observed_loglik(&theta, &data).unwrap();
        let mut expected = 0.0;
        for (l, unit) in data.units() {
            let s_star = data.normalized_stresses()[l];
            let psi = theta.basis_vector(s_star, unit.grid());
            let cov = fbm_cov_matrix(unit.grid().times(), 0.1, theta.diffusion_var());
            expected += mvn_loglik(&unit.values_vector(), &(psi * theta.drift_mean()), cov);
        }
        assert_relative_eq!(ll, expected, max_relative = 1e-10);
    }

    #[test]
    fn observed_loglik_matches_drift_quadrature() {
        // Marginal likelihood by integrating the complete-data likelihood
        // over the drift with a trapezoid rule.
        let grid = TimeGrid::new(vec![1.0, 3.0, 7.0]).unwrap();
        let x = vec![0.6, 1.9, 4.9];
        let spec = StressSpec::new(AccelerationKind::Exponential, 0.0, 1.0).unwrap();
        let unit = UnitObservations::new("1", grid.clone(), x.clone()).unwrap();
        let data = AdtDataset::new(vec![StressLevel::new(0.5, vec![unit]).unwrap()], spec).unwrap();
        let theta = ModelParams::new(
            ModelVariant::Full,
            0.7,
            0.04,
            0.4,
            1.1,
            0.09,
            HurstExponent::new(0.35).unwrap(),
        )
        .unwrap();
        let ll = observed_loglik(&theta, &data).unwrap();

        let psi = theta.basis_vector(0.5, &grid);
        let cov = fbm_cov_matrix(grid.times(), 0.35, theta.diffusion_var());
        let xs = DVector::from_column_slice(&x);
        let n = 40_001;
        let sd = theta.drift_sd();
        let (lo, hi) = (
            theta.drift_mean() - 14.0 * sd,
            theta.drift_mean() + 14.0 * sd,
        );
        let step = (hi - lo) / (n - 1) as f64;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let a = lo + i as f64 * step;
                let obs = mvn_loglik(&xs, &(&psi * a), cov.clone());
                let prior = -0.5
                    * (LN_2PI
                        + theta.drift_var().ln()
                        + (a - theta.drift_mean()).powi(2) / theta.drift_var());
                obs + prior
            })
            .collect();
        let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (i, v) in values.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            z += w * (v - peak).exp();
        }
        let quadrature = peak + (z * step).ln();
        assert_relative_eq!(ll, quadrature, max_relative = 1e-8);
    }

    #[test]
    fn profile_search_recovers_structure_on_clean_data() {
        // Nearly noiseless fixed-drift data: with point-mass posteriors at
        // the true drift, the profiled surrogate peaks at the true (α, β).
        let mut design = benchmark_design(4, 8, 3);
        design.theta_true = ModelParams::new(
            ModelVariant::FixedDrift,
            1e-5,
            0.0,
            2.5,
            1.5,
            1e-10,
            HurstExponent::new(0.3).unwrap(),
        )
        .unwrap();
        let data = generate_dataset(&design).unwrap();
        let posteriors = vec![
            DriftPosterior {
                mean: 1e-5,
                var: 0.0
            };
            data.total_units()
        ];
        let found = profile_search(&data, &posteriors, &SearchBounds::default(), None).unwrap();
        assert_relative_eq!(found.time_exp, 1.5, epsilon = 1e-3);
        assert_relative_eq!(found.stress_coef, 2.5, epsilon = 1e-2);
    }

    #[test]
    fn profile_maximizer_beats_random_probes() {
        let data = generate_dataset(&benchmark_design(3, 6, 8)).unwrap();
        let theta_p = ModelParams::new(
            ModelVariant::Full,
            1e-5,
            4e-12,
            2.5,
            1.5,
            0.01,
            HurstExponent::new(0.1).unwrap(),
        )
        .unwrap();
        let posteriors: Vec<DriftPosterior> = data
            .units()
            .map(|(l, unit)| {
                posterior_drift(
                    &theta_p,
                    unit.values(),
                    unit.grid(),
                    data.normalized_stresses()[l],
                )
                .unwrap()
            })
            .collect();
        let bounds = SearchBounds::default();
        let found = profile_search(&data, &posteriors, &bounds, None).unwrap();

        // The surrogate value at probe (α, β, H) re-derived via q_function
        // with the profiled closed-form σ̂² substituted would need internals;
        // instead probe through profile objective parity: any probe triple
        // must not beat the maximizer when evaluated the same way — via a
        // pinned, degenerate-bounds search around the probe.
        let mut rng = substream(5150, StreamDomain::Sweep, &[7]);
        for _ in 0..12 {
            let alpha = rng.random_range(-5.0..8.0_f64);
            let beta = rng.random_range(0.3..3.0_f64);
            let h = rng.random_range(0.05..0.95_f64);
            let eps_a = 1e-9 * (1.0 + alpha.abs());
            let eps_b = 1e-9 * beta;
            let probe_bounds = SearchBounds {
                stress_coef: (alpha - eps_a, alpha + eps_a),
                time_exp: (beta - eps_b, beta + eps_b),
                hurst: (h - 1e-9, h + 1e-9),
            };
            let probe = profile_search(&data, &posteriors, &probe_bounds, None).unwrap();
            assert!(
                probe.objective <= found.objective + 1e-6,
                "probe ({alpha}, {beta}, {h}) scored {} above the maximizer {}",
                probe.objective,
                found.objective
            );
        }
    }

    #[test]
    fn em_fit_properties_on_benchmark_data() {
        let data = generate_dataset(&benchmark_design(6, 10, 1)).unwrap();
        let options = FitOptions::default();
        let em = fit(&data, ModelVariant::Full, FitMethod::Em, &options).unwrap();
        let two_step = fit(&data, ModelVariant::Full, FitMethod::TwoStep, &options).unwrap();

        assert_eq!(em.method, FitMethod::Em);
        assert!(em.converged, "EM should converge on well-posed data");
        assert!(em.iterations >= 1);
        assert_eq!(em.posteriors.len(), 18);
        assert_eq!(em.n_params, 6);
        // Monotone observed log-likelihood along the trace.
        for w in em.trace.windows(2) {
            assert!(
                w[1].log_likelihood >= w[0].log_likelihood - 1e-6,
                "log-likelihood decreased: {} -> {}",
                w[0].log_likelihood,
                w[1].log_likelihood
            );
        }
        // The EM refinement cannot do worse than its two-step start.
        assert!(em.log_likelihood >= two_step.log_likelihood - 1e-6);
        // AIC is consistent with the reported likelihood.
        assert_relative_eq!(
            em.aic,
            -2.0 * em.log_likelihood + 12.0,
            max_relative = 1e-12
        );
        // Posterior bookkeeping: level-major order with original ids.
        assert_eq!(em.posteriors[0].stress, 80.0);
        assert_eq!(em.posteriors[0].unit_id, "1");
        assert_eq!(em.posteriors[17].stress, 120.0);
        assert_eq!(em.posteriors[17].unit_id, "6");

        // Bitwise reproducibility.
        let again = fit(&data, ModelVariant::Full, FitMethod::Em, &options).unwrap();
        assert_eq!(em, again);
    }

    #[test]
    fn em_zero_variance_start_stays_on_the_boundary() {
        let data = generate_dataset(&benchmark_design(3, 6, 13)).unwrap();
        let theta0 = ModelParams::new(
            ModelVariant::Full,
            1e-5,
            0.0,
            2.5,
            1.5,
            0.01,
            HurstExponent::new(0.1).unwrap(),
        )
        .unwrap();
        let result = em_fit(&data, &theta0, &FitOptions::default()).unwrap();
        assert_eq!(result.theta.drift_var(), 0.0);
        assert!(
            result.warnings.iter().any(|w| w.contains("zero")),
            "expected a boundary warning, got {:?}",
            result.warnings
        );
    }

    #[test]
    fn em_rejects_fixed_variants_directly() {
        let data = generate_dataset(&benchmark_design(2, 4, 19)).unwrap();
        let theta0 = ModelParams::new(
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
            em_fit(&data, &theta0, &FitOptions::default()),
            Err(AdtError::Estimation(_))
        ));
    }

    #[test]
    fn two_step_hand_check_on_brownian_pair() {
        // H pinned at 1/2, β pinned by a degenerate box at 1: on grid {1, 2}
        // the per-unit GLS rate reduces to x(2)/2, so unit values are chosen
        // to give rates 1.1 and 0.9 → μ̂_a = 1, σ̂_a² = 0.01 (population),
        // and a single level leaves α at its 0 default with a warning.
        let spec = StressSpec::new(AccelerationKind::Exponential, 0.0, 1.0).unwrap();
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let units = vec![
            UnitObservations::new("1", grid.clone(), vec![0.8, 2.2]).unwrap(),
            UnitObservations::new("2", grid.clone(), vec![1.2, 1.8]).unwrap(),
        ];
        let data = AdtDataset::new(vec![StressLevel::new(0.5, units).unwrap()], spec).unwrap();
        let mut options = FitOptions::default();
        options.bounds.time_exp = (1.0 - 1e-9, 1.0 + 1e-9);
        let result = two_step_mle(&data, ModelVariant::Memoryless, &options).unwrap();
        assert_relative_eq!(result.theta.drift_mean(), 1.0, max_relative = 1e-6);
        assert_relative_eq!(result.theta.drift_var(), 0.01, max_relative = 1e-4);
        assert_eq!(result.theta.stress_coef(), 0.0);
        assert_eq!(result.theta.hurst().value(), 0.5);
        assert!(result.warnings.iter().any(|w| w.contains("regression")));
        assert_eq!(result.method, FitMethod::TwoStep);
    }

    #[test]
    fn two_step_recovers_acceleration_on_clean_data() {
        let mut design = benchmark_design(3, 8, 23);
        design.theta_true = ModelParams::new(
            ModelVariant::FixedDrift,
            1e-5,
            0.0,
            2.5,
            1.5,
            1e-16,
            HurstExponent::new(0.5 - 1e-9).unwrap(),
        )
        .unwrap();
        let data = generate_dataset(&design).unwrap();
        let result = two_step_mle(&data, ModelVariant::Full, &FitOptions::default()).unwrap();
        assert_relative_eq!(result.theta.stress_coef(), 2.5, max_relative = 1e-3);
        assert_relative_eq!(result.theta.drift_mean(), 1e-5, max_relative = 1e-3);
        assert_relative_eq!(result.theta.time_exp(), 1.5, max_relative = 1e-3);
        assert!(result.theta.drift_sd() < 1e-7 * 0.01);
    }

    #[test]
    fn two_step_identical_units_give_zero_drift_variance() {
        let spec = StressSpec::new(AccelerationKind::Exponential, 0.0, 1.0).unwrap();
        let grid = TimeGrid::new(vec![1.0, 2.0, 3.0]).unwrap();
        let units = vec![
            UnitObservations::new("1", grid.clone(), vec![1.0, 2.1, 2.9]).unwrap(),
            UnitObservations::new("2", grid.clone(), vec![1.0, 2.1, 2.9]).unwrap(),
        ];
        let data = AdtDataset::new(vec![StressLevel::new(0.5, units).unwrap()], spec).unwrap();
        let result = two_step_mle(&data, ModelVariant::Memoryless, &FitOptions::default()).unwrap();
        assert_eq!(result.theta.drift_var(), 0.0);
    }

    #[test]
    fn two_step_preconditions() {
        let spec = StressSpec::new(AccelerationKind::Exponential, 0.0, 1.0).unwrap();
        let single_obs =
            UnitObservations::new("1", TimeGrid::new(vec![1.0]).unwrap(), vec![1.0]).unwrap();
        let data =
            AdtDataset::new(vec![StressLevel::new(0.5, vec![single_obs]).unwrap()], spec).unwrap();
        assert!(matches!(
            two_step_mle(&data, ModelVariant::Full, &FitOptions::default()),
            Err(AdtError::Estimation(_))
        ));

        let lone_unit =
            UnitObservations::new("1", TimeGrid::new(vec![1.0, 2.0]).unwrap(), vec![1.0, 2.0])
                .unwrap();
        let data = AdtDataset::new(
            vec![StressLevel::new(0.5, vec![lone_unit]).unwrap()],
            StressSpec::new(AccelerationKind::Exponential, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        // One unit cannot identify a drift *distribution*…
        assert!(matches!(
            two_step_mle(&data, ModelVariant::Memoryless, &FitOptions::default()),
            Err(AdtError::Estimation(_))
        ));
        // …but a fixed-drift variant is fine with it.
        assert!(two_step_mle(&data, ModelVariant::Basic, &FitOptions::default()).is_ok());
    }

    #[test]
    fn two_step_drops_nonpositive_level_rates() {
        let spec = StressSpec::new(AccelerationKind::Exponential, 0.0, 100.0).unwrap();
        let grid = TimeGrid::new(vec![1.0, 2.0]).unwrap();
        let mk = |stress: f64, a: f64, b: f64| {
            StressLevel::new(
                stress,
                vec![UnitObservations::new("1", grid.clone(), vec![a, b]).unwrap()],
            )
            .unwrap()
        };
        // Middle level degrades downward: its mean rate is negative.
        let data = AdtDataset::new(
            vec![
                mk(10.0, 1.0, 2.0),
                mk(50.0, -1.0, -2.0),
                mk(100.0, 2.0, 4.0),
            ],
            spec,
        )
        .unwrap();
        let result = two_step_mle(&data, ModelVariant::Basic, &FitOptions::default()).unwrap();
        assert!(
            result.warnings.iter().any(|w| w.contains("dropped")),
            "expected a dropped-level warning, got {:?}",
            result.warnings
        );
        assert!(result.theta.stress_coef().is_finite());
    }

    #[test]
    fn dispatcher_routes_methods_and_validates() {
        let data = generate_dataset(&benchmark_design(2, 4, 29)).unwrap();
        let options = FitOptions::default();

        let two_step = fit(&data, ModelVariant::Full, FitMethod::TwoStep, &options).unwrap();
        assert_eq!(two_step.method, FitMethod::TwoStep);

        // Direct MLE refuses random-drift variants…
        assert!(matches!(
            fit(&data, ModelVariant::Full, FitMethod::MleFixed, &options),
            Err(AdtError::InvalidParameter(_))
        ));
        // …while EM on a fixed variant falls back to it.
        let basic = fit(&data, ModelVariant::Basic, FitMethod::Em, &options).unwrap();
        assert_eq!(basic.method, FitMethod::MleFixed);
        assert_eq!(basic.theta.drift_var(), 0.0);
        assert_eq!(basic.n_params, 4);
        assert!(basic.posteriors.is_empty());

        // A starting point for the wrong variant is rejected.
        let mut bad_start = options.clone();
        bad_start.theta0 = Some(
            ModelParams::new(
                ModelVariant::Memoryless,
                1e-5,
                4e-12,
                2.5,
                1.5,
                0.01,
                HurstExponent::BROWNIAN,
            )
            .unwrap(),
        );
        assert!(matches!(
            fit(&data, ModelVariant::Full, FitMethod::Em, &bad_start),
            Err(AdtError::InvalidParameter(_))
        ));

        // Malformed options are caught before any work.
        let mut bad = options.clone();
        bad.epsilon = 0.0;
        assert!(fit(&data, ModelVariant::Full, FitMethod::Em, &bad).is_err());
        let mut bad_bounds = options.clone();
        bad_bounds.bounds.time_exp = (2.0, 1.0);
        assert!(fit(&data, ModelVariant::Full, FitMethod::Em, &bad_bounds).is_err());
    }

    #[test]
    fn nested_variants_order_their_likelihoods() {
        let data = generate_dataset(&benchmark_design(4, 8, 37)).unwrap();
        let options = FitOptions::default();
        let ll = |variant| {
            fit(&data, variant, FitMethod::Em, &options)
                .unwrap()
                .log_likelihood
        };
        let m0 = ll(ModelVariant::Full);
        let m1 = ll(ModelVariant::FixedDrift);
        let m2 = ll(ModelVariant::Memoryless);
        let m3 = ll(ModelVariant::Basic);
        assert!(m0 >= m1 - 1e-3, "full ({m0}) vs fixed-drift ({m1})");
        assert!(m0 >= m2 - 1e-3, "full ({m0}) vs memoryless ({m2})");
        assert!(m1 >= m3 - 1e-3, "fixed-drift ({m1}) vs basic ({m3})");
        assert!(m2 >= m3 - 1e-3, "memoryless ({m2}) vs basic ({m3})");
    }

    #[test]
    fn method_strings_round_trip() {
        for method in [FitMethod::Em, FitMethod::TwoStep, FitMethod::MleFixed] {
            assert_eq!(method.to_string().parse::<FitMethod>().unwrap(), method);
        }
        assert!("direct".parse::<FitMethod>().is_err());
    }

    #[test]
    fn drift_posterior_validation() {
        assert!(DriftPosterior::new(1.0, 0.5).is_ok());
        assert!(DriftPosterior::new(1.0, -0.5).is_err());
        assert!(DriftPosterior::new(f64::NAN, 0.5).is_err());
    }
}
