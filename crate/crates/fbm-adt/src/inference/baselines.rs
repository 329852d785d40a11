//! Non-EM estimators: the two-step method-of-moments baseline and the direct
//! maximizer for the fixed-drift variants.

use crate::dataset::AdtDataset;
use crate::error::{AdtError, Result};
use crate::model::{ModelParams, ModelVariant};

use super::context::FitContext;
use super::search::{profile_search_impl, DriftTreatment};
use super::{FitMethod, FitOptions, FitResult, TraceEntry};

/// Two-step estimation.
///
/// **Step 1** treats every unit's drift as a free fixed effect and maximizes
/// the profiled likelihood over `(β, H)` (H pinned at 1/2 for memoryless
/// variants). The per-unit drift estimates `λ̂_li = b0/a0` then absorb the
/// whole level factor, which leaves the stress coefficient unidentified at
/// this stage — the likelihood is exactly flat in `α`.
///
/// **Step 2** therefore separates the acceleration effect from the drift
/// population by regressing the log of the level-mean rates on normalized
/// stress: `ln λ̄_l ≈ ln μ_a + α·s*_l`. The de-accelerated drifts
/// `â_li = λ̂_li·exp(−α̂·s*_l)` are then moment-matched to a Gaussian
/// (population-variance denominator `Σ n_l`).
///
/// The reported log-likelihood is the observed-data (marginal) value at the
/// assembled estimate, so it is directly comparable with the EM fit. This
/// baseline is known to bias the memory exponent towards zero — the
/// free-drift step soaks up long-range trend variation that actually
/// belongs to the noise memory.
pub fn two_step_mle(
    data: &AdtDataset,
    variant: ModelVariant,
    options: &FitOptions,
) -> Result<FitResult> {
    let ctx = FitContext::new(data)?;
    if let Some(unit) = ctx.units.iter().find(|u| u.x.len() < 2) {
        return Err(AdtError::Estimation(format!(
            "two-step estimation needs at least 2 observations per unit; a unit \
             at level {} has {}",
            unit.level + 1,
            unit.x.len()
        )));
    }
    if variant.has_random_drift() && ctx.n_units < 2 {
        return Err(AdtError::Estimation(
            "the drift variance is undefined with fewer than 2 units".into(),
        ));
    }
    let mut warnings: Vec<String> = Vec::new();

    let pin_hurst = if variant.estimates_memory() {
        None
    } else {
        Some(0.5)
    };
    let step1 = profile_search_impl(
        &ctx,
        DriftTreatment::FreePerUnit,
        pin_hurst,
        &options.bounds,
        &[],
    )?;
    if !step1.converged {
        warnings.push(
            "free-drift profile search did not meet its polish tolerance; \
             using the best point found"
                .into(),
        );
    }
    let ht = ctx.hurst_tables(step1.hurst)?;
    let bt = ctx.basis_tables(&ht, step1.beta);
    let rates: Vec<f64> = ctx
        .units
        .iter()
        .enumerate()
        .map(|(i, unit)| bt.b0[i] / bt.a0[unit.grid_id])
        .collect();
    let sigma2 = (ctx.free_drift_residual_sum(&ht, &bt) / ctx.n_obs as f64).max(1e-300);

    // Level-mean rates on the log scale identify α.
    let n_levels = ctx.data.n_levels();
    let mut level_sums = vec![0.0; n_levels];
    let mut level_counts = vec![0usize; n_levels];
    for (unit, rate) in ctx.units.iter().zip(&rates) {
        level_sums[unit.level] += rate;
        level_counts[unit.level] += 1;
    }
    let s_stars = ctx.data.normalized_stresses();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for l in 0..n_levels {
        let mean_rate = level_sums[l] / level_counts[l] as f64;
        if mean_rate > 0.0 {
            points.push((s_stars[l], mean_rate.ln()));
        } else {
            warnings.push(format!(
                "level {} has a non-positive mean drift rate ({mean_rate:.3e}) and \
                 was dropped from the acceleration regression",
                l + 1
            ));
        }
    }
    let alpha = match regression_slope(&points) {
        Some(slope) => slope.clamp(options.bounds.stress_coef.0, options.bounds.stress_coef.1),
        None => {
            warnings.push(
                "fewer than 2 stress levels usable for the acceleration \
                 regression; the stress coefficient defaults to 0"
                    .into(),
            );
            0.0
        }
    };

    let drifts: Vec<f64> = ctx
        .units
        .iter()
        .zip(&rates)
        .map(|(unit, rate)| rate * (-alpha * unit.s_star).exp())
        .collect();
    let mu_a = drifts.iter().sum::<f64>() / ctx.n_units as f64;
    let sigma_a2 = if variant.has_random_drift() {
        drifts.iter().map(|a| (a - mu_a).powi(2)).sum::<f64>() / ctx.n_units as f64
    } else {
        0.0
    };

    let theta = ModelParams::new(
        variant,
        mu_a,
        sigma_a2,
        alpha,
        step1.beta,
        sigma2,
        step1.hurst,
    )?;
    let loglik = ctx.observed_loglik(&ht, &bt, &theta);
    let posteriors = if variant.has_random_drift() {
        ctx.posteriors(&bt, &theta)
    } else {
        Vec::new()
    };
    let trace = vec![TraceEntry {
        iteration: 0,
        theta,
        log_likelihood: loglik,
    }];
    Ok(FitResult::assemble(
        data,
        FitMethod::TwoStep,
        theta,
        loglik,
        1,
        step1.converged,
        trace,
        warnings,
        posteriors,
    ))
}

/// Ordinary least-squares slope of `y` on `x`; `None` when fewer than two
/// distinct abscissae are available.
fn regression_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let x_bar = points.iter().map(|(x, _)| x).sum::<f64>() / n;
    let y_bar = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - x_bar).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
    Some(sxy / sxx)
}

/// Direct maximum likelihood for the fixed-drift variants: a single shared
/// drift `μ_a` with `σ_a² = 0`. For fixed `(α, β, H)` the drift has the
/// generalized-least-squares closed form and `σ̂²` is the residual mean, so
/// only the structural parameters are searched.
pub fn mle_fixed(
    data: &AdtDataset,
    variant: ModelVariant,
    options: &FitOptions,
) -> Result<FitResult> {
    if variant.has_random_drift() {
        return Err(AdtError::InvalidParameter(format!(
            "direct fixed-drift maximization applies to fixed-drift variants; \
             {variant} should be fitted by EM"
        )));
    }
    let ctx = FitContext::new(data)?;
    let mut warnings: Vec<String> = Vec::new();
    let pin_hurst = if variant.estimates_memory() {
        None
    } else {
        Some(0.5)
    };
    let found = profile_search_impl(
        &ctx,
        DriftTreatment::Shared,
        pin_hurst,
        &options.bounds,
        &[],
    )?;
    if !found.converged {
        warnings.push(
            "shared-drift profile search did not meet its polish tolerance; \
             using the best point found"
                .into(),
        );
    }
    let ht = ctx.hurst_tables(found.hurst)?;
    let bt = ctx.basis_tables(&ht, found.beta);
    let (mu_a, residual) = ctx.shared_drift_fit(&ht, &bt, found.alpha);
    let sigma2 = (residual / ctx.n_obs as f64).max(1e-300);
    let theta = ModelParams::new(
        variant,
        mu_a,
        0.0,
        found.alpha,
        found.beta,
        sigma2,
        found.hurst,
    )?;
    let loglik = ctx.observed_loglik(&ht, &bt, &theta);
    let trace = vec![TraceEntry {
        iteration: 0,
        theta,
        log_likelihood: loglik,
    }];
    Ok(FitResult::assemble(
        data,
        FitMethod::MleFixed,
        theta,
        loglik,
        1,
        found.converged,
        trace,
        warnings,
        Vec::new(),
    ))
}
