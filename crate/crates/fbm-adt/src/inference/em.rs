//! EM estimation for the random-drift variants.
//!
//! Each iteration alternates
//!
//! 1. **E-step** — Gaussian drift posteriors per unit at the current θ;
//! 2. **M-step** — a deterministic profile search over `(α, β, H)` (with H
//!    pinned at 1/2 for the memoryless variant) maximizing the expected
//!    complete-data log-likelihood with `(μ_a, σ_a², σ²)` profiled out,
//!    followed by their closed-form updates at the chosen point.
//!
//! The previous `(α, β, H)` is always kept in the candidate set, so the step
//! is a *generalized* M-step: the surrogate cannot decrease, which makes the
//! observed-data log-likelihood non-decreasing up to floating-point noise.
//! Convergence is declared when every parameter's relative change
//! `|Δθ_j| / (|θ_j| + 1e-12)` drops to the tolerance.

use crate::dataset::AdtDataset;
use crate::error::{AdtError, Result};
use crate::model::ModelParams;

use super::context::FitContext;
use super::search::{profile_search_impl, DriftTreatment};
use super::{FitMethod, FitOptions, FitResult, TraceEntry};

/// Largest parameter-wise relative change between two iterates.
fn relative_change(prev: &ModelParams, next: &ModelParams) -> f64 {
    prev.as_vector()
        .iter()
        .zip(next.as_vector())
        .map(|(old, new)| (new - old).abs() / (old.abs() + 1e-12))
        .fold(0.0, f64::max)
}

/// Fit a random-drift variant by EM from the starting point `theta0`.
pub fn em_fit(data: &AdtDataset, theta0: &ModelParams, options: &FitOptions) -> Result<FitResult> {
    let variant = theta0.variant();
    if !variant.has_random_drift() {
        return Err(AdtError::Estimation(format!(
            "variant {variant} has no drift distribution to integrate out; \
             fit it with the direct fixed-drift maximizer instead"
        )));
    }
    let ctx = FitContext::new(data)?;
    let mut warnings: Vec<String> = Vec::new();
    if theta0.drift_var() == 0.0 {
        warnings.push(
            "the starting drift variance is exactly zero, which is a fixed \
             point of the EM map; the fit will stay on that boundary"
                .into(),
        );
    }

    let pin_hurst = if variant.estimates_memory() {
        None
    } else {
        Some(0.5)
    };
    let mut theta = *theta0;
    let ht = ctx.hurst_tables(theta.hurst())?;
    let mut bt = ctx.basis_tables(&ht, theta.time_exp());
    let mut loglik = ctx.observed_loglik(&ht, &bt, &theta);
    let mut trace = vec![TraceEntry {
        iteration: 0,
        theta,
        log_likelihood: loglik,
    }];
    let mut converged = false;
    let mut iterations = 0;

    for p in 1..=options.max_iter {
        let posteriors = ctx.posteriors(&bt, &theta);
        let previous = (theta.stress_coef(), theta.time_exp(), theta.hurst().value());
        let found = profile_search_impl(
            &ctx,
            DriftTreatment::Posterior(&posteriors),
            pin_hurst,
            &options.bounds,
            &[previous],
        )?;
        if !found.converged {
            warnings.push(format!(
                "profile search did not meet its polish tolerance at iteration {p}; \
                 using the best point found"
            ));
        }
        let next_ht = ctx.hurst_tables(found.hurst)?;
        let next_bt = ctx.basis_tables(&next_ht, found.beta);
        let (mu_a, sigma_a2, sigma2) = ctx.m_step(&next_ht, &next_bt, &posteriors, found.alpha);
        let next = ModelParams::new(
            variant,
            mu_a,
            sigma_a2,
            found.alpha,
            found.beta,
            sigma2,
            found.hurst,
        )?;

        let next_loglik = ctx.observed_loglik(&next_ht, &next_bt, &next);
        if next_loglik < loglik - 1e-6 {
            warnings.push(format!(
                "observed log-likelihood decreased by {:.3e} at iteration {p}, \
                 beyond floating-point noise",
                loglik - next_loglik
            ));
        }
        trace.push(TraceEntry {
            iteration: p,
            theta: next,
            log_likelihood: next_loglik,
        });

        let delta = relative_change(&theta, &next);
        theta = next;
        bt = next_bt;
        loglik = next_loglik;
        iterations = p;
        if delta <= options.epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "EM stopped at the iteration cap ({}) before meeting the relative \
             tolerance {}",
            options.max_iter, options.epsilon
        ));
    }

    let posteriors = ctx.posteriors(&bt, &theta);
    Ok(FitResult::assemble(
        data,
        FitMethod::Em,
        theta,
        loglik,
        iterations,
        converged,
        trace,
        warnings,
        posteriors,
    ))
}
