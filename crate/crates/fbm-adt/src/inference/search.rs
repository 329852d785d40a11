//! Profile-likelihood search over the structural parameters `(α, β, H)`.
//!
//! For any of the three drift treatments the diffusion variance maximizer is
//! the closed form `σ̂² = S/M` with `S` the appropriate residual sum and `M`
//! the total observation count, so the profiled objective is
//!
//! ```text
//! q(α, β, H) = −(M/2)·ln(S(α, β, H)/M) − (1/2)·Σ_units ln|Σ_H|
//! ```
//!
//! The surface may be multimodal in `H`, so the search runs a deterministic
//! coarse grid first and then polishes the best grid point with bounded
//! Nelder–Mead. Both stages are free of randomness, making fits exactly
//! reproducible.

use crate::error::Result;
use crate::fbm::HurstExponent;
use crate::optim::{nelder_mead_max, NelderMeadOptions};

use super::context::{BasisTables, FitContext, HurstTables};
use super::{DriftPosterior, SearchBounds};

/// Guard against `ln(0)` when a residual sum underflows to zero (exact-fit
/// degeneracies); anything at this floor still dominates every honest fit.
const RESIDUAL_FLOOR: f64 = 1e-300;

/// How the drift enters the profiled likelihood.
pub(crate) enum DriftTreatment<'p> {
    /// EM surrogate: drift moments fixed at the current posteriors.
    Posterior(&'p [DriftPosterior]),
    /// Each unit has its own profiled-out drift (the objective is then flat
    /// in `α`, which therefore is not searched).
    FreePerUnit,
    /// One deterministic drift shared by every unit.
    Shared,
}

/// Maximizer returned by [`profile_search_impl`].
pub(crate) struct SearchOutcome {
    pub alpha: f64,
    pub beta: f64,
    pub hurst: HurstExponent,
    pub objective: f64,
    pub converged: bool,
}

fn residual_sum(
    ctx: &FitContext,
    treatment: &DriftTreatment,
    ht: &HurstTables,
    bt: &BasisTables,
    alpha: f64,
) -> f64 {
    let s = match treatment {
        DriftTreatment::Posterior(posteriors) => ctx.em_residual_sum(ht, bt, posteriors, alpha),
        DriftTreatment::FreePerUnit => ctx.free_drift_residual_sum(ht, bt),
        DriftTreatment::Shared => ctx.shared_drift_fit(ht, bt, alpha).1,
    };
    s.max(RESIDUAL_FLOOR)
}

fn objective_at(
    ctx: &FitContext,
    treatment: &DriftTreatment,
    ht: &HurstTables,
    bt: &BasisTables,
    alpha: f64,
) -> f64 {
    let m = ctx.n_obs as f64;
    let s = residual_sum(ctx, treatment, ht, bt, alpha);
    -0.5 * m * (s / m).ln() - 0.5 * ht.sum_log_det
}

/// Inclusive 1-D grid: `lo`, steps of `step`, always ending exactly at `hi`.
fn axis_grid(lo: f64, hi: f64, step: f64, skip_lo: bool) -> Vec<f64> {
    let mut points = Vec::new();
    if !skip_lo {
        points.push(lo);
    }
    let mut k = 1usize;
    loop {
        let p = lo + k as f64 * step;
        if p >= hi - 1e-12 * step {
            break;
        }
        points.push(p);
        k += 1;
    }
    points.push(hi);
    points
}

fn alpha_grid(bounds: &SearchBounds) -> Vec<f64> {
    let (lo, hi) = bounds.stress_coef;
    (0..9).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect()
}

/// Deterministic two-stage maximization of the profiled objective.
///
/// `pin_hurst` freezes the memory dimension (memoryless variants);
/// `extra_candidates` are `(α, β, H)` triples evaluated alongside the grid —
/// the EM loop passes the previous iterate so the generalized E/M step can
/// never decrease the surrogate.
pub(crate) fn profile_search_impl(
    ctx: &FitContext,
    treatment: DriftTreatment,
    pin_hurst: Option<f64>,
    bounds: &SearchBounds,
    extra_candidates: &[(f64, f64, f64)],
) -> Result<SearchOutcome> {
    let search_alpha = !matches!(treatment, DriftTreatment::FreePerUnit);
    let (h_lo, h_hi) = bounds.hurst_clamped();
    let h_grid: Vec<f64> = match pin_hurst {
        Some(h) => vec![h],
        None => axis_grid(h_lo, h_hi, 0.05, false),
    };
    let beta_grid = axis_grid(bounds.time_exp.0, bounds.time_exp.1, 0.25, true);
    let alphas = if search_alpha {
        alpha_grid(bounds)
    } else {
        vec![0.0]
    };
    // The lower β bound is exclusive (β = 0 is not a valid time exponent),
    // so the polish box keeps a hair of clearance.
    let beta_box = (
        bounds.time_exp.0 + 1e-6 * (bounds.time_exp.1 - bounds.time_exp.0),
        bounds.time_exp.1,
    );

    // Stage 1: coarse grid, iterated H-major so each Cholesky set and each
    // basis projection is reused across the cheaper inner dimensions.
    let mut best: Option<(f64, f64, f64, f64)> = None; // (value, α, β, H)
    let mut consider = |value: f64, alpha: f64, beta: f64, h: f64| {
        let better = match &best {
            Some((v, ..)) => value > *v,
            None => true,
        };
        if better && value.is_finite() {
            best = Some((value, alpha, beta, h));
        }
    };
    for &h in &h_grid {
        let ht = ctx.hurst_tables(HurstExponent::new(h)?)?;
        for &beta in &beta_grid {
            let bt = ctx.basis_tables(&ht, beta);
            for &alpha in &alphas {
                consider(
                    objective_at(ctx, &treatment, &ht, &bt, alpha),
                    alpha,
                    beta,
                    h,
                );
            }
        }
    }
    for &(alpha, beta, h) in extra_candidates {
        let h = if let Some(pinned) = pin_hurst {
            pinned
        } else {
            h.clamp(h_lo, h_hi)
        };
        let beta = beta.clamp(beta_box.0, beta_box.1);
        let alpha = alpha.clamp(bounds.stress_coef.0, bounds.stress_coef.1);
        let ht = ctx.hurst_tables(HurstExponent::new(h)?)?;
        let bt = ctx.basis_tables(&ht, beta);
        let a = if search_alpha { alpha } else { 0.0 };
        consider(objective_at(ctx, &treatment, &ht, &bt, a), a, beta, h);
    }
    let (grid_value, alpha0, beta0, h0) =
        best.expect("profile grid is never empty and the objective is finite somewhere");

    // Stage 2: bounded Nelder–Mead polish from the best point so far. The
    // active coordinates depend on the treatment and on whether H is pinned.
    let mut start = Vec::new();
    let mut boxes = Vec::new();
    if search_alpha {
        start.push(alpha0);
        boxes.push(bounds.stress_coef);
    }
    start.push(beta0);
    boxes.push(beta_box);
    if pin_hurst.is_none() {
        start.push(h0);
        boxes.push((h_lo, h_hi));
    }

    let evaluate = |point: &[f64]| -> f64 {
        let mut idx = 0;
        let alpha = if search_alpha {
            idx += 1;
            point[0]
        } else {
            0.0
        };
        let beta = point[idx];
        idx += 1;
        let h = pin_hurst.unwrap_or_else(|| point[idx]);
        let hurst = match HurstExponent::new(h) {
            Ok(h) => h,
            Err(_) => return f64::NEG_INFINITY,
        };
        let ht = match ctx.hurst_tables(hurst) {
            Ok(t) => t,
            Err(_) => return f64::NEG_INFINITY,
        };
        let bt = ctx.basis_tables(&ht, beta);
        objective_at(ctx, &treatment, &ht, &bt, alpha)
    };
    let polished = nelder_mead_max(evaluate, &start, &boxes, &NelderMeadOptions::default());

    let (value, alpha, beta, h) = if polished.value > grid_value {
        let mut idx = 0;
        let alpha = if search_alpha {
            idx += 1;
            polished.point[0]
        } else {
            0.0
        };
        let beta = polished.point[idx];
        idx += 1;
        let h = if pin_hurst.is_none() {
            polished.point[idx]
        } else {
            h0
        };
        (polished.value, alpha, beta, h)
    } else {
        (grid_value, alpha0, beta0, h0)
    };
    Ok(SearchOutcome {
        alpha,
        beta,
        hurst: HurstExponent::new(h)?,
        objective: value,
        converged: polished.converged,
    })
}
