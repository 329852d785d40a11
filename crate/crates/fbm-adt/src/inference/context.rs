//! Shared per-dataset computation tables.
//!
//! Every likelihood-flavoured quantity in this crate reduces, per unit, to a
//! handful of scalars in the metric of the unit-variance memory covariance
//! `Σ_H` on that unit's observation grid:
//!
//! * `c  = xᵀΣ_H⁻¹x`
//! * `b0 = xᵀΣ_H⁻¹τ` with `τ_j = t_j^β`
//! * `a0 = τᵀΣ_H⁻¹τ`
//!
//! The drift basis is `ψ = e·τ` with the level factor `e = exp(α·s*)`, so
//! `ψᵀΣ⁻¹ψ = e²·a0` and `xᵀΣ⁻¹ψ = e·b0`. Grouping the work by what it
//! depends on — grids (fixed), `H` (one Cholesky per distinct grid), then
//! `(H, β)` (one solve per distinct grid) — makes the profile scans cheap:
//! the `α` dimension costs only a few flops per unit.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::dataset::AdtDataset;
use crate::error::{AdtError, Result};
use crate::fbm::{fbm_covariance, FbmCovariance, HurstExponent, TimeGrid};
use crate::model::ModelParams;

use super::DriftPosterior;

/// One unit's data flattened for fast numeric access.
pub(crate) struct UnitEntry {
    /// Index of the stress level this unit belongs to.
    pub level: usize,
    /// Index into [`FitContext::grids`].
    pub grid_id: usize,
    /// Normalized stress of the unit's level.
    pub s_star: f64,
    /// Observed degradation values.
    pub x: DVector<f64>,
}

/// Precomputed dataset layout: distinct grids and per-unit views.
pub(crate) struct FitContext<'a> {
    pub data: &'a AdtDataset,
    pub grids: Vec<TimeGrid>,
    pub units: Vec<UnitEntry>,
    /// Total number of units, `Σ n_l`.
    pub n_units: usize,
    /// Total number of observations, `Σ Σ m_li`.
    pub n_obs: usize,
}

/// Everything that depends on the Hurst exponent alone: one factorized
/// unit-variance covariance per distinct grid plus per-unit solves.
pub(crate) struct HurstTables {
    /// Factorized `Σ_H`, parallel to [`FitContext::grids`].
    pub factors: Vec<FbmCovariance>,
    /// `xᵀΣ_H⁻¹x` per unit.
    pub c: Vec<f64>,
    /// `Σ_units ln|Σ_H|` over each unit's grid.
    pub sum_log_det: f64,
}

/// Adds the `β`-dependent power basis on top of [`HurstTables`].
pub(crate) struct BasisTables {
    /// `τᵀΣ_H⁻¹τ` per distinct grid.
    pub a0: Vec<f64>,
    /// `xᵀΣ_H⁻¹τ` per unit.
    pub b0: Vec<f64>,
}

impl<'a> FitContext<'a> {
    pub fn new(data: &'a AdtDataset) -> Result<Self> {
        let s_stars = data.normalized_stresses();
        let mut grids: Vec<TimeGrid> = Vec::new();
        let mut grid_index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut units = Vec::new();
        let mut n_obs = 0;
        for (level, stress_level) in data.levels().iter().enumerate() {
            for unit in stress_level.units() {
                let key: Vec<u64> = unit.grid().times().iter().map(|t| t.to_bits()).collect();
                let grid_id = *grid_index.entry(key).or_insert_with(|| {
                    grids.push(unit.grid().clone());
                    grids.len() - 1
                });
                n_obs += unit.len();
                units.push(UnitEntry {
                    level,
                    grid_id,
                    s_star: s_stars[level],
                    x: unit.values_vector(),
                });
            }
        }
        let n_units = units.len();
        Ok(Self {
            data,
            grids,
            units,
            n_units,
            n_obs,
        })
    }

    /// Factorize `Σ_H` on every distinct grid and run the per-unit solves.
    pub fn hurst_tables(&self, hurst: HurstExponent) -> Result<HurstTables> {
        let factors: Vec<FbmCovariance> = self
            .grids
            .iter()
            .map(|grid| fbm_covariance(grid, hurst, 1.0))
            .collect::<Result<_>>()?;
        let mut c = Vec::with_capacity(self.units.len());
        let mut sum_log_det = 0.0;
        for unit in &self.units {
            let factor = &factors[unit.grid_id];
            let solved = factor.solve(&unit.x);
            c.push(unit.x.dot(&solved));
            sum_log_det += factor.log_det();
        }
        Ok(HurstTables {
            factors,
            c,
            sum_log_det,
        })
    }

    /// Project the power basis `τ_j = t_j^β` through the factorizations.
    pub fn basis_tables(&self, ht: &HurstTables, beta: f64) -> BasisTables {
        let projected: Vec<(DVector<f64>, f64)> = self
            .grids
            .iter()
            .zip(&ht.factors)
            .map(|(grid, factor)| {
                let tau =
                    DVector::from_iterator(grid.len(), grid.times().iter().map(|t| t.powf(beta)));
                let u = factor.solve(&tau);
                let a0 = tau.dot(&u);
                (u, a0)
            })
            .collect();
        let a0 = projected.iter().map(|(_, a0)| *a0).collect();
        let b0 = self
            .units
            .iter()
            .map(|unit| unit.x.dot(&projected[unit.grid_id].0))
            .collect();
        BasisTables { a0, b0 }
    }

    /// Level factor `e = exp(α·s*)` for one unit.
    fn level_factor(&self, unit: &UnitEntry, alpha: f64) -> f64 {
        (alpha * unit.s_star).exp()
    }

    /// Drift posteriors for every unit at `theta`, in dataset unit order.
    ///
    /// `ht`/`bt` must have been built at `theta`'s Hurst exponent and time
    /// exponent. With `A = ψᵀΣ⁻¹ψ/1` and `b = xᵀΣ⁻¹ψ` (unit-variance
    /// metric), the posterior of the unit drift is Gaussian with
    ///
    /// * mean `(b·σ_a² + μ_a·σ²) / (A·σ_a² + σ²)`
    /// * variance `σ²·σ_a² / (A·σ_a² + σ²)`.
    pub fn posteriors(&self, bt: &BasisTables, theta: &ModelParams) -> Vec<DriftPosterior> {
        let (mu_a, sigma_a2) = (theta.drift_mean(), theta.drift_var());
        let sigma2 = theta.diffusion_var();
        self.units
            .iter()
            .enumerate()
            .map(|(i, unit)| {
                let e = self.level_factor(unit, theta.stress_coef());
                let a = e * e * bt.a0[unit.grid_id];
                let b = e * bt.b0[i];
                let denom = a * sigma_a2 + sigma2;
                DriftPosterior {
                    mean: (b * sigma_a2 + mu_a * sigma2) / denom,
                    var: sigma2 * sigma_a2 / denom,
                }
            })
            .collect()
    }

    /// Residual sum `S = Σ_li (c − 2·E[a]·e·b0 + E[a²]·e²·a0)` used by the
    /// expected complete-data log-likelihood; `σ̂² = S / n_obs`.
    pub fn em_residual_sum(
        &self,
        ht: &HurstTables,
        bt: &BasisTables,
        posteriors: &[DriftPosterior],
        alpha: f64,
    ) -> f64 {
        self.units
            .iter()
            .enumerate()
            .map(|(i, unit)| {
                let e = self.level_factor(unit, alpha);
                let p = &posteriors[i];
                let second_moment = p.mean * p.mean + p.var;
                ht.c[i] - 2.0 * p.mean * e * bt.b0[i] + second_moment * e * e * bt.a0[unit.grid_id]
            })
            .sum()
    }

    /// Residual sum when every unit gets its own free (profiled-out) drift:
    /// `S = Σ_li (c − b0²/a0)`, independent of `α` because the per-unit
    /// drift absorbs the level factor.
    pub fn free_drift_residual_sum(&self, ht: &HurstTables, bt: &BasisTables) -> f64 {
        self.units
            .iter()
            .enumerate()
            .map(|(i, unit)| ht.c[i] - bt.b0[i] * bt.b0[i] / bt.a0[unit.grid_id])
            .sum()
    }

    /// Generalized-least-squares drift shared by all units, and the residual
    /// sum at that drift: `â = Σ e·b0 / Σ e²·a0`, `S = Σc − â²·Σ e²·a0`.
    pub fn shared_drift_fit(&self, ht: &HurstTables, bt: &BasisTables, alpha: f64) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut total_c = 0.0;
        for (i, unit) in self.units.iter().enumerate() {
            let e = self.level_factor(unit, alpha);
            num += e * bt.b0[i];
            den += e * e * bt.a0[unit.grid_id];
            total_c += ht.c[i];
        }
        let drift = num / den;
        (drift, total_c - num * num / den)
    }

    /// Closed-form maximizers of the expected complete-data log-likelihood
    /// over `(μ_a, σ_a², σ²)` at fixed `(α, β, H)`.
    pub fn m_step(
        &self,
        ht: &HurstTables,
        bt: &BasisTables,
        posteriors: &[DriftPosterior],
        alpha: f64,
    ) -> (f64, f64, f64) {
        let n = self.n_units as f64;
        let mu_a = posteriors.iter().map(|p| p.mean).sum::<f64>() / n;
        let sigma_a2 = posteriors
            .iter()
            .map(|p| (p.mean - mu_a).powi(2) + p.var)
            .sum::<f64>()
            / n;
        // The residual sum is a sum of expected squared norms, so it is
        // non-negative in exact arithmetic; cancellation on near-exact fits
        // can round it below zero, hence the floor.
        let sigma2 =
            (self.em_residual_sum(ht, bt, posteriors, alpha) / self.n_obs as f64).max(1e-300);
        (mu_a, sigma_a2, sigma2)
    }

    /// Expected complete-data log-likelihood (the EM surrogate): the
    /// Gaussian observation part with the drift replaced by its posterior
    /// moments, plus the Gaussian drift-population part.
    pub fn q_value(
        &self,
        ht: &HurstTables,
        bt: &BasisTables,
        theta: &ModelParams,
        posteriors: &[DriftPosterior],
    ) -> Result<f64> {
        let sigma_a2 = theta.drift_var();
        if sigma_a2 <= 0.0 {
            return Err(AdtError::Estimation(
                "the EM surrogate needs a positive drift variance; \
                 fixed-drift variants are fitted directly"
                    .into(),
            ));
        }
        let sigma2 = theta.diffusion_var();
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let residual = self.em_residual_sum(ht, bt, posteriors, theta.stress_coef());
        let x_part = -0.5 * self.n_obs as f64 * (ln_2pi + sigma2.ln())
            - 0.5 * ht.sum_log_det
            - 0.5 * residual / sigma2;
        let mu_a = theta.drift_mean();
        let drift_dev: f64 = posteriors
            .iter()
            .map(|p| (p.mean - mu_a).powi(2) + p.var)
            .sum();
        let a_part =
            -0.5 * self.n_units as f64 * (ln_2pi + sigma_a2.ln()) - 0.5 * drift_dev / sigma_a2;
        Ok(x_part + a_part)
    }

    /// Observed-data (marginal) log-likelihood at `theta`.
    ///
    /// Marginalizing the unit drift gives `x ~ N(μ_a·ψ, σ²Σ_H + σ_a²·ψψᵀ)`;
    /// the rank-one update is evaluated with the matrix-determinant lemma
    /// and Sherman–Morrison on the cached solves, so no matrix is ever
    /// inverted explicitly.
    pub fn observed_loglik(&self, ht: &HurstTables, bt: &BasisTables, theta: &ModelParams) -> f64 {
        let (mu_a, sigma_a2) = (theta.drift_mean(), theta.drift_var());
        let sigma2 = theta.diffusion_var();
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let mut total = 0.0;
        for (i, unit) in self.units.iter().enumerate() {
            let e = self.level_factor(unit, theta.stress_coef());
            let a = e * e * bt.a0[unit.grid_id];
            let b = e * bt.b0[i];
            let m = unit.x.len() as f64;
            let log_det = ht.factors[unit.grid_id].log_det();
            let q0 = ht.c[i] - 2.0 * mu_a * b + mu_a * mu_a * a;
            let v = b - mu_a * a;
            let dilation = 1.0 + sigma_a2 * a / sigma2;
            total += -0.5
                * (m * (ln_2pi + sigma2.ln()) + log_det + dilation.ln() + q0 / sigma2
                    - sigma_a2 / (sigma2 * sigma2) * v * v / dilation);
        }
        total
    }
}
