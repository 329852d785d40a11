//! Fractional Brownian motion: covariance structure and exact samplers.
//!
//! A standard fractional Brownian motion `B_H` with Hurst exponent
//! `H ∈ (0, 1)` is the centered Gaussian process with
//!
//! ```text
//! Cov[B_H(t), B_H(r)] = (t^{2H} + r^{2H} - |t - r|^{2H}) / 2 .
//! ```
//!
//! `H = 1/2` recovers standard Brownian motion with independent increments;
//! `H < 1/2` gives anti-persistent (negatively correlated) increments, and
//! `H > 1/2` persistent, long-memory increments. Degradation noise with
//! memory is modeled as `σ·B_H(t)`.
//!
//! Two exact samplers are provided:
//!
//! * [`FgnSampler`] draws fractional Gaussian noise (the stationary
//!   increment process) on uniform grids by circulant embedding, one FFT per
//!   path; [`simulate_fbm_path`] accumulates it into an FBM path.
//! * [`FbmCovariance::sample`] draws FBM values on an arbitrary strictly
//!   increasing grid through a Cholesky factor of the exact covariance,
//!   which is what observation grids (that neither start at zero nor need
//!   to be uniform) use.

mod fgn;

pub use fgn::{simulate_fgn, FgnSampler};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AdtError, Result};

/// Hurst exponent of a fractional Brownian motion, constrained to (0, 1).
///
/// Values are stored clamped to `[MIN, MAX]` so covariance computations stay
/// numerically regular arbitrarily close to the endpoints.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstExponent(f64);

impl HurstExponent {
    /// Lower end of the storage range.
    pub const MIN: f64 = 1e-8;
    /// Upper end of the storage range.
    pub const MAX: f64 = 1.0 - 1e-8;
    /// The memoryless special case `H = 1/2`.
    pub const BROWNIAN: Self = Self(0.5);

    /// Validate `h ∈ (0, 1)`; values within the open interval but closer to
    /// an endpoint than [`Self::MIN`] are clamped to the storage range.
    pub fn new(h: f64) -> Result<Self> {
        if !h.is_finite() || h <= 0.0 || h >= 1.0 {
            return Err(AdtError::InvalidParameter(format!(
                "Hurst exponent must lie in (0, 1), got {h}"
            )));
        }
        Ok(Self(h.clamp(Self::MIN, Self::MAX)))
    }

    /// Clamp an unconstrained search iterate into the storage range.
    pub fn clamped(h: f64) -> Self {
        if h.is_nan() {
            Self::BROWNIAN
        } else {
            Self(h.clamp(Self::MIN, Self::MAX))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for HurstExponent {
    type Error = String;

    fn try_from(h: f64) -> std::result::Result<Self, String> {
        Self::new(h).map_err(|e| e.to_string())
    }
}

impl From<HurstExponent> for f64 {
    fn from(h: HurstExponent) -> f64 {
        h.0
    }
}

/// Strictly increasing grid of non-negative times (hours).
///
/// Observation grids start strictly after zero; simulation grids for path
/// sampling start at exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(AdtError::InvalidGrid("grid is empty".into()));
        }
        if !times[0].is_finite() || times[0] < 0.0 {
            return Err(AdtError::InvalidGrid(format!(
                "times must be finite and non-negative, got {}",
                times[0]
            )));
        }
        for w in times.windows(2) {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(AdtError::InvalidGrid(format!(
                    "times must be strictly increasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self { times })
    }

    /// Uniform grid `0, step, 2·step, ..., n_steps·step` (n_steps + 1 points).
    pub fn uniform_from_zero(step: f64, n_steps: usize) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(AdtError::InvalidGrid(format!(
                "step must be positive, got {step}"
            )));
        }
        if n_steps == 0 {
            return Err(AdtError::InvalidGrid(
                "uniform grid needs at least one step".into(),
            ));
        }
        Ok(Self {
            times: (0..=n_steps).map(|j| j as f64 * step).collect(),
        })
    }

    /// Inspection grid `interval, 2·interval, ..., count·interval` (no zero).
    pub fn inspection(interval: f64, count: usize) -> Result<Self> {
        if !interval.is_finite() || interval <= 0.0 {
            return Err(AdtError::InvalidGrid(format!(
                "inspection interval must be positive, got {interval}"
            )));
        }
        if count == 0 {
            return Err(AdtError::InvalidGrid(
                "inspection grid needs at least one time".into(),
            ));
        }
        Ok(Self {
            times: (1..=count).map(|j| j as f64 * interval).collect(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one time
    }

    pub fn first(&self) -> f64 {
        self.times[0]
    }

    pub fn last(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Step size if the grid is uniform and starts at exactly zero (checked
    /// to a 1e-9 relative drift), which the FFT path sampler requires.
    pub fn uniform_step_from_zero(&self) -> Option<f64> {
        if self.times[0] != 0.0 || self.times.len() < 2 {
            return None;
        }
        let step = self.times[1];
        for (j, &t) in self.times.iter().enumerate() {
            let expected = j as f64 * step;
            if (t - expected).abs() > 1e-9 * step * j.max(1) as f64 {
                return None;
            }
        }
        Some(step)
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = String;

    fn try_from(times: Vec<f64>) -> std::result::Result<Self, String> {
        Self::new(times).map_err(|e| e.to_string())
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Vec<f64> {
        grid.times
    }
}

/// Relative jitter ladder tried when a covariance Cholesky fails; multiples
/// of the mean diagonal are added to the diagonal until factorization
/// succeeds. The entries of [`FbmCovariance::matrix`] stay exact; only the
/// factor (and hence `log_det`) absorbs the jitter.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Exact FBM covariance `σ²·(t^{2H} + r^{2H} - |t-r|^{2H})/2` on a grid of
/// strictly positive times, with a cached Cholesky factor for solves,
/// log-determinants, and exact sampling.
#[derive(Debug, Clone)]
pub struct FbmCovariance {
    grid: TimeGrid,
    hurst: HurstExponent,
    sigma2: f64,
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    log_det: f64,
    jitter: f64,
}

/// Build the covariance of `σ·B_H` on `grid` and factorize it.
///
/// All grid times must be strictly positive (a zero time would inject an
/// identically-zero coordinate). Near-singular matrices — e.g. `H` close to
/// one, where the covariance degenerates towards rank one — are regularized
/// with the documented jitter ladder; if even the largest jitter fails the
/// factorization, a conditioning error is returned rather than a silently
/// truncated matrix.
pub fn fbm_covariance(grid: &TimeGrid, hurst: HurstExponent, sigma2: f64) -> Result<FbmCovariance> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(AdtError::InvalidParameter(format!(
            "diffusion variance must be positive, got {sigma2}"
        )));
    }
    if grid.first() <= 0.0 {
        return Err(AdtError::InvalidGrid(
            "covariance grids need strictly positive times".into(),
        ));
    }
    let times = grid.times();
    let n = times.len();
    let two_h = 2.0 * hurst.value();
    let pow: Vec<f64> = times.iter().map(|t| t.powf(two_h)).collect();
    let mut matrix = DMatrix::zeros(n, n);
    for u in 0..n {
        for v in 0..=u {
            let gap = (times[u] - times[v]).abs();
            let cov = 0.5 * sigma2 * (pow[u] + pow[v] - gap.powf(two_h));
            matrix[(u, v)] = cov;
            matrix[(v, u)] = cov;
        }
    }

    match cholesky_with_jitter(&matrix) {
        Some((factor, log_det, jitter)) => Ok(FbmCovariance {
            grid: grid.clone(),
            hurst,
            sigma2,
            matrix,
            factor,
            log_det,
            jitter,
        }),
        None => Err(AdtError::Conditioning(format!(
            "FBM covariance not factorizable at H = {} even with jittered diagonal",
            hurst.value(),
        ))),
    }
}

/// Factorize a symmetric matrix, escalating through the jitter ladder when the
/// plain Cholesky fails. Returns the factor, its log-determinant, and the
/// jitter that was needed (0 in the well-conditioned common case), or `None`
/// when even the largest jitter leaves the matrix indefinite.
pub(crate) fn cholesky_with_jitter(
    matrix: &DMatrix<f64>,
) -> Option<(Cholesky<f64, Dyn>, f64, f64)> {
    let n = matrix.nrows();
    let mean_diag = matrix.diagonal().sum() / n as f64;
    for &rel in JITTER_LADDER.iter() {
        let jitter = rel * mean_diag;
        let mut candidate = matrix.clone();
        for d in 0..n {
            candidate[(d, d)] += jitter;
        }
        if let Some(factor) = Cholesky::new(candidate) {
            let log_det = 2.0
                * factor
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d.ln())
                    .sum::<f64>();
            return Some((factor, log_det, jitter));
        }
    }
    None
}

impl FbmCovariance {
    /// Exact covariance entries (no jitter applied).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Log-determinant of the factorized (possibly jittered) matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal jitter that was needed for the factorization (0 for the
    /// common well-conditioned case).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solve `Σ y = rhs` with the cached factor.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }

    /// Draw one exact sample of `σ·B_H` on the grid: `L·z` with `z` standard
    /// normal, drawn in index order from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = self.factor.l_dirty();
        let mut out = vec![0.0; n];
        for (row, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for col in 0..=row {
                acc += l[(row, col)] * z[col];
            }
            *slot = acc;
        }
        out
    }
}

/// Sample one standard FBM path on a uniform grid that starts at exactly
/// zero: the value at `t_k` is the cumulative sum of `k` fGn increments, and
/// the path starts at exactly zero.
pub fn simulate_fbm_path<R: Rng + ?Sized>(
    grid: &TimeGrid,
    hurst: HurstExponent,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let step = grid.uniform_step_from_zero().ok_or_else(|| {
        AdtError::InvalidGrid("FBM path sampling needs a uniform grid starting at zero".into())
    })?;
    let sampler = FgnSampler::new(grid.len() - 1, step, hurst)?;
    let fgn = sampler.sample(rng);
    let mut path = Vec::with_capacity(grid.len());
    path.push(0.0);
    let mut acc = 0.0;
    for inc in fgn {
        acc += inc;
        path.push(acc);
    }
    Ok(path)
}
