//! Accelerated degradation model: stress normalization, drift scaling, and
//! the mean degradation trend.
//!
//! The degradation of unit `i` tested at stress `s` is modeled as
//!
//! ```text
//! X(t) = a_i · exp(α·s*) · t^β + σ · B_H(t) ,
//! ```
//!
//! where `s*` is the stress normalized to [0, 1] by an acceleration law,
//! `a_i ~ N(μ_a, σ_a²)` is a unit-specific drift capturing unit-to-unit
//! variability, `β > 0` is a common time-shape exponent, and `B_H` is a
//! standard fractional Brownian motion whose Hurst exponent `H` captures
//! temporal memory in the noise. Restricting `σ_a² = 0` (common drift)
//! and/or `H = 1/2` (memoryless noise) yields the four variants compared
//! during model selection.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{AdtError, Result};
use crate::fbm::{HurstExponent, TimeGrid};

/// Offset between Celsius and Kelvin; Arrhenius stresses are temperatures
/// in °C and are converted to the absolute scale internally.
pub const KELVIN_OFFSET: f64 = 273.15;

/// Acceleration law used to normalize stress to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccelerationKind {
    /// Temperature acceleration, `φ(s) = 1/(s + 273.15)` on reciprocal
    /// absolute temperature.
    Arrhenius,
    /// Power-law acceleration on `ln s` (e.g. voltage, mechanical load).
    PowerLaw,
    /// Exponential (linear-in-`s`) acceleration.
    Exponential,
}

impl std::fmt::Display for AccelerationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AccelerationKind::Arrhenius => "arrhenius",
            AccelerationKind::PowerLaw => "power-law",
            AccelerationKind::Exponential => "exponential",
        })
    }
}

impl std::str::FromStr for AccelerationKind {
    type Err = AdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arrhenius" => Ok(AccelerationKind::Arrhenius),
            "power-law" => Ok(AccelerationKind::PowerLaw),
            "exponential" => Ok(AccelerationKind::Exponential),
            other => Err(AdtError::InvalidParameter(format!(
                "unknown acceleration kind {other:?} (expected arrhenius, power-law, or exponential)"
            ))),
        }
    }
}

/// Anchors of the stress normalization: the normal operating stress maps to
/// 0 and the highest test stress maps to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressSpec {
    kind: AccelerationKind,
    normal: f64,
    highest: f64,
}

impl StressSpec {
    pub fn new(kind: AccelerationKind, normal: f64, highest: f64) -> Result<Self> {
        let spec = Self {
            kind,
            normal,
            highest,
        };
        if !normal.is_finite() || !highest.is_finite() || normal == highest {
            return Err(AdtError::InvalidParameter(format!(
                "stress anchors must be finite and distinct, got normal {normal}, highest {highest}"
            )));
        }
        spec.transform(normal)?;
        spec.transform(highest)?;
        Ok(spec)
    }

    pub fn kind(&self) -> AccelerationKind {
        self.kind
    }

    pub fn normal(&self) -> f64 {
        self.normal
    }

    pub fn highest(&self) -> f64 {
        self.highest
    }

    /// The acceleration law's raw transform, before anchoring.
    fn transform(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(AdtError::StressDomain(format!(
                "stress must be finite, got {s}"
            )));
        }
        match self.kind {
            AccelerationKind::Arrhenius => {
                let kelvin = s + KELVIN_OFFSET;
                if kelvin <= 0.0 {
                    return Err(AdtError::StressDomain(format!(
                        "temperature {s} °C is at or below absolute zero"
                    )));
                }
                Ok(1.0 / kelvin)
            }
            AccelerationKind::PowerLaw => {
                if s <= 0.0 {
                    return Err(AdtError::StressDomain(format!(
                        "power-law stress must be positive, got {s}"
                    )));
                }
                Ok(s.ln())
            }
            AccelerationKind::Exponential => Ok(s),
        }
    }

    /// Normalize a stress: 0 at the normal stress, 1 at the highest stress,
    /// monotone in between.
    ///
    /// For Arrhenius: `(1/s₀ − 1/s) / (1/s₀ − 1/s_H)` on absolute
    /// temperature; for the power law the same anchored ratio on `ln s`;
    /// for the exponential law on `s` itself.
    pub fn normalize(&self, s: f64) -> Result<f64> {
        let phi = self.transform(s)?;
        let phi0 = self.transform(self.normal)?;
        let phi_h = self.transform(self.highest)?;
        match self.kind {
            // 1/s is decreasing in s, so the anchored ratio flips sign.
            AccelerationKind::Arrhenius => Ok((phi0 - phi) / (phi0 - phi_h)),
            _ => Ok((phi - phi0) / (phi_h - phi0)),
        }
    }
}

/// Convenience free-function form of [`StressSpec::normalize`].
pub fn normalize_stress(s: f64, spec: &StressSpec) -> Result<f64> {
    spec.normalize(s)
}

/// Which model components are active during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Random unit drift and estimated memory exponent.
    Full,
    /// Common (non-random) drift; memory exponent estimated.
    FixedDrift,
    /// Random drift; memoryless noise (`H` pinned to 1/2).
    Memoryless,
    /// Common drift and memoryless noise: the classical power-law
    /// Wiener-process model.
    Basic,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Full,
        ModelVariant::FixedDrift,
        ModelVariant::Memoryless,
        ModelVariant::Basic,
    ];

    /// Whether the drift is a random effect (`σ_a²` estimated).
    pub fn has_random_drift(self) -> bool {
        matches!(self, ModelVariant::Full | ModelVariant::Memoryless)
    }

    /// Whether the Hurst exponent is estimated (vs pinned to 1/2).
    pub fn estimates_memory(self) -> bool {
        matches!(self, ModelVariant::Full | ModelVariant::FixedDrift)
    }

    /// Number of free parameters: drift mean, stress coefficient, time
    /// exponent, and diffusion always; plus drift variance and/or Hurst
    /// exponent when active.
    pub fn n_params(self) -> usize {
        4 + usize::from(self.has_random_drift()) + usize::from(self.estimates_memory())
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelVariant::Full => "full",
            ModelVariant::FixedDrift => "fixed-drift",
            ModelVariant::Memoryless => "memoryless",
            ModelVariant::Basic => "basic",
        })
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = AdtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ModelVariant::Full),
            "fixed-drift" => Ok(ModelVariant::FixedDrift),
            "memoryless" => Ok(ModelVariant::Memoryless),
            "basic" => Ok(ModelVariant::Basic),
            other => Err(AdtError::InvalidParameter(format!(
                "unknown model variant {other:?} (expected full, fixed-drift, memoryless, or basic)"
            ))),
        }
    }
}

/// Full parameter vector `(μ_a, σ_a², α, β, σ², H)` with its variant mask.
///
/// Variances are stored on the variance scale; the serialized form (JSON,
/// TOML) uses standard deviations `drift_sd`/`diffusion_sd`, matching how
/// estimates are usually tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParamsRepr", into = "ModelParamsRepr")]
pub struct ModelParams {
    variant: ModelVariant,
    drift_mean: f64,
    drift_var: f64,
    stress_coef: f64,
    time_exp: f64,
    diffusion_var: f64,
    hurst: HurstExponent,
}

/// Serialized face of [`ModelParams`] (standard-deviation scale).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParamsRepr {
    pub variant: ModelVariant,
    pub drift_mean: f64,
    pub drift_sd: f64,
    pub stress_coef: f64,
    pub time_exp: f64,
    pub diffusion_sd: f64,
    pub hurst: f64,
}

impl ModelParams {
    /// Validate and assemble a parameter vector (variance scale).
    ///
    /// Fixed-drift variants must pass `drift_var = 0`; memoryless variants
    /// must pass `hurst = 1/2` exactly.
    pub fn new(
        variant: ModelVariant,
        drift_mean: f64,
        drift_var: f64,
        stress_coef: f64,
        time_exp: f64,
        diffusion_var: f64,
        hurst: HurstExponent,
    ) -> Result<Self> {
        if !drift_mean.is_finite() {
            return Err(AdtError::InvalidParameter(format!(
                "drift mean must be finite, got {drift_mean}"
            )));
        }
        if !drift_var.is_finite() || drift_var < 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "drift variance must be non-negative, got {drift_var}"
            )));
        }
        if !stress_coef.is_finite() {
            return Err(AdtError::InvalidParameter(format!(
                "stress coefficient must be finite, got {stress_coef}"
            )));
        }
        if !time_exp.is_finite() || time_exp <= 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "time exponent must be positive, got {time_exp}"
            )));
        }
        if !diffusion_var.is_finite() || diffusion_var <= 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "diffusion variance must be positive, got {diffusion_var}"
            )));
        }
        if !variant.has_random_drift() && drift_var != 0.0 {
            return Err(AdtError::InvalidParameter(format!(
                "variant {variant} fixes the drift, so drift variance must be 0, got {drift_var}"
            )));
        }
        if !variant.estimates_memory() && hurst.value() != 0.5 {
            return Err(AdtError::InvalidParameter(format!(
                "variant {variant} is memoryless, so the Hurst exponent must be 1/2, got {}",
                hurst.value()
            )));
        }
        Ok(Self {
            variant,
            drift_mean,
            drift_var,
            stress_coef,
            time_exp,
            diffusion_var,
            hurst,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn drift_mean(&self) -> f64 {
        self.drift_mean
    }

    pub fn drift_var(&self) -> f64 {
        self.drift_var
    }

    pub fn drift_sd(&self) -> f64 {
        self.drift_var.sqrt()
    }

    pub fn stress_coef(&self) -> f64 {
        self.stress_coef
    }

    pub fn time_exp(&self) -> f64 {
        self.time_exp
    }

    pub fn diffusion_var(&self) -> f64 {
        self.diffusion_var
    }

    pub fn diffusion_sd(&self) -> f64 {
        self.diffusion_var.sqrt()
    }

    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    /// The parameter vector in the fixed order `(μ_a, σ_a², α, β, σ², H)`,
    /// used for convergence checks and tabulation.
    pub fn as_vector(&self) -> [f64; 6] {
        [
            self.drift_mean,
            self.drift_var,
            self.stress_coef,
            self.time_exp,
            self.diffusion_var,
            self.hurst.value(),
        ]
    }

    /// Effective drift distribution at normalized stress `s*`: the drift
    /// `a·exp(α·s*)` is `N(μ_e, σ_e²)` with mean `μ_a·exp(α·s*)` and
    /// standard deviation `σ_a·exp(α·s*)`.
    pub fn drift_distribution(&self, s_star: f64) -> (f64, f64) {
        let scale = (self.stress_coef * s_star).exp();
        (self.drift_mean * scale, self.drift_sd() * scale)
    }

    /// Mean degradation `μ_a·exp(α·s*)·t^β` at time `t`.
    pub fn trend(&self, s_star: f64, t: f64) -> f64 {
        self.drift_mean * (self.stress_coef * s_star).exp() * t.powf(self.time_exp)
    }

    /// Per-observation regression basis `exp(α·s*)·t_j^β`: the degradation
    /// mean is the unit drift `a` times this vector.
    pub fn basis_vector(&self, s_star: f64, grid: &TimeGrid) -> DVector<f64> {
        let scale = (self.stress_coef * s_star).exp();
        DVector::from_iterator(
            grid.len(),
            grid.times().iter().map(|t| scale * t.powf(self.time_exp)),
        )
    }
}

impl TryFrom<ModelParamsRepr> for ModelParams {
    type Error = String;

    fn try_from(r: ModelParamsRepr) -> std::result::Result<Self, String> {
        if !r.drift_sd.is_finite() || r.drift_sd < 0.0 {
            return Err(format!("drift sd must be non-negative, got {}", r.drift_sd));
        }
        if !r.diffusion_sd.is_finite() || r.diffusion_sd <= 0.0 {
            return Err(format!(
                "diffusion sd must be positive, got {}",
                r.diffusion_sd
            ));
        }
        let hurst = if r.variant.estimates_memory() {
            HurstExponent::new(r.hurst).map_err(|e| e.to_string())?
        } else if r.hurst == 0.5 {
            HurstExponent::BROWNIAN
        } else {
            return Err(format!(
                "variant {} is memoryless, so hurst must be 0.5, got {}",
                r.variant, r.hurst
            ));
        };
        ModelParams::new(
            r.variant,
            r.drift_mean,
            r.drift_sd * r.drift_sd,
            r.stress_coef,
            r.time_exp,
            r.diffusion_sd * r.diffusion_sd,
            hurst,
        )
        .map_err(|e| e.to_string())
    }
}

impl From<ModelParams> for ModelParamsRepr {
    fn from(p: ModelParams) -> Self {
        Self {
            variant: p.variant,
            drift_mean: p.drift_mean,
            drift_sd: p.drift_sd(),
            stress_coef: p.stress_coef,
            time_exp: p.time_exp,
            diffusion_sd: p.diffusion_sd(),
            hurst: p.hurst.value(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn arrhenius_40_120() -> StressSpec {
        StressSpec::new(AccelerationKind::Arrhenius, 40.0, 120.0).unwrap()
    }

    #[test]
    fn arrhenius_normalization_reference_value() {
        let spec = arrhenius_40_120();
        assert_abs_diff_eq!(spec.normalize(100.0).unwrap(), 0.79018, epsilon = 1e-4);
    }

    #[test]
    fn normalization_endpoints_are_exact() {
        for spec in [
            arrhenius_40_120(),
            StressSpec::new(AccelerationKind::PowerLaw, 2.0, 8.0).unwrap(),
            StressSpec::new(AccelerationKind::Exponential, 10.0, 50.0).unwrap(),
        ] {
            assert_eq!(spec.normalize(spec.normal()).unwrap(), 0.0);
            assert_eq!(spec.normalize(spec.highest()).unwrap(), 1.0);
        }
    }

    #[test]
    fn power_law_and_exponential_formulas() {
        let power = StressSpec::new(AccelerationKind::PowerLaw, 2.0, 8.0).unwrap();
        let expected = (4.0f64.ln() - 2.0f64.ln()) / (8.0f64.ln() - 2.0f64.ln());
        assert_relative_eq!(
            power.normalize(4.0).unwrap(),
            expected,
            max_relative = 1e-12
        );
        let lin = StressSpec::new(AccelerationKind::Exponential, 10.0, 50.0).unwrap();
        assert_relative_eq!(lin.normalize(20.0).unwrap(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn domain_errors() {
        let spec = arrhenius_40_120();
        assert!(matches!(
            spec.normalize(-300.0),
            Err(AdtError::StressDomain(_))
        ));
        let power = StressSpec::new(AccelerationKind::PowerLaw, 2.0, 8.0).unwrap();
        assert!(power.normalize(0.0).is_err());
        assert!(power.normalize(-3.0).is_err());
        assert!(StressSpec::new(AccelerationKind::Arrhenius, 50.0, 50.0).is_err());
        assert!(StressSpec::new(AccelerationKind::PowerLaw, 0.0, 8.0).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_monotone(s1 in 41.0f64..119.0, s2 in 41.0f64..119.0) {
            let spec = arrhenius_40_120();
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(spec.normalize(lo).unwrap() <= spec.normalize(hi).unwrap());
        }
    }

    fn reference_params() -> ModelParams {
        // Drift mean 1e-5, drift sd 2e-6, α = 2.5, β = 1.5, σ = 0.1, H = 0.1.
        ModelParams::new(
            ModelVariant::Full,
            1e-5,
            4e-12,
            2.5,
            1.5,
            0.01,
            HurstExponent::new(0.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn drift_distribution_scales_mean_and_sd() {
        let p = reference_params();
        let (mean, sd) = p.drift_distribution(1.0);
        assert_relative_eq!(mean, 1.21825e-4, max_relative = 1e-5);
        assert_relative_eq!(sd, 2.43649e-5, max_relative = 1e-5);
        let (mean0, sd0) = p.drift_distribution(0.0);
        assert_eq!(mean0, 1e-5);
        assert_eq!(sd0, 2e-6);
    }

    #[test]
    fn trend_reference_value() {
        let p = reference_params();
        assert_relative_eq!(p.trend(1.0, 100.0), 0.121825, max_relative = 1e-5);
        assert_eq!(p.trend(1.0, 0.0), 0.0);
    }

    #[test]
    fn basis_vector_matches_power_times_scale() {
        let p = ModelParams::new(
            ModelVariant::Full,
            1.0,
            0.01,
            2.5,
            1.5,
            1.0,
            HurstExponent::new(0.5).unwrap(),
        )
        .unwrap();
        let grid = TimeGrid::new(vec![100.0, 200.0]).unwrap();
        let psi = p.basis_vector(0.0, &grid);
        assert_relative_eq!(psi[0], 1000.0, max_relative = 1e-11);
        assert_relative_eq!(psi[1], 2828.4271, max_relative = 1e-7);
    }

    #[test]
    fn variant_masks_are_enforced() {
        let h = HurstExponent::new(0.3).unwrap();
        assert!(ModelParams::new(ModelVariant::FixedDrift, 1.0, 0.1, 0.0, 1.0, 1.0, h).is_err());
        assert!(ModelParams::new(ModelVariant::Memoryless, 1.0, 0.1, 0.0, 1.0, 1.0, h).is_err());
        assert!(ModelParams::new(ModelVariant::Basic, 1.0, 0.0, 0.0, 1.0, 1.0, h).is_err());
        assert!(ModelParams::new(
            ModelVariant::Basic,
            1.0,
            0.0,
            0.0,
            1.0,
            1.0,
            HurstExponent::BROWNIAN
        )
        .is_ok());
        assert!(ModelParams::new(ModelVariant::Full, 1.0, -0.1, 0.0, 1.0, 1.0, h).is_err());
        assert!(ModelParams::new(ModelVariant::Full, 1.0, 0.1, 0.0, 0.0, 1.0, h).is_err());
        assert!(ModelParams::new(ModelVariant::Full, 1.0, 0.1, 0.0, 1.0, 0.0, h).is_err());
    }

    #[test]
    fn n_params_by_variant() {
        assert_eq!(ModelVariant::Full.n_params(), 6);
        assert_eq!(ModelVariant::FixedDrift.n_params(), 5);
        assert_eq!(ModelVariant::Memoryless.n_params(), 5);
        assert_eq!(ModelVariant::Basic.n_params(), 4);
    }

    #[test]
    fn serde_round_trip_uses_sd_scale() {
        let p = reference_params();
        let json = serde_json::to_string(&p).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        // The wire format speaks in standard deviations, not variances.
        assert_relative_eq!(
            value["drift_sd"].as_f64().unwrap(),
            2e-6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            value["diffusion_sd"].as_f64().unwrap(),
            0.1,
            max_relative = 1e-12
        );
        assert!(value.get("drift_var").is_none());
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        // sd ↔ variance conversion costs at most a couple of ulps.
        assert_eq!(back.variant(), p.variant());
        assert_relative_eq!(back.drift_mean(), p.drift_mean(), max_relative = 1e-14);
        assert_relative_eq!(back.drift_var(), p.drift_var(), max_relative = 1e-14);
        assert_relative_eq!(back.stress_coef(), p.stress_coef(), max_relative = 1e-14);
        assert_relative_eq!(back.time_exp(), p.time_exp(), max_relative = 1e-14);
        assert_relative_eq!(
            back.diffusion_var(),
            p.diffusion_var(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            back.hurst().value(),
            p.hurst().value(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn serde_rejects_unknown_fields() {
        let json = r#"{"variant":"full","drift_mean":1e-5,"drift_sd":2e-6,
            "stress_coef":2.5,"time_exp":1.5,"diffusion_sd":0.1,"hurst":0.1,
            "bogus":1}"#;
        assert!(serde_json::from_str::<ModelParams>(json).is_err());
    }
}
