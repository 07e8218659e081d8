//! Lévy exponents for the supported sheet drivers.
//!
//! Every driver is described by its Lévy exponent `Ψ(ξ) = a(ξ) + i·b(ξ)`,
//! with the convention that a rectangular increment of the sheet over area `A`
//! has characteristic function `E[e^{iξΔ}] = e^{-A·Ψ(ξ)}`. The real part `a`
//! is even and nonnegative, the imaginary part `b` is odd; both vanish at 0.
//! The same convention is used by the exact increment samplers in
//! [`crate::sheet_sim`], so the two can be cross-checked against each other
//! through empirical characteristic functions.
//!
//! Jump measures are restricted to finitely many atoms (plus the symmetric
//! stable closed form), which is exactly the class for which increment
//! sampling is exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single atom of a discrete jump measure: jumps of size `size` arrive with
/// intensity `mass` per unit area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub size: f64,
    pub mass: f64,
}

/// Characteristics of the Lévy sheet driving the field construction.
///
/// `Poisson { rate, jump }` is sugar for a compound Poisson measure with a
/// single atom; it is treated as such everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExponentModel {
    /// Gaussian driver: `Ψ(ξ) = ½σ²ξ² + i·drift·ξ`. A unit-area increment is
    /// `Normal(-drift, σ²)` (the sign follows from `E[e^{iξΔ}] = e^{-Ψ(ξ)}`).
    Brownian { sigma: f64, drift: f64 },
    /// Poisson counting sheet scaled by a fixed jump size.
    Poisson { rate: f64, jump: f64 },
    /// Compound Poisson with finitely many atoms.
    CompoundPoissonDiscrete { atoms: Vec<JumpAtom> },
    /// Symmetric α-stable driver: `Ψ(ξ) = scale·|ξ|^α`, `b ≡ 0`.
    SymmetricStable { alpha: f64, scale: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum LevyCharError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("theta must lie in (0, 2π), got {0}")]
    ThetaOutOfRange(f64),
    #[error("assumption a(θ)·a(2θ) ≠ 0 violated at θ = {theta}: a(θ) = {a_theta}, a(2θ) = {a_two_theta}")]
    AssumptionViolated {
        theta: f64,
        a_theta: f64,
        a_two_theta: f64,
    },
}

/// Threshold below which `a(θ)` is treated as zero when checking the
/// `a(θ)·a(2θ) ≠ 0` hypothesis. The normalization constant is `O(1/a(θ))`,
/// so values this small are degenerate for any practical simulation anyway.
const A_ZERO_TOL: f64 = 1e-12;

impl ExponentModel {
    /// Checks the parameter-range invariants of the variant.
    pub fn validate(&self) -> Result<(), LevyCharError> {
        let fail = |msg: String| Err(LevyCharError::InvalidModel(msg));
        match self {
            ExponentModel::Brownian { sigma, drift } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return fail(format!("brownian sigma must be finite and > 0, got {sigma}"));
                }
                if !drift.is_finite() {
                    return fail(format!("brownian drift must be finite, got {drift}"));
                }
            }
            ExponentModel::Poisson { rate, jump } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return fail(format!("poisson rate must be finite and > 0, got {rate}"));
                }
                if !(jump.is_finite() && *jump != 0.0) {
                    return fail(format!("poisson jump must be finite and nonzero, got {jump}"));
                }
            }
            ExponentModel::CompoundPoissonDiscrete { atoms } => {
                if atoms.is_empty() {
                    return fail("compound poisson needs at least one atom".into());
                }
                for (k, atom) in atoms.iter().enumerate() {
                    if !(atom.size.is_finite() && atom.size != 0.0) {
                        return fail(format!("atom {k}: size must be finite and nonzero"));
                    }
                    if !(atom.mass.is_finite() && atom.mass > 0.0) {
                        return fail(format!("atom {k}: mass must be finite and > 0"));
                    }
                }
            }
            ExponentModel::SymmetricStable { alpha, scale } => {
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < 2.0) {
                    return fail(format!("stable alpha must lie in (0, 2), got {alpha}"));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return fail(format!("stable scale must be finite and > 0, got {scale}"));
                }
            }
        }
        Ok(())
    }

    /// Real part of the Lévy exponent: `a(ξ) = ½σ²ξ² + Σ mass·(1 - cos(ξ·size))`
    /// for the jump variants, `scale·|ξ|^α` for the stable one. Even, `≥ 0`,
    /// and zero at the origin.
    pub fn exponent_a(&self, xi: f64) -> f64 {
        match self {
            ExponentModel::Brownian { sigma, .. } => 0.5 * sigma * sigma * xi * xi,
            ExponentModel::Poisson { rate, jump } => rate * (1.0 - (xi * jump).cos()),
            ExponentModel::CompoundPoissonDiscrete { atoms } => atoms
                .iter()
                .map(|a| a.mass * (1.0 - (xi * a.size).cos()))
                .sum(),
            ExponentModel::SymmetricStable { alpha, scale } => scale * xi.abs().powf(*alpha),
        }
    }

    /// Imaginary part of the Lévy exponent, with the drift convention matched
    /// to the exact increment samplers: `b(ξ) = drift·ξ` for the Gaussian
    /// driver, `-Σ mass·sin(ξ·size)` for uncompensated compound Poisson jumps,
    /// and identically zero for the symmetric stable driver.
    pub fn exponent_b(&self, xi: f64) -> f64 {
        match self {
            ExponentModel::Brownian { drift, .. } => drift * xi,
            ExponentModel::Poisson { rate, jump } => -rate * (xi * jump).sin(),
            ExponentModel::CompoundPoissonDiscrete { atoms } => atoms
                .iter()
                .map(|a| -a.mass * (xi * a.size).sin())
                .sum(),
            ExponentModel::SymmetricStable { .. } => 0.0,
        }
    }

    /// Short tag used in dump headers and CSV output.
    pub fn tag(&self) -> &'static str {
        match self {
            ExponentModel::Brownian { .. } => "brownian",
            ExponentModel::Poisson { .. } => "poisson",
            ExponentModel::CompoundPoissonDiscrete { .. } => "compound_poisson",
            ExponentModel::SymmetricStable { .. } => "symmetric_stable",
        }
    }
}

/// Normalization constant `K = (1/√2)·(a(θ)² + b(θ)²)/a(θ)` of the complex
/// field construction.
///
/// Fails with [`LevyCharError::AssumptionViolated`] when `a(θ)` or `a(2θ)`
/// vanishes (e.g. a unit-jump Poisson driver at `θ = π`, where `a(2π) = 0`);
/// the weak-convergence statement needs both to be nonzero.
pub fn normalization_k(model: &ExponentModel, theta: f64) -> Result<f64, LevyCharError> {
    let a_theta = model.exponent_a(theta);
    let a_two_theta = model.exponent_a(2.0 * theta);
    if a_theta.abs() <= A_ZERO_TOL || a_two_theta.abs() <= A_ZERO_TOL {
        return Err(LevyCharError::AssumptionViolated {
            theta,
            a_theta,
            a_two_theta,
        });
    }
    let b_theta = model.exponent_b(theta);
    Ok((a_theta * a_theta + b_theta * b_theta) / (std::f64::consts::SQRT_2 * a_theta))
}

/// A driver model paired with an admissible angle `θ ∈ (0, 2π)`.
///
/// Construction validates the model, the range of `θ`, and the standing
/// hypothesis `a(θ)·a(2θ) ≠ 0`; the normalization constant is cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaConfig {
    theta: f64,
    model: ExponentModel,
    k: f64,
}

impl ThetaConfig {
    pub fn new(theta: f64, model: ExponentModel) -> Result<Self, LevyCharError> {
        model.validate()?;
        if !(theta.is_finite() && theta > 0.0 && theta < 2.0 * std::f64::consts::PI) {
            return Err(LevyCharError::ThetaOutOfRange(theta));
        }
        let k = normalization_k(&model, theta)?;
        Ok(Self { theta, model, k })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn model(&self) -> &ExponentModel {
        &self.model
    }

    /// Cached value of [`normalization_k`].
    pub fn k(&self) -> f64 {
        self.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn brownian() -> ExponentModel {
        ExponentModel::Brownian {
            sigma: 1.0,
            drift: 0.0,
        }
    }

    fn unit_poisson() -> ExponentModel {
        ExponentModel::Poisson {
            rate: 1.0,
            jump: 1.0,
        }
    }

    #[test]
    fn exponent_a_closed_forms() {
        assert_eq!(brownian().exponent_a(1.0), 0.5);
        // Hand evaluation of Ψ(ξ) = λ(1 - e^{iξ}): a(π) = 1 - cos π = 2.
        assert!((unit_poisson().exponent_a(PI) - 2.0).abs() < 1e-12);
        let stable = ExponentModel::SymmetricStable {
            alpha: 1.5,
            scale: 2.0,
        };
        assert!((stable.exponent_a(3.0) - 2.0 * 3.0_f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn exponent_vanishes_at_origin() {
        let models = [
            brownian(),
            unit_poisson(),
            ExponentModel::CompoundPoissonDiscrete {
                atoms: vec![
                    JumpAtom {
                        size: -2.0,
                        mass: 0.5,
                    },
                    JumpAtom {
                        size: 1.0,
                        mass: 1.5,
                    },
                ],
            },
            ExponentModel::SymmetricStable {
                alpha: 0.7,
                scale: 1.0,
            },
        ];
        for m in &models {
            assert_eq!(m.exponent_a(0.0), 0.0, "{m:?}");
            assert_eq!(m.exponent_b(0.0), 0.0, "{m:?}");
        }
    }

    #[test]
    fn exponent_b_closed_forms() {
        assert_eq!(brownian().exponent_b(1.0), 0.0);
        // Ψ(ξ) = 1 - e^{iξ} gives b(π/2) = -sin(π/2) = -1.
        assert!((unit_poisson().exponent_b(PI / 2.0) + 1.0).abs() < 1e-12);
        let stable = ExponentModel::SymmetricStable {
            alpha: 1.5,
            scale: 1.0,
        };
        assert_eq!(stable.exponent_b(3.0), 0.0);
    }

    #[test]
    fn normalization_constant_values() {
        // a = 0.5, b = 0 at θ = 1 for the unit Gaussian: K = 0.25/(√2·0.5) = 1/(2√2).
        let k = normalization_k(&brownian(), 1.0).unwrap();
        assert!((k - 0.5 / std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((k - 0.353_553_390_593_273_8).abs() < 1e-7);

        // a = 1, b = -1 at θ = π/2 for the unit Poisson: K = √2.
        let k = normalization_k(&unit_poisson(), PI / 2.0).unwrap();
        assert!((k - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn poisson_at_pi_violates_assumption() {
        // a(2π) = 1 - cos 2π = 0 for unit jumps.
        let err = normalization_k(&unit_poisson(), PI).unwrap_err();
        assert!(matches!(err, LevyCharError::AssumptionViolated { .. }));
        assert!(ThetaConfig::new(PI, unit_poisson()).is_err());
    }

    #[test]
    fn theta_range_is_enforced() {
        assert!(matches!(
            ThetaConfig::new(0.0, brownian()),
            Err(LevyCharError::ThetaOutOfRange(_))
        ));
        assert!(matches!(
            ThetaConfig::new(2.0 * PI, brownian()),
            Err(LevyCharError::ThetaOutOfRange(_))
        ));
        assert!(ThetaConfig::new(1.0, brownian()).is_ok());
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ExponentModel::Brownian {
            sigma: 0.0,
            drift: 0.0
        }
        .validate()
        .is_err());
        assert!(ExponentModel::Poisson {
            rate: 1.0,
            jump: 0.0
        }
        .validate()
        .is_err());
        assert!(ExponentModel::SymmetricStable {
            alpha: 2.0,
            scale: 1.0
        }
        .validate()
        .is_err());
        assert!(
            ExponentModel::CompoundPoissonDiscrete { atoms: vec![] }
                .validate()
                .is_err()
        );
    }
}
