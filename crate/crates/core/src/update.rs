//! Least-mean-square update of the per-level model coefficients.
//!
//! After a frame is coded, the pair `(bpp_actual, lambda_used)` is a true
//! point of the curve. The loss is the squared log error
//! `e2 = 0.5 (ln lambda_used - ln lambda_model(bpp_actual))^2` and one
//! gradient step is taken on `alpha`, `beta` and `gamma`, scaled by the
//! level's decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gop::{init_coefficients, LevelInitTable, StructureKind};
use crate::model::ModelCoefficients;

/// Factor applied to a level's decay after each of its updates.
pub const DECAY_FACTOR: f64 = 0.99;

pub const ALPHA_BOUNDS: (f64, f64) = (0.05, 500.0);
pub const BETA_BOUNDS: (f64, f64) = (-3.0, -0.1);

/// How the nominal strengths relate to the target bpp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthScaling {
    /// Only gamma's strength is multiplied by the target bpp.
    #[default]
    GammaOnly,
    /// All three strengths are multiplied by the target bpp.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStrengths {
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub sigma_gamma: f64,
    /// Upper clamp on gamma after an update.
    pub gamma_max: f64,
}

impl UpdateStrengths {
    pub const NOMINAL: (f64, f64, f64) = (0.05, 0.2, 1e-6);

    pub fn for_target(target_bpp: f64, scaling: StrengthScaling) -> Self {
        let (a, b, g) = Self::NOMINAL;
        let (sigma_alpha, sigma_beta) = match scaling {
            StrengthScaling::GammaOnly => (a, b),
            StrengthScaling::All => (a * target_bpp, b * target_bpp),
        };
        UpdateStrengths {
            sigma_alpha,
            sigma_beta,
            sigma_gamma: g * target_bpp,
            gamma_max: 0.1 * target_bpp,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        UpdateStrengths {
            sigma_alpha: self.sigma_alpha * factor,
            sigma_beta: self.sigma_beta * factor,
            sigma_gamma: self.sigma_gamma * factor,
            gamma_max: self.gamma_max,
        }
    }
}

/// What happened when one frame was coded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateObservation {
    pub bpp_target: f64,
    pub lambda_used: f64,
    pub bpp_actual: f64,
}

impl UpdateObservation {
    pub fn validate(&self) -> Result<()> {
        if [self.bpp_target, self.lambda_used, self.bpp_actual]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Domain(format!("observation must be strictly positive: {self:?}")))
        }
    }
}

/// `ln lambda_used - ln lambda_model(bpp_actual)`.
pub fn log_error(coeffs: &ModelCoefficients, obs: &UpdateObservation) -> Result<f64> {
    let x = obs.bpp_actual + coeffs.gamma;
    if !(x > 0.0) {
        return Err(Error::Domain(format!("bpp_actual + gamma must be positive, got {x}")));
    }
    Ok(obs.lambda_used.ln() - (coeffs.alpha.ln() + coeffs.beta * x.ln()))
}

/// `0.5 * log_error^2`.
pub fn squared_log_error(coeffs: &ModelCoefficients, obs: &UpdateObservation) -> Result<f64> {
    let e = log_error(coeffs, obs)?;
    Ok(0.5 * e * e)
}

/// Analytic `(de2/dalpha, de2/dbeta, de2/dgamma)`.
pub fn error_gradient(coeffs: &ModelCoefficients, obs: &UpdateObservation) -> Result<[f64; 3]> {
    let e = log_error(coeffs, obs)?;
    let x = obs.bpp_actual + coeffs.gamma;
    Ok([-e / coeffs.alpha, -e * x.ln(), -e * coeffs.beta / x])
}

/// One LMS step followed by clamping and decay.
pub fn lms_update(
    coeffs: &ModelCoefficients,
    obs: &UpdateObservation,
    strengths: &UpdateStrengths,
) -> Result<ModelCoefficients> {
    obs.validate()?;
    coeffs.validate()?;
    let [ga, gb, gg] = error_gradient(coeffs, obs)?;
    let d = coeffs.decay;
    let alpha = (coeffs.alpha - strengths.sigma_alpha * d * ga).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);
    let beta = (coeffs.beta - strengths.sigma_beta * d * gb).clamp(BETA_BOUNDS.0, BETA_BOUNDS.1);
    let gamma = (coeffs.gamma - strengths.sigma_gamma * d * gg).clamp(0.0, strengths.gamma_max.max(0.0));
    Ok(ModelCoefficients {
        alpha,
        beta,
        gamma,
        decay: d * DECAY_FACTOR,
    })
}

/// Moves alpha so the curve passes through the observed point, keeping beta
/// and gamma. Used for the intra model, which sees too few frames for LMS.
pub fn recalibrate_alpha(coeffs: &ModelCoefficients, obs: &UpdateObservation) -> Result<ModelCoefficients> {
    obs.validate()?;
    coeffs.validate()?;
    let x = obs.bpp_actual + coeffs.gamma;
    let alpha = (obs.lambda_used / x.powf(coeffs.beta)).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);
    Ok(ModelCoefficients { alpha, ..*coeffs })
}

/// Restores every level to its initial coefficients with decay 1.
pub fn scene_change_reset(table: &mut LevelInitTable, kind: StructureKind, target_bpp: f64) -> Result<()> {
    *table = init_coefficients(kind, target_bpp)?;
    Ok(())
}
