//! Closed-form rate, distortion, lambda and QP relations.
//!
//! Two curve families live here. [`RdGroundTruth`] is the four-parameter
//! distortion law `D = max(0, C(R+B)^-K - T)` used to describe what an
//! encoder actually does. [`ModelCoefficients`] is the controller-side
//! power law `lambda = alpha (bpp + gamma)^beta` obtained by differentiating
//! the distortion law; the two are linked by `alpha = C K`, `beta = -K - 1`
//! and `gamma = B` when both are expressed per pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on lambda before it is mapped to a QP.
pub const LAMBDA_MIN: f64 = 0.01;
/// Upper bound on lambda before it is mapped to a QP.
pub const LAMBDA_MAX: f64 = 100_000.0;

/// Largest QP an HEVC encoder accepts.
pub const QP_MAX: i32 = 51;

/// Clamp lambda into the range the controller converts to QP.
#[inline]
pub fn clamp_lambda(lambda: f64) -> f64 {
    lambda.clamp(LAMBDA_MIN, LAMBDA_MAX)
}

/// Clamp a QP into `[0, 51]`.
#[inline]
pub fn clamp_qp_range(qp: i32) -> i32 {
    qp.clamp(0, QP_MAX)
}

/// Learned coefficients of the lambda-bpp power law for one frame level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Multiplier applied to the update strengths; shrinks after every update.
    pub decay: f64,
}

impl ModelCoefficients {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let c = ModelCoefficients {
            alpha,
            beta,
            gamma,
            decay: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta < 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be negative, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Domain(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }

    /// `lambda = alpha (bpp + gamma)^beta`.
    pub fn lambda_from_bpp(&self, bpp: f64) -> Result<f64> {
        let x = bpp + self.gamma;
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "bpp + gamma must be positive (bpp={bpp}, gamma={})",
                self.gamma
            )));
        }
        Ok(self.alpha * x.powf(self.beta))
    }

    /// `bpp = (lambda / alpha)^(1/beta) - gamma`, clamped at zero.
    pub fn bpp_from_lambda(&self, lambda: f64) -> f64 {
        self.bpp_from_lambda_raw(lambda).max(0.0)
    }

    /// Unclamped inverse; may be negative when lambda exceeds `alpha gamma^beta`.
    pub fn bpp_from_lambda_raw(&self, lambda: f64) -> f64 {
        (lambda / self.alpha).powf(1.0 / self.beta) - self.gamma
    }

    /// Coefficients implied by a per-pixel ground-truth curve.
    pub fn from_ground_truth(gt: &RdGroundTruth) -> Self {
        ModelCoefficients {
            alpha: gt.c * gt.k,
            beta: -gt.k - 1.0,
            gamma: gt.b,
            decay: 1.0,
        }
    }
}

/// Free function form of [`ModelCoefficients::lambda_from_bpp`].
pub fn lambda_from_bpp(coeffs: &ModelCoefficients, bpp: f64) -> Result<f64> {
    coeffs.lambda_from_bpp(bpp)
}

/// Free function form of [`ModelCoefficients::bpp_from_lambda`].
pub fn bpp_from_lambda(coeffs: &ModelCoefficients, lambda: f64) -> f64 {
    coeffs.bpp_from_lambda(lambda)
}

/// `QP = c1 ln(lambda) + c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpLambdaMap {
    pub c1: f64,
    pub c2: f64,
}

impl Default for QpLambdaMap {
    fn default() -> Self {
        QpLambdaMap { c1: 4.3, c2: 14.6 }
    }
}

impl QpLambdaMap {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::Config(format!("QP-lambda slope must be positive, got {c1}")));
        }
        Ok(QpLambdaMap { c1, c2 })
    }

    /// Continuous QP before rounding.
    pub fn qp_continuous(&self, lambda: f64) -> f64 {
        self.c1 * lambda.ln() + self.c2
    }

    /// Rounded QP (half away from zero). Not clamped to `[0, 51]`.
    pub fn qp_from_lambda(&self, lambda: f64) -> i32 {
        self.qp_continuous(lambda).round() as i32
    }

    pub fn lambda_from_qp(&self, qp: f64) -> f64 {
        ((qp - self.c2) / self.c1).exp()
    }
}

pub fn qp_from_lambda(map: &QpLambdaMap, lambda: f64) -> i32 {
    map.qp_from_lambda(lambda)
}

pub fn lambda_from_qp(map: &QpLambdaMap, qp: f64) -> f64 {
    map.lambda_from_qp(qp)
}

/// True rate-distortion curve `D = max(0, C(R+B)^-K - T)`.
///
/// The rate unit is whatever the parameters were expressed in. Sequences
/// produced by this crate use bits per pixel so that `-dD/dR` is directly
/// comparable with the lambda of the QP map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdGroundTruth {
    pub c: f64,
    pub k: f64,
    pub b: f64,
    pub t: f64,
}

impl RdGroundTruth {
    pub fn new(c: f64, k: f64, b: f64, t: f64) -> Result<Self> {
        let gt = RdGroundTruth { c, k, b, t };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.k > 0.0
            && self.b >= 0.0
            && self.t >= 0.0
            && [self.c, self.k, self.b, self.t].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid ground truth {self:?}")))
        }
    }

    /// Same curve with C multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        RdGroundTruth {
            c: self.c * factor,
            ..*self
        }
    }

    /// Distortion without the outer `max(0, .)`.
    pub fn distortion_unclamped(&self, rate: f64) -> Result<f64> {
        let x = rate + self.b;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("rate + B must be positive (rate={rate}, B={})", self.b)));
        }
        Ok(self.c * x.powf(-self.k) - self.t)
    }

    pub fn distortion_from_rate(&self, rate: f64) -> Result<f64> {
        Ok(self.distortion_unclamped(rate)?.max(0.0))
    }

    /// `lambda = -dD/dR = C K (R+B)^(-K-1)`.
    pub fn lambda_from_rate(&self, rate: f64) -> Result<f64> {
        let x = rate + self.b;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("rate + B must be positive (rate={rate}, B={})", self.b)));
        }
        Ok(self.c * self.k * x.powf(-self.k - 1.0))
    }

    /// Inverse of [`lambda_from_rate`](Self::lambda_from_rate), clamped at zero.
    pub fn rate_from_lambda(&self, lambda: f64) -> f64 {
        ((self.c * self.k / lambda).powf(1.0 / (self.k + 1.0)) - self.b).max(0.0)
    }
}

pub fn distortion_from_rate(gt: &RdGroundTruth, rate: f64) -> Result<f64> {
    gt.distortion_from_rate(rate)
}

pub fn lambda_from_rate(gt: &RdGroundTruth, rate: f64) -> Result<f64> {
    gt.lambda_from_rate(rate)
}

pub fn rate_from_lambda_gt(gt: &RdGroundTruth, lambda: f64) -> f64 {
    gt.rate_from_lambda(lambda)
}

/// Frame size and rate of a video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoGeometry {
    pub width: u32,
    pub height: u32,
    pub frame_rate: f64,
}

impl VideoGeometry {
    pub fn new(width: u32, height: u32, frame_rate: f64) -> Result<Self> {
        let g = VideoGeometry {
            width,
            height,
            frame_rate,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config(format!("invalid geometry {self:?}")));
        }
        Ok(())
    }

    pub fn pixels(&self) -> f64 {
        self.width as f64 * self.height as f64
    }

    /// Per-frame bits to bits per pixel.
    pub fn bits_to_bpp(&self, bits: f64) -> f64 {
        bits / self.pixels()
    }

    pub fn bpp_to_bits(&self, bpp: f64) -> f64 {
        bpp * self.pixels()
    }

    /// Average per-frame bpp for a bitrate in bits per second.
    pub fn bitrate_to_bpp(&self, bits_per_second: f64) -> f64 {
        bits_per_second / (self.frame_rate * self.pixels())
    }

    pub fn bpp_to_bitrate(&self, bpp: f64) -> f64 {
        bpp * self.frame_rate * self.pixels()
    }

    /// Converts a bits-per-second shift `B` into the per-pixel `gamma`.
    pub fn gamma_from_rate_shift(&self, b_bits_per_second: f64) -> f64 {
        b_bits_per_second / (self.pixels() * self.frame_rate)
    }
}
