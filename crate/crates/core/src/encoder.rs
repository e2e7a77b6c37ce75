//! Deterministic virtual encoder.
//!
//! Each frame carries a ground-truth curve `D = C(R+B)^-K - T` in bpp. A QP
//! is turned into lambda through the QP map, lambda into the clean rate
//! through the curve's slope, and the rate is then perturbed by a lognormal
//! factor drawn from a stream keyed by `(seed, frame_index)`. Distortion is
//! always computed from the clean rate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocation::MIN_RATE_BITS;
use crate::error::{Error, Result};
use crate::gop::{StructureKind, INIT_BETA, INIT_GAMMA, LD_ALPHA, RA_CENTER_ALPHA};
use crate::model::{QpLambdaMap, RdGroundTruth, VideoGeometry, QP_MAX};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_NOISE_SIGMA: f64 = 0.5;
pub const DEFAULT_SCENE_FACTOR: f64 = 4.0;
pub const RAMP_SPAN: f64 = 0.3;

/// Multipliers on C for levels 0..=4. Inter levels follow 4.2:3:2:1
/// normalized to level 2; intra frames cost far more.
pub const DEFAULT_LEVEL_EFFICIENCY: [f64; 5] = [6.0, 4.2 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Stationary,
    TwoScene,
    Ramp,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Stationary, Profile::TwoScene, Profile::Ramp];

    pub fn label(self) -> &'static str {
        match self {
            Profile::Stationary => "stationary",
            Profile::TwoScene => "two_scene",
            Profile::Ramp => "ramp",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Profile::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown profile {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceFrame {
    pub truth: RdGroundTruth,
    pub scene_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSequence {
    pub schema_version: u32,
    pub geometry: VideoGeometry,
    pub frames: Vec<SequenceFrame>,
    pub scene_changes: Vec<usize>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub level_efficiency: Vec<f64>,
    pub qp_map: QpLambdaMap,
}

/// Result of coding one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeOutcome {
    pub bits: f64,
    pub bpp: f64,
    /// Rate before noise, after the min-rate floor.
    pub clean_bpp: f64,
    pub mse: f64,
    pub lambda: f64,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn min_rate_bpp(&self) -> f64 {
        self.geometry.bits_to_bpp(MIN_RATE_BITS)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported sequence schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.geometry.validate()?;
        if !(0.0..=MAX_NOISE_SIGMA).contains(&self.noise_sigma) {
            return Err(Error::Config(format!(
                "noise sigma must lie in [0, {MAX_NOISE_SIGMA}], got {}",
                self.noise_sigma
            )));
        }
        if self.frames.is_empty() {
            return Err(Error::Config("sequence has no frames".into()));
        }
        if self.scene_changes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("scene boundaries must be strictly increasing".into()));
        }
        if self.level_efficiency.len() < 5 || self.level_efficiency.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("level efficiency needs 5 positive entries".into()));
        }
        for f in &self.frames {
            f.truth.validate()?;
        }
        Ok(())
    }

    /// Ground truth seen by a frame coded at `level`.
    pub fn effective_truth(&self, frame_index: usize, level: u8) -> Result<RdGroundTruth> {
        let frame = self.frames.get(frame_index).ok_or_else(|| {
            Error::Domain(format!("frame {frame_index} out of range 0..{}", self.frames.len()))
        })?;
        let eff = self
            .level_efficiency
            .get(level as usize)
            .ok_or_else(|| Error::Domain(format!("no efficiency for level {level}")))?;
        Ok(frame.truth.scaled(*eff))
    }

    pub fn encode_frame(&self, frame_index: usize, level: u8, qp: i32) -> Result<EncodeOutcome> {
        if !(0..=QP_MAX).contains(&qp) {
            return Err(Error::Domain(format!("qp {qp} outside [0, {QP_MAX}]")));
        }
        let truth = self.effective_truth(frame_index, level)?;
        let lambda = self.qp_map.lambda_from_qp(qp as f64);
        let clean_bpp = truth.rate_from_lambda(lambda).max(self.min_rate_bpp());
        let bpp = clean_bpp * noise_factor(self.seed, frame_index as u64, self.noise_sigma);
        let mse = truth.distortion_from_rate(clean_bpp)?;
        Ok(EncodeOutcome {
            bits: self.geometry.bpp_to_bits(bpp),
            bpp,
            clean_bpp,
            mse,
            lambda,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let seq: SyntheticSequence = serde_json::from_str(text)?;
        seq.validate()?;
        Ok(seq)
    }
}

/// Lognormal rate factor `exp(sigma * z)` for one frame.
pub fn noise_factor(seed: u64, frame_index: u64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index);
    let z: f64 = StandardNormal.sample(&mut rng);
    (sigma * z).exp()
}

/// Knobs for [`make_sequence_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOptions {
    pub geometry: VideoGeometry,
    pub noise_sigma: f64,
    pub scene_factor: f64,
    /// Fixed base curve; drawn from the seed when absent.
    pub truth: Option<RdGroundTruth>,
    pub level_efficiency: Vec<f64>,
    pub qp_map: QpLambdaMap,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            geometry: VideoGeometry {
                width: 416,
                height: 240,
                frame_rate: 30.0,
            },
            noise_sigma: 0.0,
            scene_factor: DEFAULT_SCENE_FACTOR,
            truth: None,
            level_efficiency: DEFAULT_LEVEL_EFFICIENCY.to_vec(),
            qp_map: QpLambdaMap::default(),
        }
    }
}

/// Draws a fixture curve: C in [0.5, 50] (log-uniform), K in [0.85, 1.15],
/// B in [0, 0.05] bpp, T in [0, 0.5].
pub fn random_truth<R: Rng>(rng: &mut R) -> RdGroundTruth {
    let c = (rng.random_range(0.5f64.ln()..50f64.ln())).exp();
    RdGroundTruth {
        c,
        k: rng.random_range(0.85..1.15),
        b: rng.random_range(0.0..0.05),
        t: rng.random_range(0.0..0.5),
    }
}

/// Options whose per-level curves coincide with the controller's initial
/// coefficients for `kind`: `K = -beta - 1`, `C K eff = alpha`, `B = gamma`
/// at the centre level. LD levels share one efficiency.
pub fn in_family_options(kind: StructureKind) -> SequenceOptions {
    let k = -INIT_BETA - 1.0;
    let (alpha, level_efficiency) = if kind.is_low_delay() {
        (LD_ALPHA, vec![DEFAULT_LEVEL_EFFICIENCY[0], 1.0, 1.0, 1.0, 1.0])
    } else {
        (RA_CENTER_ALPHA, DEFAULT_LEVEL_EFFICIENCY.to_vec())
    };
    SequenceOptions {
        truth: Some(RdGroundTruth {
            c: alpha / k,
            k,
            b: INIT_GAMMA,
            t: 0.0,
        }),
        level_efficiency,
        ..Default::default()
    }
}

pub fn make_sequence(profile: Profile, n_frames: usize, seed: u64) -> Result<SyntheticSequence> {
    make_sequence_with(profile, n_frames, seed, &SequenceOptions::default())
}

pub fn make_sequence_with(
    profile: Profile,
    n_frames: usize,
    seed: u64,
    opts: &SequenceOptions,
) -> Result<SyntheticSequence> {
    if n_frames == 0 {
        return Err(Error::Config("a sequence needs at least one frame".into()));
    }
    let base = match opts.truth {
        Some(t) => t,
        None => random_truth(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed)),
    };
    base.validate()?;
    let mut scene_changes = Vec::new();
    let frames = (0..n_frames)
        .map(|i| match profile {
            Profile::Stationary => SequenceFrame { truth: base, scene_id: 0 },
            Profile::TwoScene => {
                let second = n_frames >= 2 && i >= n_frames / 2;
                SequenceFrame {
                    truth: if second { base.scaled(opts.scene_factor) } else { base },
                    scene_id: second as u32,
                }
            }
            Profile::Ramp => {
                let pos = if n_frames > 1 { i as f64 / (n_frames - 1) as f64 } else { 0.5 };
                SequenceFrame {
                    truth: base.scaled(1.0 - RAMP_SPAN + 2.0 * RAMP_SPAN * pos),
                    scene_id: 0,
                }
            }
        })
        .collect();
    if profile == Profile::TwoScene && n_frames >= 2 {
        scene_changes.push(n_frames / 2);
    }
    let seq = SyntheticSequence {
        schema_version: SCHEMA_VERSION,
        geometry: opts.geometry,
        frames,
        scene_changes,
        noise_sigma: opts.noise_sigma,
        seed,
        level_efficiency: opts.level_efficiency.clone(),
        qp_map: opts.qp_map,
    };
    seq.validate()?;
    Ok(seq)
}

/// Mean and standard error of `ln noise` over `n` frames, for diagnostics.
pub fn log_noise_stats(seed: u64, sigma: f64, n: u64) -> (f64, f64) {
    let logs: Vec<f64> = (0..n).map(|i| noise_factor(seed, i, sigma).ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}
