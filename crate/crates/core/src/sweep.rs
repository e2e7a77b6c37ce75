//! Two-phase rate sweep: CQP anchors at fixed QPs, then ABR runs targeting
//! the bitrate each anchor produced.

use serde::{Deserialize, Serialize};

use crate::controller::{run, ControllerConfig, RcMode};
use crate::encoder::SyntheticSequence;
use crate::error::{Error, Result};
use crate::metrics::{bd_rate, RdPoint};

pub const DEFAULT_SWEEP_QPS: [i32; 4] = [22, 27, 32, 37];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLeg {
    pub qp: i32,
    pub cqp: RdPoint,
    pub abr: RdPoint,
    pub delta_r_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: crate::gop::StructureKind,
    pub legs: Vec<SweepLeg>,
    pub mean_delta_r_percent: f64,
    /// BD-rate of the ABR curve against the CQP anchor, percent.
    pub bd_rate_percent: f64,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every leg; the configured target bitrate is ignored.
pub fn sweep(config: &ControllerConfig, seq: &SyntheticSequence, qps: &[i32]) -> Result<SweepReport> {
    if qps.len() < 4 {
        return Err(Error::Config(format!("a sweep needs at least 4 QPs, got {}", qps.len())));
    }
    let n = seq.len();
    let point = |bits: f64, psnr: f64| RdPoint {
        bitrate: bits / n as f64 * seq.geometry.frame_rate,
        psnr_db: psnr,
    };
    let legs: Vec<Result<SweepLeg>> = crate::par::map(qps, |&qp| {
        let anchor = run(config, seq, RcMode::Cqp(qp))?;
        let cqp = point(anchor.summary.total_bits, anchor.summary.mean_psnr_db);
        let mut cfg = config.clone();
        cfg.target_bitrate = cqp.bitrate;
        let abr = run(&cfg, seq, RcMode::Abr)?;
        Ok(SweepLeg {
            qp,
            cqp,
            abr: point(abr.summary.total_bits, abr.summary.mean_psnr_db),
            delta_r_percent: abr.summary.delta_r_percent.unwrap_or(f64::NAN),
        })
    });
    let legs = legs.into_iter().collect::<Result<Vec<_>>>()?;
    let anchor: Vec<RdPoint> = legs.iter().map(|l| l.cqp).collect();
    let test: Vec<RdPoint> = legs.iter().map(|l| l.abr).collect();
    Ok(SweepReport {
        kind: config.kind,
        mean_delta_r_percent: legs.iter().map(|l| l.delta_r_percent).sum::<f64>() / legs.len() as f64,
        bd_rate_percent: bd_rate(&anchor, &test)?,
        legs,
    })
}
