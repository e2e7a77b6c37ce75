//! Frame-level rate control loop.
//!
//! Frames are coded in decode order. At each GOP start the allocator opens a
//! budget and splits it over the GOP's pictures; every picture then goes
//! through target -> lambda -> QP -> consistency clamp -> encode -> record ->
//! LMS update. I frames take a refined target from a separate intra model
//! and their overhead is amortized over the rest of the intra period.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::allocation::{
    allocate_pictures, default_omega, AllocFrame, AllocatorState, DEFAULT_INTRA_KAPPA, DEFAULT_SMOOTH_WINDOW,
    MIN_RATE_BITS,
};
use crate::encoder::SyntheticSequence;
use crate::error::{Error, Result};
use crate::gop::{build_structure, init_coefficients, GopStructure, LevelInitTable, StructureKind, MAX_LEVEL};
use crate::metrics::{delta_r, psnr_from_mse};
use crate::model::{clamp_lambda, clamp_qp_range, ModelCoefficients, QpLambdaMap, VideoGeometry, QP_MAX};
use crate::update::{lms_update, recalibrate_alpha, StrengthScaling, UpdateObservation, UpdateStrengths};

/// Largest QP change between frames of the same level.
pub const SAME_LEVEL_QP_WINDOW: i32 = 3;
/// Largest QP change between consecutive frames in decode order.
pub const ANY_FRAME_QP_WINDOW: i32 = 10;

pub const FRAME_LOG_HEADER: [&str; 11] = [
    "poc",
    "decode_index",
    "level",
    "target_bpp",
    "recorded_bpp",
    "actual_bpp",
    "lambda",
    "qp_raw",
    "qp_final",
    "mse",
    "psnr_db",
];

fn default_smooth_window() -> usize {
    DEFAULT_SMOOTH_WINDOW
}

fn default_kappa() -> f64 {
    DEFAULT_INTRA_KAPPA
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: StructureKind,
    pub geometry: VideoGeometry,
    /// Bits per second.
    pub target_bitrate: f64,
    pub intra_period: usize,
    #[serde(default = "default_smooth_window")]
    pub smooth_window: usize,
    #[serde(default)]
    pub qp_lambda_map: QpLambdaMap,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kappa")]
    pub intra_kappa: f64,
    #[serde(default)]
    pub strength_scaling: StrengthScaling,
    #[serde(default = "default_true")]
    pub reset_on_scene_change: bool,
    /// Per-level central-lambda weights (index 0..=4); structure defaults
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

impl ControllerConfig {
    pub fn new(kind: StructureKind, geometry: VideoGeometry, target_bitrate: f64, intra_period: usize) -> Self {
        ControllerConfig {
            kind,
            geometry,
            target_bitrate,
            intra_period,
            smooth_window: DEFAULT_SMOOTH_WINDOW,
            qp_lambda_map: QpLambdaMap::default(),
            seed: 0,
            intra_kappa: DEFAULT_INTRA_KAPPA,
            strength_scaling: StrengthScaling::default(),
            reset_on_scene_change: true,
            omega: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.target_bitrate > 0.0 && self.target_bitrate.is_finite()) {
            return Err(Error::Config(format!("target bitrate must be positive, got {}", self.target_bitrate)));
        }
        let gop = build_structure(self.kind).gop_length;
        if self.intra_period == 0 || self.intra_period % gop != 0 {
            return Err(Error::Config(format!(
                "intra period {} must be a positive multiple of the GOP length {gop}",
                self.intra_period
            )));
        }
        if self.smooth_window == 0 {
            return Err(Error::Config("smooth window must be at least 1".into()));
        }
        if !(self.intra_kappa > 0.0 && self.intra_kappa.is_finite()) {
            return Err(Error::Config(format!("intra kappa must be positive, got {}", self.intra_kappa)));
        }
        if let Some(w) = &self.omega {
            if w.len() != MAX_LEVEL + 1 || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("omega needs 5 positive entries (levels 0..=4)".into()));
            }
        }
        Ok(())
    }

    pub fn target_bpp(&self) -> f64 {
        self.geometry.bitrate_to_bpp(self.target_bitrate)
    }

    pub fn min_rate_bpp(&self) -> f64 {
        self.geometry.bits_to_bpp(MIN_RATE_BITS)
    }

    fn omega(&self, level: u8) -> f64 {
        match &self.omega {
            Some(w) => w[level as usize],
            None => default_omega(self.kind, level),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "qp")]
pub enum RcMode {
    Abr,
    Cqp(i32),
}

/// One coded frame, as written to the frame log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub poc: u32,
    pub decode_index: u32,
    pub level: u8,
    pub target_bpp: f64,
    pub recorded_bpp: f64,
    pub actual_bpp: f64,
    pub lambda: f64,
    pub qp_raw: i32,
    pub qp_final: i32,
    pub mse: f64,
    pub psnr_db: f64,
}

/// A frame's place in the decode-order schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledFrame {
    pub poc: u32,
    pub decode_index: u32,
    pub level: u8,
    pub qp_offset: i32,
    pub is_intra: bool,
    pub gop: usize,
}

/// Decode-order schedule for `n_frames` frames. Frame 0 is an I frame on
/// its own; every later POC that is a multiple of the intra period is an I
/// frame taking the level-1 slot of its GOP. The last GOP is truncated.
pub fn build_schedule(structure: &GopStructure, intra_period: usize, n_frames: usize) -> Vec<ScheduledFrame> {
    let mut out = Vec::with_capacity(n_frames);
    if n_frames == 0 {
        return out;
    }
    out.push(ScheduledFrame {
        poc: 0,
        decode_index: 0,
        level: 0,
        qp_offset: 0,
        is_intra: true,
        gop: 0,
    });
    let len = structure.gop_length;
    let n_gops = (n_frames - 1).div_ceil(len);
    for g in 0..n_gops {
        let base = (g * len) as u32;
        for s in &structure.slots {
            let poc = base + s.poc;
            if poc as usize >= n_frames {
                continue;
            }
            let is_intra = poc as usize % intra_period == 0;
            out.push(ScheduledFrame {
                poc,
                decode_index: out.len() as u32,
                level: if is_intra { 0 } else { s.level },
                qp_offset: if is_intra { 0 } else { s.qp_offset },
                is_intra,
                gop: g + 1,
            });
        }
    }
    out
}

/// Consistency clamp: within `SAME_LEVEL_QP_WINDOW` of the last QP of the
/// same level and `ANY_FRAME_QP_WINDOW` of the previous frame. When the two
/// windows do not intersect the same-level window is kept.
pub fn clamp_qp(qp_raw: i32, last_same_level: Option<i32>, last_any: Option<i32>) -> i32 {
    let (mut lo, mut hi) = (0, QP_MAX);
    if let Some(a) = last_any {
        lo = lo.max(a - ANY_FRAME_QP_WINDOW);
        hi = hi.min(a + ANY_FRAME_QP_WINDOW);
    }
    if let Some(s) = last_same_level {
        let (slo, shi) = ((s - SAME_LEVEL_QP_WINDOW).max(0), (s + SAME_LEVEL_QP_WINDOW).min(QP_MAX));
        if lo.max(slo) <= hi.min(shi) {
            lo = lo.max(slo);
            hi = hi.min(shi);
        } else {
            lo = slo;
            hi = shi;
        }
    }
    qp_raw.clamp(lo, hi)
}

/// Overhead of one I frame and what the GOP budgets paid back for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmortizationEntry {
    pub decode_index: u32,
    pub r_i0: f64,
    pub r_i2: f64,
    pub period_len: usize,
    pub overhead: f64,
    pub charged: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    schedule: Vec<ScheduledFrame>,
    cursor: usize,
    r_avg: f64,
    min_rate: f64,
    strengths: UpdateStrengths,
    coeffs: LevelInitTable,
    intra_coeffs: ModelCoefficients,
    alloc: AllocatorState,
    targets: Vec<f64>,
    last_qp_level: [Option<i32>; MAX_LEVEL + 1],
    last_qp_any: Option<i32>,
    max_scene: Option<u32>,
    amortization: Vec<AmortizationEntry>,
    resets: usize,
}

impl Controller {
    pub fn new(config: ControllerConfig, n_frames: usize) -> Result<Self> {
        config.validate()?;
        if n_frames == 0 {
            return Err(Error::Config("sequence has no frames".into()));
        }
        let r_avg = config.target_bpp();
        let structure = build_structure(config.kind);
        let coeffs = init_coefficients(config.kind, r_avg)?;
        Ok(Controller {
            schedule: build_schedule(&structure, config.intra_period, n_frames),
            cursor: 0,
            r_avg,
            min_rate: config.min_rate_bpp(),
            strengths: UpdateStrengths::for_target(r_avg, config.strength_scaling),
            intra_coeffs: coeffs.levels[0],
            coeffs,
            alloc: AllocatorState::new(r_avg, config.intra_period, config.smooth_window)?,
            targets: vec![0.0; n_frames],
            last_qp_level: [None; MAX_LEVEL + 1],
            last_qp_any: None,
            max_scene: None,
            amortization: Vec::new(),
            resets: 0,
            config,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn schedule(&self) -> &[ScheduledFrame] {
        &self.schedule
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.schedule.len()
    }

    pub fn coefficients(&self) -> &LevelInitTable {
        &self.coeffs
    }

    pub fn intra_coefficients(&self) -> ModelCoefficients {
        self.intra_coeffs
    }

    pub fn allocator(&self) -> &AllocatorState {
        &self.alloc
    }

    pub fn scene_resets(&self) -> usize {
        self.resets
    }

    /// Per-period amortization bookkeeping; the last entry is closed only
    /// once the run is finished.
    pub fn amortization(&self) -> Vec<AmortizationEntry> {
        let mut out = self.amortization.clone();
        if let Some(last) = out.last_mut() {
            last.charged = self.alloc.amortization_charged;
        }
        out
    }

    /// Restores the initial coefficients of every level and the intra model.
    pub fn scene_change_reset(&mut self) -> Result<()> {
        self.coeffs = init_coefficients(self.config.kind, self.r_avg)?;
        self.intra_coeffs = self.coeffs.levels[0];
        self.resets += 1;
        Ok(())
    }

    fn gop_range(&self, at: usize) -> (usize, usize) {
        let g = self.schedule[at].gop;
        let start = self.schedule[..at].iter().rposition(|f| f.gop != g).map_or(0, |i| i + 1);
        let end = self.schedule[at..].iter().position(|f| f.gop != g).map_or(self.schedule.len(), |i| at + i);
        (start, end)
    }

    fn alloc_frame(&self, f: &ScheduledFrame) -> AllocFrame {
        let level = if f.is_intra { 1 } else { f.level };
        AllocFrame {
            coeffs: self.coeffs.coefficients(level),
            omega: self.config.omega(level),
            level,
        }
    }

    fn allocate(&mut self, start: usize, end: usize, budget: f64) {
        let frames: Vec<AllocFrame> = self.schedule[start..end].iter().map(|f| self.alloc_frame(f)).collect();
        let a = allocate_pictures(&frames, budget, self.min_rate);
        for (i, b) in a.budgets.iter().enumerate() {
            self.targets[start + i] = b.target_bpp;
        }
    }

    fn plan_gop(&mut self, start: usize, end: usize) {
        if self.schedule[start].gop == 0 {
            self.targets[start] = self.r_avg;
            return;
        }
        let n = end - start;
        let n_inter = self.schedule[start..end].iter().filter(|f| !f.is_intra).count();
        let budget = self.alloc.open_gop(n, n_inter, self.min_rate);
        self.allocate(start, end, budget);
    }

    fn consistency_qp(&self, level: u8, qp_raw: i32) -> i32 {
        clamp_qp(qp_raw, self.last_qp_level[level as usize], self.last_qp_any)
    }

    /// Codes the next frame of the schedule.
    pub fn step(&mut self, seq: &SyntheticSequence) -> Result<FrameRecord> {
        let at = self.cursor;
        let f = *self
            .schedule
            .get(at)
            .ok_or_else(|| Error::Invariant("step called after the last frame".into()))?;
        let scene = seq
            .frames
            .get(f.poc as usize)
            .ok_or_else(|| Error::Domain(format!("sequence has no frame {}", f.poc)))?
            .scene_id;
        if self.config.reset_on_scene_change && self.max_scene.is_some_and(|m| scene > m) {
            self.scene_change_reset()?;
        }
        self.max_scene = Some(self.max_scene.map_or(scene, |m| m.max(scene)));

        let (start, end) = self.gop_range(at);
        if at == start {
            self.plan_gop(start, end);
        }
        let r_i0 = self.targets[at];
        let map = self.config.qp_lambda_map;

        let (model, bpp_target) = if f.is_intra {
            (self.intra_coeffs, self.alloc.intra_target(r_i0, self.config.intra_kappa))
        } else {
            (self.coeffs.coefficients(f.level), r_i0)
        };
        let lambda = clamp_lambda(model.lambda_from_bpp(bpp_target)?);
        let qp_raw = clamp_qp_range(map.qp_from_lambda(lambda));
        let qp_final = self.consistency_qp(f.level, qp_raw);
        let out = seq.encode_frame(f.poc as usize, f.level, qp_final)?;
        let obs = UpdateObservation {
            bpp_target,
            lambda_used: map.lambda_from_qp(qp_final as f64),
            bpp_actual: out.bpp,
        };
        let updated = if f.is_intra {
            recalibrate_alpha(&model, &obs)?
        } else {
            lms_update(&model, &obs, &self.strengths)?
        };

        if f.is_intra {
            self.intra_coeffs = updated;
            let next_intra = self.schedule[at + 1..]
                .iter()
                .position(|s| s.is_intra)
                .map_or(self.schedule.len(), |i| at + 1 + i);
            let period_len = next_intra - at;
            if let Some(last) = self.amortization.last_mut() {
                last.charged = self.alloc.amortization_charged;
            }
            let r_i2 = if period_len < 2 { r_i0 } else { out.bpp };
            self.alloc.amortize_intra(r_i0, r_i2, period_len)?;
            self.amortization.push(AmortizationEntry {
                decode_index: f.decode_index,
                r_i0,
                r_i2: out.bpp,
                period_len,
                overhead: r_i2 - r_i0,
                charged: 0.0,
            });
            if at + 1 < end {
                let old: f64 = self.targets[at + 1..end].iter().sum();
                let n = end - at - 1;
                let charge = self.alloc.charge_amortization(n);
                let budget = (old - charge).max(n as f64 * self.min_rate);
                self.allocate(at + 1, end, budget);
            }
        } else {
            self.coeffs.levels[f.level as usize] = updated;
        }
        self.alloc.record_frame(r_i0, out.bpp, f.is_intra);
        self.last_qp_level[f.level as usize] = Some(qp_final);
        self.last_qp_any = Some(qp_final);
        self.cursor += 1;

        Ok(FrameRecord {
            poc: f.poc,
            decode_index: f.decode_index,
            level: f.level,
            target_bpp: r_i0,
            recorded_bpp: if f.is_intra { r_i0 } else { out.bpp },
            actual_bpp: out.bpp,
            lambda,
            qp_raw,
            qp_final,
            mse: out.mse,
            psnr_db: psnr_from_mse(out.mse),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: u8,
    pub frames: usize,
    pub mean_bpp: f64,
    pub mean_psnr_db: f64,
    pub mean_qp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_bits: f64,
    /// Absent for CQP runs.
    pub target_bits: Option<f64>,
    pub delta_r_percent: Option<f64>,
    pub mean_psnr_db: f64,
    pub per_level: Vec<LevelSummary>,
}

impl RunSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Average bitrate in bits per second.
    pub fn bitrate(&self, geometry: &VideoGeometry, n_frames: usize) -> f64 {
        self.total_bits / n_frames as f64 * geometry.frame_rate
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<FrameRecord>,
    pub summary: RunSummary,
    pub final_coefficients: LevelInitTable,
    pub intra_coefficients: ModelCoefficients,
    pub amortization: Vec<AmortizationEntry>,
    pub scene_resets: usize,
}

pub fn summarize(records: &[FrameRecord], geometry: &VideoGeometry, target_bpp: Option<f64>) -> Result<RunSummary> {
    if records.is_empty() {
        return Err(Error::Config("no frames to summarize".into()));
    }
    let total_bits: f64 = records.iter().map(|r| geometry.bpp_to_bits(r.actual_bpp)).sum();
    let target_bits = target_bpp.map(|t| geometry.bpp_to_bits(t) * records.len() as f64);
    let delta_r_percent = target_bits.map(|t| delta_r(total_bits, t)).transpose()?;
    let mean = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        s / n as f64
    };
    let per_level = (0..=MAX_LEVEL as u8)
        .filter_map(|level| {
            let rs: Vec<&FrameRecord> = records.iter().filter(|r| r.level == level).collect();
            (!rs.is_empty()).then(|| LevelSummary {
                level,
                frames: rs.len(),
                mean_bpp: mean(&mut rs.iter().map(|r| r.actual_bpp)),
                mean_psnr_db: mean(&mut rs.iter().map(|r| r.psnr_db)),
                mean_qp: mean(&mut rs.iter().map(|r| r.qp_final as f64)),
            })
        })
        .collect();
    Ok(RunSummary {
        total_bits,
        target_bits,
        delta_r_percent,
        mean_psnr_db: mean(&mut records.iter().map(|r| r.psnr_db)),
        per_level,
    })
}

fn run_cqp(config: &ControllerConfig, seq: &SyntheticSequence, base_qp: i32) -> Result<RunOutput> {
    if !(0..=QP_MAX).contains(&base_qp) {
        return Err(Error::Config(format!("base QP {base_qp} outside [0, {QP_MAX}]")));
    }
    let structure = build_structure(config.kind);
    let schedule = build_schedule(&structure, config.intra_period, seq.len());
    let map = config.qp_lambda_map;
    let records = schedule
        .iter()
        .map(|f| {
            let qp = clamp_qp_range(base_qp + f.qp_offset);
            let out = seq.encode_frame(f.poc as usize, f.level, qp)?;
            Ok(FrameRecord {
                poc: f.poc,
                decode_index: f.decode_index,
                level: f.level,
                target_bpp: 0.0,
                recorded_bpp: out.bpp,
                actual_bpp: out.bpp,
                lambda: map.lambda_from_qp(qp as f64),
                qp_raw: qp,
                qp_final: qp,
                mse: out.mse,
                psnr_db: psnr_from_mse(out.mse),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let coeffs = init_coefficients(config.kind, config.target_bpp())?;
    Ok(RunOutput {
        summary: summarize(&records, &seq.geometry, None)?,
        records,
        intra_coefficients: coeffs.levels[0],
        final_coefficients: coeffs,
        amortization: Vec::new(),
        scene_resets: 0,
    })
}

/// Codes a whole sequence in ABR or CQP mode.
pub fn run(config: &ControllerConfig, seq: &SyntheticSequence, mode: RcMode) -> Result<RunOutput> {
    config.validate()?;
    seq.validate()?;
    if config.geometry != seq.geometry {
        return Err(Error::Config(format!(
            "controller geometry {:?} does not match the sequence {:?}",
            config.geometry, seq.geometry
        )));
    }
    if let RcMode::Cqp(qp) = mode {
        return run_cqp(config, seq, qp);
    }
    let mut c = Controller::new(config.clone(), seq.len())?;
    let mut records = Vec::with_capacity(seq.len());
    while !c.is_done() {
        records.push(c.step(seq)?);
    }
    Ok(RunOutput {
        summary: summarize(&records, &seq.geometry, Some(c.r_avg))?,
        records,
        amortization: c.amortization(),
        final_coefficients: c.coeffs.clone(),
        intra_coefficients: c.intra_coeffs,
        scene_resets: c.resets,
    })
}

pub fn write_frame_log<W: Write>(records: &[FrameRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    if records.is_empty() {
        wtr.write_record(FRAME_LOG_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Counts frames whose final QP leaves either consistency window.
/// Window check over a finished run, in decode order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowReport {
    pub frames: usize,
    /// Frames whose final QP breaks the ±3 or ±10 window (or [0, 51]).
    pub violations: usize,
    /// Frames where the two windows did not intersect, so the same-level one won.
    pub conflicts: usize,
}

pub fn window_report(records: &[FrameRecord]) -> WindowReport {
    let mut sorted: Vec<&FrameRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.decode_index);
    let mut last_level = [None::<i32>; MAX_LEVEL + 1];
    let mut last_any = None::<i32>;
    let mut rep = WindowReport { frames: sorted.len(), ..Default::default() };
    for r in sorted {
        let q = r.qp_final;
        let prev = last_level[r.level as usize];
        let same = prev.is_some_and(|s| (q - s).abs() > SAME_LEVEL_QP_WINDOW);
        let any = last_any.is_some_and(|a: i32| (q - a).abs() > ANY_FRAME_QP_WINDOW);
        if same || any || !(0..=QP_MAX).contains(&q) {
            rep.violations += 1;
        }
        if let (Some(s), Some(a)) = (prev, last_any) {
            if (s - a).abs() > SAME_LEVEL_QP_WINDOW + ANY_FRAME_QP_WINDOW {
                rep.conflicts += 1;
            }
        }
        last_level[r.level as usize] = Some(q);
        last_any = Some(q);
    }
    rep
}

pub fn window_violations(records: &[FrameRecord]) -> usize {
    window_report(records).violations
}
