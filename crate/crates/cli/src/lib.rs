//! Batch front end: fit R-D curves, simulate rate control runs, sweep QPs,
//! compute BD-rate and dump the GOP tables.
//!
//! Every command that writes a run directory also writes `manifest.json`,
//! which embeds the full experiment config. Passing a manifest back as
//! `--config` repeats the run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rdlambda_core::controller::{run, write_frame_log, ControllerConfig, RcMode};
use rdlambda_core::encoder::{in_family_options, make_sequence_with, Profile, SequenceOptions, SyntheticSequence};
use rdlambda_core::fitting::{fit_report, read_samples, write_report, QpRange, DEFAULT_RANGES};
use rdlambda_core::gop::{build_structure, StructureKind};
use rdlambda_core::metrics::{bd_rate_with, read_rd_points, write_rd_points, BdInterp, RdPoint};
use rdlambda_core::model::{RdGroundTruth, VideoGeometry};
use rdlambda_core::sweep::sweep;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAME_LOG_FILE: &str = "frames.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const RD_CQP_FILE: &str = "rd_cqp.csv";
pub const RD_ABR_FILE: &str = "rd_abr.csv";
pub const LOG_ENV: &str = "RDLAMBDA_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl From<rdlambda_core::Error> for CliError {
    fn from(e: rdlambda_core::Error) -> Self {
        match e {
            rdlambda_core::Error::Invariant(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Which ground-truth curve the generated sequence uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Drawn from the seed over the fixture ranges.
    #[default]
    Random,
    /// Matches the controller's initial coefficients.
    InFamily,
}

fn default_intra_period() -> usize {
    32
}

fn default_frames() -> usize {
    300
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub geometry: VideoGeometry,
    pub kind: StructureKind,
    /// Bits per second; ignored by sweeps.
    pub target_bitrate: f64,
    #[serde(default = "default_intra_period")]
    pub intra_period: usize,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub profile: Profile,
    #[serde(default)]
    pub family: Family,
    /// Overrides the family's base curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<RdGroundTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth_window: Option<usize>,
}

impl SimConfig {
    pub fn controller(&self) -> CliResult<ControllerConfig> {
        let mut c = ControllerConfig::new(self.kind, self.geometry, self.target_bitrate, self.intra_period);
        c.seed = self.seed;
        if let Some(sw) = self.smooth_window {
            c.smooth_window = sw;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn sequence(&self) -> CliResult<SyntheticSequence> {
        let base = match self.family {
            Family::Random => SequenceOptions::default(),
            Family::InFamily => in_family_options(self.kind),
        };
        let opts = SequenceOptions {
            geometry: self.geometry,
            noise_sigma: self.noise_sigma,
            truth: self.truth.or(base.truth),
            ..base
        };
        Ok(make_sequence_with(self.profile, self.frames, self.seed, &opts)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub mode: String,
    pub rate_points: Vec<i32>,
    pub seed: u64,
    pub config: SimConfig,
    pub files: Vec<String>,
}

/// Reads a config, or the config embedded in a manifest.
pub fn load_config(path: &Path) -> CliResult<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    let cfg = if value.get("manifest_version").is_some() {
        serde_json::from_value::<RunManifest>(value).map_err(|e| io_err(path, e))?.config
    } else {
        serde_json::from_value(value).map_err(|e| io_err(path, e))?
    };
    Ok(cfg)
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| io_err(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes through a temp file in the target's directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    debug!("wrote {}", path.display());
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Invariant(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn cmd_fit(input: &Path, ranges: &[QpRange], output: &Path, force: bool) -> CliResult<()> {
    if output.exists() && !force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", output.display())));
    }
    let file = fs::File::open(input).map_err(|e| io_err(input, e))?;
    let samples = read_samples(file).map_err(|e| io_err(input, e))?;
    let ranges = if ranges.is_empty() { &DEFAULT_RANGES[..] } else { ranges };
    info!("fitting {} samples over {} ranges", samples.len(), ranges.len());
    let reports = fit_report(&samples, ranges);
    let mut buf = Vec::new();
    write_report(&reports, &mut buf)?;
    write_atomic(output, &buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Abr,
    Cqp(i32),
}

impl SimMode {
    pub fn parse(mode: &str, qp: Option<i32>) -> CliResult<Self> {
        match (mode.to_ascii_lowercase().as_str(), qp) {
            ("abr", None) => Ok(SimMode::Abr),
            ("abr", Some(_)) => Err(CliError::Usage("--qp only applies to cqp mode".into())),
            ("cqp", Some(q)) if (0..=51).contains(&q) => Ok(SimMode::Cqp(q)),
            ("cqp", Some(q)) => Err(CliError::Usage(format!("QP {q} outside 0..=51"))),
            ("cqp", None) => Err(CliError::Usage("cqp mode needs --qp".into())),
            (other, _) => Err(CliError::Usage(format!("unknown mode `{other}` (expected abr or cqp)"))),
        }
    }

    fn label(self) -> String {
        match self {
            SimMode::Abr => "abr".into(),
            SimMode::Cqp(q) => format!("cqp:{q}"),
        }
    }
}

pub fn cmd_simulate(config_path: &Path, mode: SimMode, out: &Path, force: bool) -> CliResult<()> {
    let cfg = load_config(config_path)?;
    let ctrl = cfg.controller()?;
    let seq = cfg.sequence()?;
    prepare_output_dir(out, force)?;
    let rc = match mode {
        SimMode::Abr => RcMode::Abr,
        SimMode::Cqp(q) => RcMode::Cqp(q),
    };
    info!("simulating {} frames, {} {}", seq.len(), cfg.kind, mode.label());
    let result = run(&ctrl, &seq, rc)?;
    let mut log = Vec::new();
    write_frame_log(&result.records, &mut log)?;
    write_atomic(&out.join(FRAME_LOG_FILE), &log)?;
    write_atomic(&out.join(SUMMARY_FILE), &json_bytes(&result.summary)?)?;
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "simulate".into(),
        config_path: config_path.to_path_buf(),
        output_dir: out.to_path_buf(),
        mode: mode.label(),
        rate_points: match mode {
            SimMode::Abr => vec![],
            SimMode::Cqp(q) => vec![q],
        },
        seed: cfg.seed,
        files: vec![FRAME_LOG_FILE.into(), SUMMARY_FILE.into()],
        config: cfg,
    };
    write_atomic(&out.join(MANIFEST_FILE), &json_bytes(&manifest)?)
}

pub fn cmd_sweep(config_path: &Path, qps: &[i32], out: &Path, force: bool) -> CliResult<()> {
    if qps.len() < 4 {
        return Err(CliError::Usage(format!("BD-rate needs at least 4 QPs, got {}", qps.len())));
    }
    if let Some(q) = qps.iter().find(|q| !(0..=51).contains(*q)) {
        return Err(CliError::Usage(format!("QP {q} outside 0..=51")));
    }
    let cfg = load_config(config_path)?;
    let ctrl = cfg.controller()?;
    let seq = cfg.sequence()?;
    prepare_output_dir(out, force)?;
    info!("sweeping {} QPs on {} frames, {}", qps.len(), seq.len(), cfg.kind);
    let report = sweep(&ctrl, &seq, qps)?;
    let (cqp, abr): (Vec<RdPoint>, Vec<RdPoint>) = report.legs.iter().map(|l| (l.cqp, l.abr)).unzip();
    for (name, pts) in [(RD_CQP_FILE, &cqp), (RD_ABR_FILE, &abr)] {
        let mut buf = Vec::new();
        write_rd_points(pts, &mut buf)?;
        write_atomic(&out.join(name), &buf)?;
    }
    write_atomic(&out.join(SWEEP_FILE), &json_bytes(&report)?)?;
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "sweep".into(),
        config_path: config_path.to_path_buf(),
        output_dir: out.to_path_buf(),
        mode: "cqp+abr".into(),
        rate_points: qps.to_vec(),
        seed: cfg.seed,
        files: vec![SWEEP_FILE.into(), RD_CQP_FILE.into(), RD_ABR_FILE.into()],
        config: cfg,
    };
    write_atomic(&out.join(MANIFEST_FILE), &json_bytes(&manifest)?)
}

/// BD-rate of `test` against `anchor`, in percent.
pub fn cmd_bdrate(anchor: &Path, test: &Path, interp: BdInterp) -> CliResult<f64> {
    let read = |p: &Path| -> CliResult<Vec<RdPoint>> {
        let f = fs::File::open(p).map_err(|e| io_err(p, e))?;
        read_rd_points(f).map_err(|e| io_err(p, e))
    };
    Ok(bd_rate_with(&read(anchor)?, &read(test)?, interp)?)
}

/// GOP tables as JSON, all kinds when `kind` is absent.
pub fn cmd_structures(kind: Option<StructureKind>) -> CliResult<String> {
    let kinds: Vec<StructureKind> = kind.map_or(StructureKind::ALL.to_vec(), |k| vec![k]);
    let tables: Vec<_> = kinds.into_iter().map(build_structure).collect();
    serde_json::to_string_pretty(&tables).map_err(|e| CliError::Invariant(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        assert_eq!(SimMode::parse("ABR", None).unwrap(), SimMode::Abr);
        assert_eq!(SimMode::parse("cqp", Some(27)).unwrap(), SimMode::Cqp(27));
        for (m, q) in [("cqp", None), ("cqp", Some(52)), ("abr", Some(30)), ("cbr", None)] {
            assert_eq!(SimMode::parse(m, q).unwrap_err().exit_code(), 2, "{m} {q:?}");
        }
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(rdlambda_core::Error::Config("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(rdlambda_core::Error::Invariant("x".into())).exit_code(), 4);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        write_atomic(&p, b"first version, longer").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"second");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn empty_dir_is_reusable() {
        let dir = tempfile::tempdir().unwrap();
        prepare_output_dir(dir.path(), false).unwrap();
        fs::write(dir.path().join("x"), "1").unwrap();
        assert_eq!(prepare_output_dir(dir.path(), false).unwrap_err().exit_code(), 2);
        prepare_output_dir(dir.path(), true).unwrap();
    }

    #[test]
    fn manifest_embeds_a_loadable_config() {
        let cfg = SimConfig {
            geometry: VideoGeometry::new(64, 64, 25.0).unwrap(),
            kind: StructureKind::LowDelayP,
            target_bitrate: 1e5,
            intra_period: 16,
            frames: 20,
            noise_sigma: 0.0,
            seed: 3,
            profile: Profile::Ramp,
            family: Family::InFamily,
            truth: None,
            smooth_window: Some(20),
        };
        let m = RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool_version: "0".into(),
            command: "simulate".into(),
            config_path: "c.json".into(),
            output_dir: "out".into(),
            mode: "abr".into(),
            rate_points: vec![],
            seed: 3,
            config: cfg.clone(),
            files: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        fs::write(&p, json_bytes(&m).unwrap()).unwrap();
        assert_eq!(load_config(&p).unwrap(), cfg);
        assert_eq!(cfg.controller().unwrap().smooth_window, 20);
        assert_eq!(cfg.sequence().unwrap().len(), 20);
    }
}
