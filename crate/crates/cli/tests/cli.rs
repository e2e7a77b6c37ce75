use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rdlambda_cli::{RunManifest, FRAME_LOG_FILE, MANIFEST_FILE, RD_ABR_FILE, RD_CQP_FILE, SUMMARY_FILE, SWEEP_FILE};
use rdlambda_core::controller::{RunSummary, FRAME_LOG_HEADER};
use rdlambda_core::fitting::REPORT_HEADER;
use rdlambda_core::gop::GopStructure;
use rdlambda_core::metrics::read_rd_points;
use rdlambda_core::sweep::SweepReport;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdlambda")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("config.json");
    let text = format!(
        r#"{{
  "geometry": {{ "width": 416, "height": 240, "frame_rate": 30.0 }},
  "kind": "RA",
  "target_bitrate": 300000.0,
  "intra_period": 32,
  "frames": 96,
  "noise_sigma": 0.05,
  "seed": 7,
  "profile": "stationary"{extra}
}}"#
    );
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_fixture_prefers_the_proposed_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.csv");
    let o = bin(&["fit", s(&fixture("synthetic_rd.csv")), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), REPORT_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 8);
    for pair in rows.chunks(2) {
        assert_eq!((&pair[0][1], &pair[1][1]), ("classic", "proposed"));
        let rmse = |r: &csv::StringRecord| r[7].parse::<f64>().unwrap();
        assert!(rmse(&pair[1]) <= rmse(&pair[0]), "range {}", &pair[0][0]);
    }
}

#[test]
fn fit_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit.csv");
    let no_header = dir.path().join("a.csv");
    fs::write(&no_header, "4,1.0,2.0\n5,0.9,2.2\n").unwrap();
    let o = bin(&["fit", s(&no_header), "-o", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let empty = dir.path().join("b.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&bin(&["fit", s(&empty), "-o", s(&out)])), 3);

    let bad_row = dir.path().join("c.csv");
    fs::write(&bad_row, "qp,bpp,mse\n4,1.0,2.0\n5,oops,2.2\n").unwrap();
    let o = bin(&["fit", s(&bad_row), "-o", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(code(&bin(&["fit", s(&dir.path().join("missing.csv")), "-o", s(&out)])), 3);
    assert!(!out.exists());
}

#[test]
fn cqp_then_abr_reports_rate_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let cqp = dir.path().join("cqp");
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "--mode", "cqp", "--qp", "32", "-o", s(&cqp)])), 0);
    let anchor: RunSummary = serde_json::from_str(&fs::read_to_string(cqp.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert!(anchor.delta_r_percent.is_none());

    let rate = anchor.total_bits / 96.0 * 30.0;
    let cfg2 = dir.path().join("abr.json");
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["target_bitrate"] = rate.into();
    fs::write(&cfg2, v.to_string()).unwrap();
    let abr = dir.path().join("abr");
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg2), "-o", s(&abr)])), 0);
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(abr.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert!(summary.delta_r_percent.unwrap().is_finite());
}

#[test]
fn simulate_outputs_follow_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "-o", s(&out)])), 0);

    let mut rdr = csv::Reader::from_path(out.join(FRAME_LOG_FILE)).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), FRAME_LOG_HEADER);
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), FRAME_LOG_HEADER.len());
        for (i, field) in rec.iter().enumerate() {
            assert!(field.parse::<f64>().is_ok(), "column {} = {field:?}", FRAME_LOG_HEADER[i]);
        }
        n += 1;
    }
    assert_eq!(n, 96);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(SUMMARY_FILE)).unwrap()).unwrap();
    for key in ["total_bits", "target_bits", "delta_r_percent", "mean_psnr_db", "per_level"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!((m.command.as_str(), m.mode.as_str(), m.seed), ("simulate", "abr", 7));
    assert_eq!(m.files, [FRAME_LOG_FILE, SUMMARY_FILE]);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "-o", s(out)])), 0);
    }
    for f in [FRAME_LOG_FILE, SUMMARY_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let replay = dir.path().join("replay");
    assert_eq!(code(&bin(&["simulate", "--config", s(&a.join(MANIFEST_FILE)), "-o", s(&replay)])), 0);
    assert_eq!(fs::read(a.join(FRAME_LOG_FILE)).unwrap(), fs::read(replay.join(FRAME_LOG_FILE)).unwrap());
}

#[test]
fn output_dir_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "-o", s(&out)])), 0);
    let before = fs::read(out.join(FRAME_LOG_FILE)).unwrap();
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "-o", s(&out)])), 2);
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "-o", s(&out), "--force"])), 0);
    assert_eq!(fs::read(out.join(FRAME_LOG_FILE)).unwrap(), before);
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "--mode", "vbr", "-o", s(&out)])), 2);
    assert_eq!(code(&bin(&["simulate", "--config", s(&cfg), "--mode", "cqp", "-o", s(&out)])), 2);
    assert_eq!(code(&bin(&["frobnicate"])), 2);

    let bad = write_config(dir.path(), r#", "intra_period": 12"#);
    assert_eq!(code(&bin(&["simulate", "--config", s(&bad), "-o", s(&out)])), 3);
    let unknown = write_config(dir.path(), r#", "colour": "blue""#);
    assert_eq!(code(&bin(&["simulate", "--config", s(&unknown), "-o", s(&out)])), 3);
}

#[test]
fn sweep_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#", "family": "in_family""#);
    let out = dir.path().join("sweep");
    let o = bin(&["sweep", "--config", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m.rate_points, [22, 27, 32, 37]);
    let rep: SweepReport = serde_json::from_str(&fs::read_to_string(out.join(SWEEP_FILE)).unwrap()).unwrap();
    assert_eq!(rep.legs.len(), 4);
    assert!(rep.bd_rate_percent.is_finite() && rep.mean_delta_r_percent.is_finite());
    for f in [RD_CQP_FILE, RD_ABR_FILE] {
        assert_eq!(read_rd_points(fs::File::open(out.join(f)).unwrap()).unwrap().len(), 4);
    }
    let cqp = out.join(RD_CQP_FILE);
    let o = bin(&["bdrate", s(&cqp), s(&cqp)]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0.000000");

    let few = dir.path().join("few");
    assert_eq!(code(&bin(&["sweep", "--config", s(&cfg), "--qps", "22,27,32", "-o", s(&few)])), 2);
}

#[test]
fn structures_dump() {
    let o = bin(&["structures"]);
    assert_eq!(code(&o), 0);
    let tables: Vec<GopStructure> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(tables.iter().map(|t| t.slots.len()).collect::<Vec<_>>(), [8, 4, 4]);
    let o = bin(&["structures", "--kind", "ldb"]);
    let tables: Vec<GopStructure> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(tables.len(), 1);
    assert_eq!(code(&bin(&["structures", "--kind", "hier"])), 2);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let cfg = rdlambda_cli::load_config(&p).unwrap();
        cfg.controller().unwrap();
        n += 1;
    }
    assert!(n >= 2);
}
