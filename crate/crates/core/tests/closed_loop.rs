use rdlambda_core::controller::{run, window_report, ControllerConfig, RcMode};
use rdlambda_core::encoder::{in_family_options, make_sequence_with, Profile, SequenceOptions, SyntheticSequence};
use rdlambda_core::gop::{init_coefficients, StructureKind};

const RATES: [f64; 3] = [0.05, 0.1, 0.2];

fn in_family(kind: StructureKind, profile: Profile, n: usize, sigma: f64) -> (SyntheticSequence, SequenceOptions) {
    let opts = SequenceOptions {
        noise_sigma: sigma,
        ..in_family_options(kind)
    };
    (make_sequence_with(profile, n, 11, &opts).unwrap(), opts)
}

fn config(kind: StructureKind, opts: &SequenceOptions, bpp: f64) -> ControllerConfig {
    let g = opts.geometry;
    ControllerConfig::new(kind, g, bpp * g.pixels() * g.frame_rate, 32)
}

// With an exact model the only tracking error left is QP rounding: half a
// step in QP is a factor exp(0.5 / c1) in lambda.
#[test]
fn exact_model_lands_within_half_a_qp_step() {
    for kind in [StructureKind::LowDelayP, StructureKind::LowDelayB] {
        let (seq, opts) = in_family(kind, Profile::Stationary, 300, 0.0);
        for bpp in RATES {
            let cfg = config(kind, &opts, bpp);
            let out = run(&cfg, &seq, RcMode::Abr).unwrap();
            let init = init_coefficients(kind, cfg.target_bpp()).unwrap();
            for r in out.records.iter().filter(|r| r.decode_index > 50 && r.level > 0 && r.qp_raw == r.qp_final) {
                let m = init.coefficients(r.level);
                let bound = 0.5 / (cfg.qp_lambda_map.c1 * m.beta.abs()) + 1e-9;
                let err = ((r.actual_bpp + m.gamma) / (r.target_bpp + m.gamma)).ln().abs();
                assert!(err <= bound, "{kind} {bpp} frame {}: {err} > {bound}", r.decode_index);
            }
            for level in 1..=3u8 {
                let (a, b) = (out.final_coefficients.coefficients(level), init.coefficients(level));
                assert!((a.alpha - b.alpha).abs() <= 1e-9 * b.alpha, "{kind} L{level}: {a:?}");
                assert!((a.beta - b.beta).abs() <= 1e-9, "{kind} L{level}: {a:?}");
            }
        }
    }
}

#[test]
fn rate_is_met_in_family() {
    for kind in StructureKind::ALL {
        let (seq, opts) = in_family(kind, Profile::Stationary, 300, 0.05);
        for bpp in RATES {
            let dr = run(&config(kind, &opts, bpp), &seq, RcMode::Abr).unwrap().summary.delta_r_percent.unwrap();
            assert!(dr <= 2.0, "{kind} {bpp}: dR {dr:.3}");
        }
    }
}

#[test]
fn recorded_rate_plus_intra_overhead_is_conserved() {
    for kind in StructureKind::ALL {
        let (seq, opts) = in_family(kind, Profile::Stationary, 300, 0.0);
        for bpp in RATES {
            let cfg = config(kind, &opts, bpp);
            let out = run(&cfg, &seq, RcMode::Abr).unwrap();
            let recorded: f64 = out.records.iter().map(|r| r.recorded_bpp).sum();
            let actual: f64 = out.records.iter().map(|r| r.actual_bpp).sum();
            let overhead: f64 = out.amortization.iter().map(|e| e.overhead).sum();
            assert!((recorded + overhead - actual).abs() <= 1e-9 * actual);
            let nominal = out.records.len() as f64 * cfg.target_bpp();
            let err = (recorded + overhead - nominal).abs() / nominal;
            assert!(err <= 0.01, "{kind} {bpp}: {err:.4}");
        }
    }
}

#[test]
fn amortization_closes_every_period() {
    for kind in StructureKind::ALL {
        let (seq, opts) = in_family(kind, Profile::Stationary, 300, 0.05);
        let out = run(&config(kind, &opts, 0.1), &seq, RcMode::Abr).unwrap();
        assert_eq!(out.amortization.len(), 10);
        for e in &out.amortization {
            assert!((e.overhead - (e.r_i2 - e.r_i0)).abs() <= 1e-12);
            assert!((e.charged - e.overhead).abs() <= 1e-9, "{kind}: {e:?}");
        }
    }
}

#[test]
fn scene_change_triggers_one_reset() {
    for kind in StructureKind::ALL {
        let (seq, opts) = in_family(kind, Profile::TwoScene, 300, 0.05);
        let out = run(&config(kind, &opts, 0.1), &seq, RcMode::Abr).unwrap();
        assert_eq!(out.scene_resets, 1);
        let (still, _) = in_family(kind, Profile::Stationary, 300, 0.05);
        assert_eq!(run(&config(kind, &opts, 0.1), &still, RcMode::Abr).unwrap().scene_resets, 0);
    }
}

#[test]
fn window_breaks_only_where_windows_conflict() {
    let opts = SequenceOptions {
        noise_sigma: 0.05,
        ..Default::default()
    };
    for seed in 0..4 {
        for profile in Profile::ALL {
            let seq = make_sequence_with(profile, 160, seed, &opts).unwrap();
            for kind in StructureKind::ALL {
                let rep = window_report(&run(&config(kind, &opts, 0.1), &seq, RcMode::Abr).unwrap().records);
                assert!(rep.violations <= rep.conflicts, "{seed} {profile} {kind}: {rep:?}");
            }
        }
    }
}

#[test]
fn sequence_json_round_trip_replays_identically() {
    let opts = SequenceOptions {
        noise_sigma: 0.1,
        ..Default::default()
    };
    let seq = make_sequence_with(Profile::Ramp, 96, 21, &opts).unwrap();
    let back = SyntheticSequence::from_json(&seq.to_json().unwrap()).unwrap();
    assert_eq!(back, seq);
    let cfg = config(StructureKind::LowDelayB, &opts, 0.08);
    let a = run(&cfg, &seq, RcMode::Abr).unwrap().records;
    let b = run(&cfg, &back, RcMode::Abr).unwrap().records;
    assert_eq!(a, b);
}
