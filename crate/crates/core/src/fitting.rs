//! Least-squares fitting of rate-distortion curves.
//!
//! Two models are fitted to measured `(bpp, mse)` points:
//!
//! * classic: `D = C R^-K`
//! * proposed: `D = C (R + B)^-K - T`
//!
//! Both minimize the squared residual in the distortion domain. Positive
//! parameters are optimized in log space with a simplex search; the classic
//! fit is seeded from a log-log linear regression and in turn seeds the
//! proposed fit.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{self, SimplexOptions};

/// One measured operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdSample {
    pub qp: i32,
    pub bpp: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Classic,
    Proposed,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Classic => f.write_str("classic"),
            ModelKind::Proposed => f.write_str("proposed"),
        }
    }
}

/// Fitted `(C, K, B, T)`; the classic model reports `B = T = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveParams {
    pub c: f64,
    pub k: f64,
    pub b: f64,
    pub t: f64,
}

impl CurveParams {
    pub fn predict(&self, bpp: f64) -> f64 {
        (self.c * (bpp + self.b).powf(-self.k) - self.t).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub params: CurveParams,
    pub r_squared: f64,
    pub rmse: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Coefficient of determination and root mean squared error.
pub fn goodness(observed: &[f64], predicted: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != predicted.len() || observed.len() < 2 {
        return Err(Error::Degenerate(format!(
            "goodness needs two equal-length series of at least 2 points ({} vs {})",
            observed.len(),
            predicted.len()
        )));
    }
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("observations have zero variance".into()));
    }
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok((1.0 - ss_res / ss_tot, (ss_res / n).sqrt()))
}

fn check_samples(samples: &[RdSample], min_points: usize) -> Result<()> {
    if samples.len() < min_points {
        return Err(Error::Degenerate(format!(
            "need at least {min_points} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !(s.bpp > 0.0) || !(s.mse >= 0.0) || !s.bpp.is_finite() || !s.mse.is_finite()) {
        return Err(Error::Degenerate("samples need positive bpp and non-negative mse".into()));
    }
    let mut bpps: Vec<f64> = samples.iter().map(|s| s.bpp).collect();
    bpps.sort_by(f64::total_cmp);
    bpps.dedup();
    if bpps.len() < min_points {
        return Err(Error::Degenerate(format!(
            "need at least {min_points} distinct bpp values, got {}",
            bpps.len()
        )));
    }
    let first = samples[0].mse;
    if samples.iter().all(|s| s.mse == first) {
        return Err(Error::Degenerate("all samples share the same mse".into()));
    }
    Ok(())
}

fn sse(samples: &[RdSample], p: &CurveParams) -> f64 {
    samples
        .iter()
        .map(|s| (p.predict(s.bpp) - s.mse).powi(2))
        .sum()
}

fn finish(samples: &[RdSample], model: ModelKind, params: CurveParams, converged: bool, iterations: usize) -> Result<FitResult> {
    let observed: Vec<f64> = samples.iter().map(|s| s.mse).collect();
    let predicted: Vec<f64> = samples.iter().map(|s| params.predict(s.bpp)).collect();
    let (r_squared, rmse) = goodness(&observed, &predicted)?;
    Ok(FitResult {
        model,
        params,
        r_squared,
        rmse,
        converged,
        iterations,
    })
}

/// Ordinary least squares of `ln mse` on `ln bpp`, giving `(C, K)`.
fn log_linear_seed(samples: &[RdSample]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.mse > 0.0)
        .map(|s| (s.bpp.ln(), s.mse.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate("fewer than two samples with positive mse".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all bpp values are equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let k = if -slope > 1e-3 { -slope } else { 1.0 };
    let c = (my + k * mx).exp();
    Ok((c, k))
}

/// Fit `D = C R^-K`.
pub fn fit_classic(samples: &[RdSample]) -> Result<FitResult> {
    fit_classic_with(samples, &SimplexOptions::default())
}

pub fn fit_classic_with(samples: &[RdSample], opts: &SimplexOptions) -> Result<FitResult> {
    check_samples(samples, 3)?;
    let (c0, k0) = log_linear_seed(samples)?;
    let to_params = |x: &[f64]| CurveParams {
        c: x[0].exp(),
        k: x[1].exp(),
        b: 0.0,
        t: 0.0,
    };
    let r = simplex::minimize(|x| sse(samples, &to_params(x)), &[c0.ln(), k0.ln()], opts);
    finish(samples, ModelKind::Classic, to_params(&r.x), r.converged, r.iterations)
}

/// Least squares `(C, T)` for fixed `K, B`, over samples with positive mse.
fn linear_ct(samples: &[RdSample], k: f64, b: f64) -> Option<CurveParams> {
    let (mut n, mut su, mut suu, mut sd, mut sud) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in samples.iter().filter(|s| s.mse > 0.0) {
        let u = (s.bpp + b).powf(-k);
        n += 1.0;
        su += u;
        suu += u * u;
        sd += s.mse;
        sud += u * s.mse;
    }
    let det = n * suu - su * su;
    if !(det > 0.0) || !k.is_finite() || !b.is_finite() {
        return None;
    }
    let mut c = (n * sud - su * sd) / det;
    let mut t = (su * c - sd) / n;
    if t < 0.0 {
        t = 0.0;
        c = sud / suu;
    }
    (c > 0.0 && c.is_finite()).then_some(CurveParams { c, k, b, t })
}

/// Fit `D = C (R + B)^-K - T` with `C, K > 0` and `B, T >= 0`.
pub fn fit_proposed(samples: &[RdSample]) -> Result<FitResult> {
    fit_proposed_with(samples, &SimplexOptions::default())
}

pub fn fit_proposed_with(samples: &[RdSample], opts: &SimplexOptions) -> Result<FitResult> {
    check_samples(samples, 5)?;
    let classic = fit_classic_with(samples, opts)?;
    let min_bpp = samples.iter().map(|s| s.bpp).fold(f64::INFINITY, f64::min);
    let min_mse = samples
        .iter()
        .map(|s| s.mse)
        .filter(|&m| m > 0.0)
        .fold(f64::INFINITY, f64::min);
    let min_mse = if min_mse.is_finite() { min_mse } else { 1e-6 };

    let to_params = |x: &[f64]| CurveParams {
        c: x[0].exp(),
        k: x[1].exp(),
        b: x[2].exp(),
        t: x[3].exp(),
    };
    let objective = |x: &[f64]| sse(samples, &to_params(x));
    let (c0, k0) = (classic.params.c.ln(), classic.params.k.ln());
    let starts = [
        [c0, k0, (0.05 * min_bpp).ln(), (0.5 * min_mse).ln()],
        // Nearly the classic solution, so the richer model never does worse.
        [c0, k0, (1e-6 * min_bpp).ln(), (1e-6 * min_mse).ln()],
    ];
    let mut best: Option<simplex::SimplexResult> = None;
    let mut iterations = 0;
    for s in &starts {
        let r = simplex::minimize(objective, s, opts);
        iterations += r.iterations;
        if best.as_ref().is_none_or(|b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    let mut params = to_params(&best.x);

    // Polish over (K, B) only, with C and T solved linearly at each step.
    let projected = |x: &[f64]| linear_ct(samples, x[0].exp(), x[1].exp());
    let r = simplex::minimize(
        |x| projected(x).map_or(f64::INFINITY, |p| sse(samples, &p)),
        &[params.k.ln(), params.b.ln()],
        opts,
    );
    iterations += r.iterations;
    if let Some(p) = projected(&r.x) {
        if sse(samples, &p) < best.f {
            params = p;
        }
    }
    finish(samples, ModelKind::Proposed, params, best.converged, iterations)
}

/// Inclusive QP interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpRange {
    pub lo: i32,
    pub hi: i32,
}

impl QpRange {
    pub const fn new(lo: i32, hi: i32) -> Self {
        QpRange { lo, hi }
    }

    pub fn contains(&self, qp: i32) -> bool {
        qp >= self.lo && qp <= self.hi
    }
}

/// Full, low, middle and high QP ranges.
pub const DEFAULT_RANGES: [QpRange; 4] = [
    QpRange::new(4, 51),
    QpRange::new(4, 22),
    QpRange::new(17, 37),
    QpRange::new(32, 51),
];

impl fmt::Display for QpRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for QpRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (a, b) = s
            .split_once("...")
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| Error::Config(format!("QP range `{s}` must look like 4-51")))?;
        let lo: i32 = a.trim().parse().map_err(|_| Error::Config(format!("bad QP `{a}`")))?;
        let hi: i32 = b.trim().parse().map_err(|_| Error::Config(format!("bad QP `{b}`")))?;
        if lo > hi {
            return Err(Error::Config(format!("empty QP range `{s}`")));
        }
        Ok(QpRange { lo, hi })
    }
}

/// Classic and proposed fits for one QP range, or why they could not be made.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub range: QpRange,
    pub outcome: std::result::Result<(FitResult, FitResult), String>,
}

/// Fits both models on each range's sub-sample. Ranges are independent and
/// fitted in parallel when the `parallel` feature is on.
pub fn fit_report(samples: &[RdSample], ranges: &[QpRange]) -> Vec<RangeReport> {
    crate::par::map(ranges, |&range| {
        let sub: Vec<RdSample> = samples.iter().copied().filter(|s| range.contains(s.qp)).collect();
        let outcome = if sub.len() < 5 {
            Err("insufficient data".to_string())
        } else {
            fit_classic(&sub)
                .and_then(|c| fit_proposed(&sub).map(|p| (c, p)))
                .map_err(|e| e.to_string())
        };
        RangeReport { range, outcome }
    })
}

pub const REPORT_HEADER: [&str; 9] = ["range", "model", "C", "K", "B", "T", "r2", "rmse", "converged"];

/// Writes the fit report as CSV.
pub fn write_report<W: Write>(reports: &[RangeReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(REPORT_HEADER).map_err(csv_err)?;
    for rep in reports {
        let range = rep.range.to_string();
        match &rep.outcome {
            Ok((classic, proposed)) => {
                for fit in [classic, proposed] {
                    let p = &fit.params;
                    w.write_record([
                        range.clone(),
                        fit.model.to_string(),
                        format!("{:.9e}", p.c),
                        format!("{:.9e}", p.k),
                        format!("{:.9e}", p.b),
                        format!("{:.9e}", p.t),
                        format!("{:.9}", fit.r_squared),
                        format!("{:.9e}", fit.rmse),
                        fit.converged.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
            Err(msg) => {
                for model in [ModelKind::Classic, ModelKind::Proposed] {
                    w.write_record([
                        range.as_str(),
                        &model.to_string(),
                        "",
                        "",
                        "",
                        "",
                        "",
                        "",
                        msg.as_str(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `qp,bpp,mse` rows (header required).
pub fn read_samples<R: Read>(input: R) -> Result<Vec<RdSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["qp", "bpp", "mse"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header `qp,bpp,mse`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(Error::Malformed {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let bad = |what: &str| Error::Malformed {
            line,
            message: format!("cannot parse {what}"),
        };
        let qp: i32 = rec[0].parse().map_err(|_| bad("qp"))?;
        let bpp: f64 = rec[1].parse().map_err(|_| bad("bpp"))?;
        let mse: f64 = rec[2].parse().map_err(|_| bad("mse"))?;
        if !(0..=51).contains(&qp) || !(bpp > 0.0) || !(mse >= 0.0) {
            return Err(Error::Malformed {
                line,
                message: "qp must lie in 0..=51, bpp > 0, mse >= 0".into(),
            });
        }
        out.push(RdSample { qp, bpp, mse });
    }
    if out.is_empty() {
        return Err(Error::Malformed {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}

pub fn write_samples<W: Write>(samples: &[RdSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["qp", "bpp", "mse"]).map_err(csv_err)?;
    for s in samples {
        w.write_record([s.qp.to_string(), format!("{:.12e}", s.bpp), format!("{:.12e}", s.mse)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{QpLambdaMap, RdGroundTruth};
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    /// Samples from a ground-truth curve at the bpp where its slope equals
    /// the QP's lambda.
    fn synth(gt: &RdGroundTruth, qps: std::ops::RangeInclusive<i32>) -> Vec<RdSample> {
        let m = QpLambdaMap::default();
        qps.map(|qp| {
            let bpp = gt.rate_from_lambda(m.lambda_from_qp(qp as f64));
            RdSample {
                qp,
                bpp,
                mse: gt.distortion_from_rate(bpp).unwrap(),
            }
        })
        .collect()
    }

    #[test]
    fn goodness_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(goodness(&y, &y).unwrap(), (1.0, 0.0));
        let (r2, _) = goodness(&y, &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r2, 0.0);
        let (r2, rmse) = goodness(&y, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r2 - 0.5).abs() < 1e-15);
        assert!((rmse - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(goodness(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(goodness(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn classic_recovers_noiseless_power_law() {
        let samples: Vec<RdSample> = (0..10)
            .map(|i| {
                let bpp = 0.02 * (i + 1) as f64;
                RdSample { qp: 30 + i, bpp, mse: 2.0 / bpp }
            })
            .collect();
        let fit = fit_classic(&samples).unwrap();
        assert!((fit.params.c - 2.0).abs() < 1e-6);
        assert!((fit.params.k - 1.0).abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-6);
        assert!(fit.rmse < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let two = [
            RdSample { qp: 1, bpp: 0.1, mse: 3.0 },
            RdSample { qp: 2, bpp: 0.2, mse: 2.0 },
        ];
        assert!(matches!(fit_classic(&two), Err(Error::Degenerate(_))));
        let flat: Vec<RdSample> = (0..8)
            .map(|i| RdSample { qp: i, bpp: 0.1 * (i + 1) as f64, mse: 5.0 })
            .collect();
        assert!(matches!(fit_proposed(&flat), Err(Error::Degenerate(_))));
        assert!(matches!(fit_classic(&flat), Err(Error::Degenerate(_))));
        let same_bpp: Vec<RdSample> = (0..8)
            .map(|i| RdSample { qp: i, bpp: 0.1, mse: i as f64 + 1.0 })
            .collect();
        assert!(matches!(fit_classic(&same_bpp), Err(Error::Degenerate(_))));
    }

    #[test]
    fn proposed_recovers_reference_curve() {
        let gt = RdGroundTruth::new(3.0, 1.1, 0.02, 0.5).unwrap();
        let s = synth(&gt, 4..=51);
        let fit = fit_proposed(&s).unwrap();
        let p = fit.params;
        for (got, want) in [(p.c, 3.0), (p.k, 1.1), (p.b, 0.02), (p.t, 0.5)] {
            assert!((got / want - 1.0).abs() < 0.02, "{p:?}");
        }
        assert!(fit.r_squared >= 0.9999);
        let classic = fit_classic(&s).unwrap();
        assert!(classic.rmse > fit.rmse);
    }

    #[test]
    fn proposed_under_noise() {
        let gt = RdGroundTruth::new(3.0, 1.1, 0.02, 0.5).unwrap();
        let clean = synth(&gt, 14..=33);
        let mut pass = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noisy: Vec<RdSample> = clean
                .iter()
                .map(|s| {
                    let e: f64 = rng.sample(StandardNormal);
                    RdSample { mse: s.mse * (1.0 + 0.02 * e), ..*s }
                })
                .collect();
            if fit_proposed(&noisy).unwrap().r_squared >= 0.99 {
                pass += 1;
            }
        }
        assert!(pass >= 95, "{pass}/100");
    }

    #[test]
    fn scale_equivariance_in_c() {
        let gt = RdGroundTruth::new(3.0, 1.1, 0.02, 0.5).unwrap();
        let s = synth(&gt, 4..=51);
        let base = fit_proposed(&s).unwrap().params;
        let scaled: Vec<RdSample> = s.iter().map(|x| RdSample { mse: x.mse * 7.0, ..*x }).collect();
        let p = fit_proposed(&scaled).unwrap().params;
        assert!((p.c / (7.0 * base.c) - 1.0).abs() < 0.01);
        assert!((p.t / (7.0 * base.t) - 1.0).abs() < 0.01);
        assert!((p.k / base.k - 1.0).abs() < 0.01);
        assert!((p.b / base.b - 1.0).abs() < 0.01);
    }

    #[test]
    fn proposed_degrades_gracefully_on_classic_data() {
        let gt = RdGroundTruth::new(4.0, 1.0, 0.0, 0.0).unwrap();
        let s = synth(&gt, 4..=51);
        let p = fit_proposed(&s).unwrap().params;
        let mut bpp: Vec<f64> = s.iter().map(|x| x.bpp).collect();
        let mut mse: Vec<f64> = s.iter().map(|x| x.mse).collect();
        bpp.sort_by(f64::total_cmp);
        mse.sort_by(f64::total_cmp);
        assert!(p.b < 1e-3 * bpp[bpp.len() / 2], "{p:?}");
        assert!(p.t < 1e-3 * mse[mse.len() / 2], "{p:?}");
    }

    #[test]
    fn fits_are_deterministic() {
        let gt = RdGroundTruth::new(12.0, 0.95, 0.01, 0.2).unwrap();
        let s = synth(&gt, 4..=51);
        assert_eq!(fit_proposed(&s).unwrap(), fit_proposed(&s).unwrap());
        assert_eq!(fit_classic(&s).unwrap(), fit_classic(&s).unwrap());
    }

    #[test]
    fn report_ranges_and_markers() {
        assert_eq!(
            DEFAULT_RANGES.iter().map(|r| (r.lo, r.hi)).collect::<Vec<_>>(),
            vec![(4, 51), (4, 22), (17, 37), (32, 51)]
        );
        let gt = RdGroundTruth::new(3.0, 1.1, 0.02, 0.5).unwrap();
        let s = synth(&gt, 4..=51);
        let mut ranges = DEFAULT_RANGES.to_vec();
        ranges.push(QpRange::new(0, 3));
        let rep = fit_report(&s, &ranges);
        assert_eq!(rep.len(), 5);
        for r in &rep[..4] {
            let (c, p) = r.outcome.as_ref().unwrap();
            assert!(p.rmse <= c.rmse, "{}: {} vs {}", r.range, p.rmse, c.rmse);
        }
        assert_eq!(rep[4].outcome, Err("insufficient data".to_string()));
        let mut buf = Vec::new();
        write_report(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("range,model,C,K,B,T,r2,rmse,converged\n"));
        assert!(text.contains("0-3,classic,,,,,,,insufficient data"));
    }

    #[test]
    fn range_parsing() {
        assert_eq!("4-51".parse::<QpRange>().unwrap(), QpRange::new(4, 51));
        assert_eq!("17...37".parse::<QpRange>().unwrap(), QpRange::new(17, 37));
        assert!("9-3".parse::<QpRange>().is_err());
        assert!("x".parse::<QpRange>().is_err());
    }

    #[test]
    fn sample_csv_errors() {
        assert!(matches!(read_samples("".as_bytes()), Err(Error::Malformed { .. })));
        assert!(matches!(read_samples("1,0.1,3\n".as_bytes()), Err(Error::Malformed { line: 1, .. })));
        let bad = "qp,bpp,mse\n22,0.1,3\n27,abc,2\n";
        assert!(matches!(read_samples(bad.as_bytes()), Err(Error::Malformed { line: 3, .. })));
        let good = "qp,bpp,mse\n22,0.1,3\n27,0.05,6\n";
        assert_eq!(read_samples(good.as_bytes()).unwrap().len(), 2);
    }

    #[test]
    fn zero_distortion_tail_is_fit_exactly() {
        let gt = RdGroundTruth::new(1.1, 0.9, 0.005, 0.49).unwrap();
        let data = synth(&gt, 4..=51);
        assert!(data.iter().any(|s| s.mse == 0.0));
        let p = fit_proposed(&data).unwrap().params;
        assert_eq!(CurveParams { c: 1.0, k: 1.0, b: 0.0, t: 2.0 }.predict(1.0), 0.0);
        for (got, want) in [(p.c, gt.c), (p.k, gt.k), (p.b, gt.b), (p.t, gt.t)] {
            assert!((got - want).abs() <= 1e-4 * want, "{p:?}");
        }
    }
}
