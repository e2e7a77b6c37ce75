//! Rate accuracy, PSNR and BD-rate.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PSNR_PEAK: f64 = 255.0;
pub const PSNR_CAP_DB: f64 = 100.0;
pub const RD_HEADER: [&str; 2] = ["bitrate", "psnr_db"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bitrate: f64,
    pub psnr_db: f64,
}

/// `|r_out - r_target| / r_target * 100`.
pub fn delta_r(r_out: f64, r_target: f64) -> Result<f64> {
    if !(r_target > 0.0) {
        return Err(Error::Domain(format!("target rate must be positive, got {r_target}")));
    }
    Ok((r_out - r_target).abs() / r_target * 100.0)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    psnr_from_mse_capped(mse, PSNR_CAP_DB)
}

pub fn psnr_from_mse_capped(mse: f64, cap: f64) -> f64 {
    if mse <= 0.0 {
        return cap;
    }
    (10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10()).min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BdInterp {
    /// Least-squares cubic of log10 rate against PSNR.
    #[default]
    Cubic,
    /// Piecewise cubic Hermite through the points.
    Pchip,
}

/// log10(rate) curve over PSNR, shifted by `x0` for conditioning.
enum LogRateCurve {
    Poly { coef: [f64; 4], x0: f64 },
    Pchip { x: Vec<f64>, y: Vec<f64>, d: Vec<f64> },
}

impl LogRateCurve {
    fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            LogRateCurve::Poly { coef, x0 } => {
                let prim = |x: f64| {
                    let t = x - x0;
                    t * (coef[0] + t * (coef[1] / 2.0 + t * (coef[2] / 3.0 + t * coef[3] / 4.0)))
                };
                prim(b) - prim(a)
            }
            LogRateCurve::Pchip { x, y, d } => {
                let mut total = 0.0;
                for i in 0..x.len() - 1 {
                    let (lo, hi) = (x[i].max(a), x[i + 1].min(b));
                    if hi <= lo {
                        continue;
                    }
                    let eval = |t: f64| hermite(x[i], x[i + 1], y[i], y[i + 1], d[i], d[i + 1], t);
                    // Simpson's rule is exact on a cubic.
                    let mid = 0.5 * (lo + hi);
                    total += (hi - lo) / 6.0 * (eval(lo) + 4.0 * eval(mid) + eval(hi));
                }
                total
            }
        }
    }
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = x1 - x0;
    let s = (t - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

/// Fritsch-Carlson monotone slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
        let v = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if v.signum() != m0.signum() {
            0.0
        } else if m0.signum() != m1.signum() && v.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            v
        }
    };
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
    } else {
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    d
}

fn prepare(points: &[RdPoint], name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "{name} curve needs at least 4 points, got {}",
            points.len()
        )));
    }
    let mut pts = points.to_vec();
    for p in &pts {
        if !(p.bitrate > 0.0 && p.bitrate.is_finite() && p.psnr_db.is_finite()) {
            return Err(Error::Domain(format!("invalid {name} point {p:?}")));
        }
    }
    pts.sort_by(|a, b| a.psnr_db.total_cmp(&b.psnr_db));
    if pts.windows(2).any(|w| w[0].psnr_db == w[1].psnr_db) {
        return Err(Error::Degenerate(format!("{name} curve has repeated PSNR values")));
    }
    Ok((
        pts.iter().map(|p| p.psnr_db).collect(),
        pts.iter().map(|p| p.bitrate.log10()).collect(),
    ))
}

fn fit_curve(x: &[f64], y: &[f64], interp: BdInterp, x0: f64) -> Result<LogRateCurve> {
    match interp {
        BdInterp::Cubic => {
            let a = DMatrix::from_fn(x.len(), 4, |r, c| (x[r] - x0).powi(c as i32));
            let b = DVector::from_column_slice(y);
            let sol = a
                .svd(true, true)
                .solve(&b, 1e-12)
                .map_err(|e| Error::Degenerate(format!("cubic fit failed: {e}")))?;
            Ok(LogRateCurve::Poly {
                coef: [sol[0], sol[1], sol[2], sol[3]],
                x0,
            })
        }
        BdInterp::Pchip => Ok(LogRateCurve::Pchip {
            x: x.to_vec(),
            y: y.to_vec(),
            d: pchip_slopes(x, y),
        }),
    }
}

/// Average bitrate difference of `test` against `anchor` at equal PSNR, in
/// percent. Negative means the test curve saves bits.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    bd_rate_with(anchor, test, BdInterp::Cubic)
}

pub fn bd_rate_with(anchor: &[RdPoint], test: &[RdPoint], interp: BdInterp) -> Result<f64> {
    let (xa, ya) = prepare(anchor, "anchor")?;
    let (xt, yt) = prepare(test, "test")?;
    let lo = xa[0].max(xt[0]);
    let hi = xa[xa.len() - 1].min(xt[xt.len() - 1]);
    if !(hi > lo) {
        return Err(Error::Domain(format!("PSNR ranges do not overlap ({lo} >= {hi})")));
    }
    let x0 = 0.5 * (lo + hi);
    let ca = fit_curve(&xa, &ya, interp, x0)?;
    let ct = fit_curve(&xt, &yt, interp, x0)?;
    let avg = (ct.integral(lo, hi) - ca.integral(lo, hi)) / (hi - lo);
    Ok(100.0 * (10f64.powf(avg) - 1.0))
}

pub fn write_rd_points<W: Write>(points: &[RdPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(RD_HEADER).map_err(csv_err)?;
    for p in points {
        w.write_record([p.bitrate.to_string(), p.psnr_db.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `bitrate,psnr_db` rows with a header.
pub fn read_rd_points<R: Read>(reader: R) -> Result<Vec<RdPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != RD_HEADER {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header {:?}, got {:?}", RD_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Malformed {
            line,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| Error::Malformed {
                    line,
                    message: format!("missing column {}", RD_HEADER[k]),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Malformed {
                    line,
                    message: format!("{}: {e}", RD_HEADER[k]),
                })
        };
        let p = RdPoint {
            bitrate: field(0)?,
            psnr_db: field(1)?,
        };
        if !(p.bitrate > 0.0) {
            return Err(Error::Malformed {
                line,
                message: format!("bitrate must be positive, got {}", p.bitrate),
            });
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Malformed {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}
