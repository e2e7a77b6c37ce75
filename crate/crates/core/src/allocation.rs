//! GOP and picture level bit allocation.
//!
//! All rates here are bits per pixel of one frame. A GOP budget is the
//! average target minus the current I-frame amortization share and a
//! smooth-window share of the outstanding non-I overflow. The budget is then
//! split over the GOP's pictures by searching the central lambda whose
//! weighted per-picture rates add up to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gop::StructureKind;
use crate::model::ModelCoefficients;

/// Smallest number of bits a frame may be allocated.
pub const MIN_RATE_BITS: f64 = 100.0;
pub const DEFAULT_SMOOTH_WINDOW: usize = 40;
/// Default ratio between an I frame's refined target and its inter estimate.
pub const DEFAULT_INTRA_KAPPA: f64 = 4.0;

const LAMBDA_SEARCH_LO: f64 = 1e-4;
const LAMBDA_SEARCH_HI: f64 = 1e6;
const LAMBDA_SEARCH_ITERS: usize = 100;

/// Central-lambda multiplier for a frame level.
pub fn default_omega(kind: StructureKind, level: u8) -> f64 {
    const RA: [f64; 5] = [1.0, 1.0, 2.5, 4.5, 10.0];
    const LD: [f64; 5] = [1.0, 1.0, 4.0, 5.0, 5.0];
    let table = if kind.is_low_delay() { &LD } else { &RA };
    table[(level as usize).min(4)]
}

/// Rate bookkeeping shared by consecutive GOPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocatorState {
    /// Per-frame amortized I overhead of the active intra period.
    pub r_am: f64,
    /// Outstanding non-I overflow, bpp summed over frames.
    pub r_of: f64,
    /// Non-I frames of the active intra period not yet coded.
    pub frames_left_in_intra_period: usize,
    pub smooth_window: usize,
    pub intra_period: usize,
    /// Sequence-level average target per frame.
    pub r_avg: f64,
    /// I-frame overhead being amortized in the active period.
    pub amortization_overhead: f64,
    /// Amortization already deducted from GOP budgets in the active period.
    pub amortization_charged: f64,
    uncharged_frames: usize,
}

impl AllocatorState {
    pub fn new(r_avg: f64, intra_period: usize, smooth_window: usize) -> Result<Self> {
        if !(r_avg > 0.0 && r_avg.is_finite()) {
            return Err(Error::Config(format!("average target must be positive, got {r_avg}")));
        }
        if intra_period < 1 || smooth_window < 1 {
            return Err(Error::Config("intra period and smooth window must be at least 1".into()));
        }
        Ok(AllocatorState {
            r_am: 0.0,
            r_of: 0.0,
            frames_left_in_intra_period: 0,
            smooth_window,
            intra_period,
            r_avg,
            amortization_overhead: 0.0,
            amortization_charged: 0.0,
            uncharged_frames: 0,
        })
    }

    /// `(R_avg - R_am - R_of / SW) * N_GOP`, unclamped.
    pub fn gop_budget(&self, n_gop: usize) -> f64 {
        (self.r_avg - self.r_am - self.r_of / self.smooth_window as f64) * n_gop as f64
    }

    /// Opens a GOP of `n_gop` frames, `n_inter` of which are non-I.
    ///
    /// Only frames inside the active amortization span pay `R_am`, so the
    /// deductions over an intra period add up to its overhead exactly. The
    /// smooth-window share of the overflow is removed from the outstanding
    /// amount once it has been scheduled. The result is floored at
    /// `n_gop * min_rate`.
    pub fn open_gop(&mut self, n_gop: usize, n_inter: usize, min_rate: f64) -> f64 {
        let charged = self.charge_amortization(n_inter);
        let repay = self.r_of * (n_gop as f64 / self.smooth_window as f64).min(1.0);
        self.r_of -= repay;
        let raw = self.r_avg * n_gop as f64 - charged - repay;
        raw.max(n_gop as f64 * min_rate)
    }

    /// Deducts the amortization share of up to `n_frames` non-I frames and
    /// returns the amount.
    pub fn charge_amortization(&mut self, n_frames: usize) -> f64 {
        let k = n_frames.min(self.uncharged_frames);
        self.uncharged_frames -= k;
        let amount = self.r_am * k as f64;
        self.amortization_charged += amount;
        amount
    }

    /// Starts amortizing an I frame's overhead over the other
    /// `period_len - 1` frames of its intra period.
    pub fn amortize_intra(&mut self, r_i0: f64, r_i2: f64, period_len: usize) -> Result<()> {
        let overhead = r_i2 - r_i0;
        if period_len < 2 {
            if overhead != 0.0 {
                return Err(Error::Domain(format!(
                    "cannot amortize overhead {overhead} over an intra period of {period_len}"
                )));
            }
            self.r_am = 0.0;
            self.frames_left_in_intra_period = 0;
            self.uncharged_frames = 0;
            self.amortization_overhead = 0.0;
            self.amortization_charged = 0.0;
            return Ok(());
        }
        self.r_am = overhead / (period_len - 1) as f64;
        self.frames_left_in_intra_period = period_len - 1;
        self.uncharged_frames = period_len - 1;
        self.amortization_overhead = overhead;
        self.amortization_charged = 0.0;
        Ok(())
    }

    /// Books a coded frame. Only non-I frames feed the overflow; an I
    /// frame's recorded rate is its pre-refinement target.
    pub fn record_frame(&mut self, r_i0: f64, r_actual: f64, is_intra: bool) {
        if is_intra {
            return;
        }
        self.r_of += r_actual - r_i0;
        if self.frames_left_in_intra_period > 0 {
            self.frames_left_in_intra_period -= 1;
            if self.frames_left_in_intra_period == 0 {
                self.r_am = 0.0;
            }
        }
    }

    /// Refined I-frame target: `min(kappa * estimate, IntraPeriod * R_avg / 2)`.
    pub fn intra_target(&self, p_frame_estimate: f64, kappa: f64) -> f64 {
        (kappa * p_frame_estimate).min(0.5 * self.intra_period as f64 * self.r_avg)
    }
}

/// A picture taking part in central-lambda allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocFrame {
    pub coeffs: ModelCoefficients,
    pub omega: f64,
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBudget {
    pub target_bpp: f64,
    pub lambda_weight: f64,
    pub level: u8,
    pub min_rate_bpp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub budgets: Vec<FrameBudget>,
    pub central_lambda: f64,
    /// Set when no lambda in the search bracket meets the budget.
    pub best_achievable: bool,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.budgets.iter().map(|b| b.target_bpp).sum()
    }
}

fn frame_rate_at(f: &AllocFrame, lambda: f64, min_rate: f64) -> f64 {
    f.coeffs.bpp_from_lambda(lambda * f.omega).max(min_rate)
}

/// Sum of floored per-picture rates at a central lambda.
pub fn total_rate_at(frames: &[AllocFrame], lambda: f64, min_rate: f64) -> f64 {
    frames.iter().map(|f| frame_rate_at(f, lambda, min_rate)).sum()
}

/// Finds the central lambda whose weighted rates sum to `r_gop` by bisection
/// in log-lambda over `[1e-4, 1e6]`.
pub fn allocate_pictures(frames: &[AllocFrame], r_gop: f64, min_rate: f64) -> Allocation {
    let build = |lambda: f64, best_achievable: bool| Allocation {
        budgets: frames
            .iter()
            .map(|f| FrameBudget {
                target_bpp: frame_rate_at(f, lambda, min_rate),
                lambda_weight: f.omega,
                level: f.level,
                min_rate_bpp: min_rate,
            })
            .collect(),
        central_lambda: lambda,
        best_achievable,
    };
    if frames.is_empty() {
        return build(LAMBDA_SEARCH_LO, false);
    }
    let floor = frames.len() as f64 * min_rate;
    if r_gop <= floor {
        return build(LAMBDA_SEARCH_HI, true);
    }
    let (mut lo, mut hi) = (LAMBDA_SEARCH_LO.ln(), LAMBDA_SEARCH_HI.ln());
    if total_rate_at(frames, lo.exp(), min_rate) <= r_gop {
        return build(lo.exp(), true);
    }
    if total_rate_at(frames, hi.exp(), min_rate) >= r_gop {
        return build(hi.exp(), true);
    }
    for _ in 0..LAMBDA_SEARCH_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_rate_at(frames, mid.exp(), min_rate) > r_gop {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l_lo = lo.exp();
    let l_hi = hi.exp();
    let lambda = if (total_rate_at(frames, l_lo, min_rate) - r_gop).abs()
        <= (total_rate_at(frames, l_hi, min_rate) - r_gop).abs()
    {
        l_lo
    } else {
        l_hi
    };
    build(lambda, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn center() -> ModelCoefficients {
        ModelCoefficients::new(4.4, -1.35, 0.005).unwrap()
    }

    #[test]
    fn gop_budget_formula() {
        let mut s = AllocatorState::new(0.1, 32, 40).unwrap();
        assert_relative_eq!(s.gop_budget(8), 0.8, max_relative = 1e-12);
        s.r_am = 0.01;
        s.r_of = 0.4;
        assert_relative_eq!(s.gop_budget(8), 0.64, max_relative = 1e-12);
        s.r_of = 400.0;
        assert!(s.gop_budget(8) < 0.0);
        let floor = 8.0 * 1e-4;
        assert_eq!(s.open_gop(8, 8, 1e-4), floor);
    }

    #[test]
    fn open_gop_schedules_repayment() {
        let mut s = AllocatorState::new(0.1, 32, 40).unwrap();
        s.r_of = 0.4;
        let b = s.open_gop(8, 8, 0.0);
        assert_relative_eq!(b, 0.8 - 0.08, max_relative = 1e-12);
        assert_relative_eq!(s.r_of, 0.32, max_relative = 1e-12);
    }

    #[test]
    fn amortization_examples() {
        let mut s = AllocatorState::new(0.1, 33, 40).unwrap();
        s.amortize_intra(0.04, 0.36, 33).unwrap();
        assert_relative_eq!(s.r_am, 0.01, max_relative = 1e-12);
        assert_relative_eq!(s.r_am * 32.0, 0.36 - 0.04, max_relative = 1e-12);
        s.amortize_intra(0.05, 0.05, 33).unwrap();
        assert_eq!(s.r_am, 0.0);
        assert!(s.amortize_intra(0.04, 0.36, 1).is_err());
        assert!(s.amortize_intra(0.04, 0.04, 1).is_ok());
    }

    #[test]
    fn amortization_charges_sum_to_overhead() {
        let mut s = AllocatorState::new(0.1, 32, 40).unwrap();
        s.amortize_intra(0.1, 0.43, 25).unwrap();
        let mut total = 0.0;
        for _ in 0..3 {
            total += s.charge_amortization(8);
            for _ in 0..8 {
                s.record_frame(0.1, 0.1, false);
            }
        }
        total += s.charge_amortization(8);
        assert!((total - 0.33).abs() < 1e-12);
        assert_eq!(s.frames_left_in_intra_period, 0);
        assert_eq!(s.r_am, 0.0);
    }

    #[test]
    fn record_frame_overflow() {
        let mut s = AllocatorState::new(0.1, 32, 40).unwrap();
        s.record_frame(0.1, 0.1, false);
        assert_eq!(s.r_of, 0.0);
        s.record_frame(0.1, 0.12, false);
        s.record_frame(0.1, 0.12, false);
        assert_relative_eq!(s.r_of, 0.04, max_relative = 1e-9);
        s.record_frame(0.1, 5.0, true);
        assert_relative_eq!(s.r_of, 0.04, max_relative = 1e-9);
    }

    #[test]
    fn intra_target_examples() {
        let s = AllocatorState::new(0.1, 32, 40).unwrap();
        assert_relative_eq!(s.intra_target(0.04, 4.0), 0.16, max_relative = 1e-12);
        assert_relative_eq!(s.intra_target(1.0, 4.0), 1.6, max_relative = 1e-12);
        assert_eq!(s.intra_target(0.04, 1.0), 0.04);
    }

    #[test]
    fn single_frame_allocation() {
        let f = [AllocFrame { coeffs: center(), omega: 1.0, level: 1 }];
        let a = allocate_pictures(&f, 0.1, 1e-5);
        assert!(!a.best_achievable);
        assert!((a.central_lambda - 92.224_672_726_768_32).abs() / 92.22 < 1e-6);
        assert!((a.budgets[0].target_bpp - 0.1).abs() <= 1e-6);
    }

    #[test]
    fn symmetric_frames_split_evenly() {
        let f = [AllocFrame { coeffs: center(), omega: 2.0, level: 2 }; 2];
        let a = allocate_pictures(&f, 0.3, 1e-5);
        assert_relative_eq!(a.budgets[0].target_bpp, a.budgets[1].target_bpp, max_relative = 1e-12);
        assert!((a.budgets[0].target_bpp - 0.15).abs() <= 1e-6);
    }

    #[test]
    fn shortfall_pins_to_min_rate() {
        let f = [AllocFrame { coeffs: center(), omega: 1.0, level: 1 }; 2];
        let a = allocate_pictures(&f, 1e-5, 1e-4);
        assert!(a.best_achievable);
        assert!(a.budgets.iter().all(|b| b.target_bpp == 1e-4));
    }

    #[test]
    fn omega_defaults() {
        let ra: Vec<f64> = (1..=4).map(|l| default_omega(StructureKind::RandomAccess, l)).collect();
        assert_eq!(ra, vec![1.0, 2.5, 4.5, 10.0]);
        let ld: Vec<f64> = (1..=3).map(|l| default_omega(StructureKind::LowDelayP, l)).collect();
        assert_eq!(ld, vec![1.0, 4.0, 5.0]);
    }

    fn ra_frames(scale: f64) -> Vec<AllocFrame> {
        let t = crate::gop::init_coefficients(StructureKind::RandomAccess, 0.1).unwrap();
        crate::gop::build_structure(StructureKind::RandomAccess)
            .slots
            .iter()
            .map(|s| AllocFrame {
                coeffs: t.levels[s.level as usize],
                omega: scale * default_omega(StructureKind::RandomAccess, s.level),
                level: s.level,
            })
            .collect()
    }

    proptest! {
        #[test]
        fn total_rate_non_increasing(l in 1e-3f64..1e4, f in 1.0f64..10.0) {
            let frames = ra_frames(1.0);
            prop_assert!(total_rate_at(&frames, l * f, 1e-4) <= total_rate_at(&frames, l, 1e-4));
        }

        #[test]
        fn omega_scale_invariance(s in 0.1f64..10.0, r_gop in 0.05f64..4.0) {
            let a = allocate_pictures(&ra_frames(1.0), r_gop, 1e-4);
            let b = allocate_pictures(&ra_frames(s), r_gop, 1e-4);
            for (x, y) in a.budgets.iter().zip(&b.budgets) {
                prop_assert!((x.target_bpp - y.target_bpp).abs() <= 1e-9 * (1.0 + x.target_bpp));
            }
        }

        #[test]
        fn allocation_meets_budget(r_gop in 0.01f64..8.0) {
            let a = allocate_pictures(&ra_frames(1.0), r_gop, 1e-4);
            if !a.best_achievable {
                prop_assert!((a.total() - r_gop).abs() <= (1e-4 * r_gop).max(1e-6));
            }
            prop_assert!(a.budgets.iter().all(|b| b.target_bpp >= 1e-4));
        }
    }
}
