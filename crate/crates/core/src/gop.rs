//! Hierarchical GOP structures and per-level model initialization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelCoefficients;

/// Highest frame level used by any structure.
pub const MAX_LEVEL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    #[serde(rename = "RA")]
    RandomAccess,
    #[serde(rename = "LDP")]
    LowDelayP,
    #[serde(rename = "LDB")]
    LowDelayB,
}

impl StructureKind {
    pub const ALL: [StructureKind; 3] = [
        StructureKind::RandomAccess,
        StructureKind::LowDelayP,
        StructureKind::LowDelayB,
    ];

    pub fn is_low_delay(self) -> bool {
        !matches!(self, StructureKind::RandomAccess)
    }

    pub fn label(self) -> &'static str {
        match self {
            StructureKind::RandomAccess => "RA",
            StructureKind::LowDelayP => "LDP",
            StructureKind::LowDelayB => "LDB",
        }
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RA" => Ok(StructureKind::RandomAccess),
            "LDP" => Ok(StructureKind::LowDelayP),
            "LDB" => Ok(StructureKind::LowDelayB),
            other => Err(Error::Config(format!("unknown structure kind `{other}`"))),
        }
    }
}

/// One picture of a GOP, in coding order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSlot {
    /// 1-based position in coding order.
    pub decode_index: u32,
    /// Display offset within the GOP, 1-based.
    pub poc: u32,
    pub level: u8,
    pub ref_count: u8,
    pub qp_offset: i32,
    /// The structure's lambda multiplier.
    pub lambda_weight: f64,
    /// Temporal distance to the nearest reference, in frames.
    pub ref_distance: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GopStructure {
    pub kind: StructureKind,
    pub gop_length: usize,
    pub slots: Vec<FrameSlot>,
}

impl GopStructure {
    /// Levels used by inter frames of this structure.
    pub fn inter_levels(&self) -> Vec<u8> {
        let mut l: Vec<u8> = self.slots.iter().map(|s| s.level).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const fn slot(decode_index: u32, poc: u32, level: u8, ref_count: u8, qp_offset: i32, lambda_weight: f64, ref_distance: u32) -> FrameSlot {
    FrameSlot {
        decode_index,
        poc,
        level,
        ref_count,
        qp_offset,
        lambda_weight,
        ref_distance,
    }
}

const RA_SLOTS: [FrameSlot; 8] = [
    slot(1, 8, 1, 3, 1, 0.442, 8),
    slot(2, 4, 2, 3, 2, 0.3536, 4),
    slot(3, 2, 3, 4, 3, 0.3536, 2),
    slot(4, 1, 4, 4, 4, 0.68, 1),
    slot(5, 3, 4, 4, 4, 0.68, 1),
    slot(6, 6, 3, 3, 3, 0.3536, 2),
    slot(7, 5, 4, 4, 4, 0.68, 1),
    slot(8, 7, 4, 4, 4, 0.68, 1),
];

const LD_SLOTS: [FrameSlot; 4] = [
    slot(1, 1, 3, 4, 3, 0.4624, 1),
    slot(2, 2, 2, 4, 2, 0.4624, 1),
    slot(3, 3, 3, 4, 3, 0.4624, 1),
    slot(4, 4, 1, 4, 1, 0.578, 1),
];

/// The HEVC common-test-condition GOP for `kind`. LDP and LDB share a table.
pub fn build_structure(kind: StructureKind) -> GopStructure {
    let slots = match kind {
        StructureKind::RandomAccess => RA_SLOTS.to_vec(),
        StructureKind::LowDelayP | StructureKind::LowDelayB => LD_SLOTS.to_vec(),
    };
    GopStructure {
        kind,
        gop_length: slots.len(),
        slots,
    }
}

/// Relative coding efficiency of RA levels 1..4, from the fitted C values.
pub const RA_LEVEL_RATIOS: [f64; 4] = [4.2, 3.0, 2.0, 1.0];
/// Level-2 (center) alpha for RA.
pub const RA_CENTER_ALPHA: f64 = 4.4;
pub const INIT_GAMMA: f64 = 0.005;
pub const INIT_BETA: f64 = -1.35;
pub const LD_ALPHA: f64 = 2.4;
/// Initial gamma never exceeds this fraction of the target bpp.
pub const GAMMA_TARGET_FRACTION: f64 = 0.1;

/// Initial coefficients for every level, indexed by level (0..=4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInitTable {
    pub kind: StructureKind,
    pub target_bpp: f64,
    /// Index 0 is the intra level; it borrows level 1's coefficients.
    pub levels: Vec<ModelCoefficients>,
    /// Relative efficiency d per level, normalized to level 2.
    pub relative_efficiency: Vec<f64>,
}

impl LevelInitTable {
    pub fn coefficients(&self, level: u8) -> ModelCoefficients {
        self.levels[level as usize]
    }
}

/// Hierarchical initialization of `(alpha, beta, gamma)`.
pub fn init_coefficients(kind: StructureKind, target_bpp: f64) -> Result<LevelInitTable> {
    if !(target_bpp > 0.0 && target_bpp.is_finite()) {
        return Err(Error::Config(format!("target bpp must be positive, got {target_bpp}")));
    }
    let gamma_cap = GAMMA_TARGET_FRACTION * target_bpp;
    let ratio: Vec<f64> = RA_LEVEL_RATIOS.iter().map(|r| r / RA_LEVEL_RATIOS[1]).collect();
    let mut levels = Vec::with_capacity(MAX_LEVEL + 1);
    levels.push(ModelCoefficients::new(1.0, INIT_BETA, 0.0)?); // placeholder for level 0
    for l in 1..=MAX_LEVEL {
        let (alpha, gamma) = match kind {
            StructureKind::RandomAccess => (RA_CENTER_ALPHA * ratio[l - 1], INIT_GAMMA * ratio[l - 1]),
            _ => (LD_ALPHA, INIT_GAMMA),
        };
        levels.push(ModelCoefficients::new(alpha, INIT_BETA, gamma.min(gamma_cap))?);
    }
    levels[0] = levels[1];
    let mut relative_efficiency = vec![ratio[0]];
    relative_efficiency.extend_from_slice(&ratio);
    Ok(LevelInitTable {
        kind,
        target_bpp,
        levels,
        relative_efficiency,
    })
}

/// `C_j / C_i` for every pair of fitted per-level C values. Entry `[i][j]`.
pub fn level_efficiency_check(fitted_c: &[f64]) -> Result<Vec<Vec<f64>>> {
    if fitted_c.len() < 2 {
        return Err(Error::Degenerate("need C values for at least two levels".into()));
    }
    Ok(fitted_c
        .iter()
        .map(|ci| fitted_c.iter().map(|cj| cj / ci).collect())
        .collect())
}
