//! AHA 17-segment analysis of the LV myocardium on short-axis stacks.
//!
//! Angles follow [`angles`]: degrees in the visual frame, counterclockwise.
//! The ring frame starts at the anterior RV insertion and runs towards the
//! septum, which is the direction of the inferior insertion along the
//! shorter arc.

pub mod angles;
mod analysis;
mod bullseye;
mod labeling;
mod lge;
mod thickness;

use serde::{Deserialize, Serialize};

pub use analysis::{analyze_segments, SegmentAnalysis};
pub use bullseye::{BullseyeDocument, SegmentGeometry, BULLSEYE_PLOT_ANGLES};
pub use labeling::{assign_segments, locate_rv_insertions, AxisSplit, AxisThirds, InsertionSource, Insertions, RotationSense, SegmentLabeling};
pub use lge::{lge_burden, LgeBurden};
pub use thickness::{segment_wall_thickness, WallThickness};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AhaError {
    #[error("no RV-LV adjacency on mid slices and no landmark supplied")]
    NoInsertions,
    #[error("need at least 3 cavity-bearing slices, found {0}")]
    TooFewSlices(usize),
    #[error("mask has no myocardium")]
    EmptyMyocardium,
    #[error("mask does not match the labeling: {0}")]
    Mismatch(String),
    #[error("invalid bullseye: {0}")]
    InvalidBullseye(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ring {
    Basal,
    Mid,
    Apical,
    Apex,
}

/// Segment id, short wall name and ring, in id order.
pub const SEGMENTS: [(u8, &str, Ring); 17] = [
    (1, "AW", Ring::Basal),
    (2, "ASW", Ring::Basal),
    (3, "ISW", Ring::Basal),
    (4, "IW", Ring::Basal),
    (5, "ILW", Ring::Basal),
    (6, "ALW", Ring::Basal),
    (7, "AW", Ring::Mid),
    (8, "ASW", Ring::Mid),
    (9, "ISW", Ring::Mid),
    (10, "IW", Ring::Mid),
    (11, "ILW", Ring::Mid),
    (12, "ALW", Ring::Mid),
    (13, "AW", Ring::Apical),
    (14, "SW", Ring::Apical),
    (15, "IW", Ring::Apical),
    (16, "LW", Ring::Apical),
    (17, "APEX", Ring::Apex),
];

pub fn segment_name(id: u8) -> Option<&'static str> {
    SEGMENTS.get(usize::from(id).checked_sub(1)?).map(|s| s.1)
}

pub fn segment_ring(id: u8) -> Option<Ring> {
    SEGMENTS.get(usize::from(id).checked_sub(1)?).map(|s| s.2)
}

/// Sector of a ring offset `psi` (degrees from the anterior insertion
/// towards the septum). Counting boundaries keeps exact boundary angles in
/// the sector they open.
pub fn sector_of(ring: Ring, psi: f64) -> u8 {
    match ring {
        Ring::Basal | Ring::Mid => {
            // ASW, ISW, IW, ILW, ALW, AW from the anterior insertion on.
            const ORDER: [u8; 6] = [2, 3, 4, 5, 6, 1];
            let k = [60.0, 120.0, 180.0, 240.0, 300.0].iter().filter(|&&b| psi >= b).count();
            ORDER[k] + if ring == Ring::Mid { 6 } else { 0 }
        }
        Ring::Apical => match [15.0, 105.0, 195.0, 285.0].iter().filter(|&&b| psi >= b).count() {
            1 => 14,
            2 => 15,
            3 => 16,
            _ => 13,
        },
        Ring::Apex => 17,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Quantity {
    Lvedwt,
    LgeBurden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Max,
}

/// One value per segment; `values[i]` is segment `i + 1`. Thickness in mm,
/// LGE burden as a fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bullseye17 {
    pub quantity: Quantity,
    pub statistic: Statistic,
    pub orientation: String,
    pub values: Vec<Option<f64>>,
}

impl Bullseye17 {
    pub fn new(quantity: Quantity, statistic: Statistic, orientation: impl Into<String>, values: [Option<f64>; 17]) -> Self {
        Bullseye17 {
            quantity,
            statistic,
            orientation: orientation.into(),
            values: values.to_vec(),
        }
    }

    pub fn get(&self, id: u8) -> Option<f64> {
        self.values.get(usize::from(id).checked_sub(1)?).copied().flatten()
    }

    /// Checks the entry count and the value domain of the quantity.
    pub fn validate(&self) -> Result<(), AhaError> {
        if self.values.len() != 17 {
            return Err(AhaError::InvalidBullseye(format!("expected 17 entries, got {}", self.values.len())));
        }
        for (i, v) in self.values.iter().enumerate() {
            let Some(v) = v else { continue };
            let ok = match self.quantity {
                Quantity::Lvedwt => v.is_finite() && *v >= 0.0,
                Quantity::LgeBurden => (0.0..=1.0).contains(v),
            };
            if !ok {
                return Err(AhaError::InvalidBullseye(format!("segment {} value {v} out of range", i + 1)));
            }
        }
        Ok(())
    }

    /// Largest present value among the ring segments 1–16.
    pub fn max_wall(&self) -> Option<f64> {
        self.values[..16].iter().flatten().copied().reduce(f64::max)
    }

    pub fn export(&self) -> BullseyeDocument {
        BullseyeDocument::from_bullseye(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_widths_under_boundary_counting() {
        for (ring, widths) in [(Ring::Basal, 60), (Ring::Mid, 60), (Ring::Apical, 90)] {
            let mut hist = std::collections::BTreeMap::new();
            for tenth in 0..3600 {
                *hist.entry(sector_of(ring, tenth as f64 / 10.0)).or_insert(0) += 1;
            }
            assert!(hist.values().all(|&n| n == widths * 10), "{ring:?} {hist:?}");
        }
    }

    #[test]
    fn names_and_rings() {
        assert_eq!(segment_name(2), Some("ASW"));
        assert_eq!(segment_ring(14), Some(Ring::Apical));
        assert_eq!(segment_name(0), None);
        assert_eq!(sector_of(Ring::Basal, 330.0), 1);
        assert_eq!(sector_of(Ring::Mid, 0.0), 8);
        assert_eq!(sector_of(Ring::Apical, 10.0), 13);
        assert_eq!(sector_of(Ring::Apical, 60.0), 14);
    }

    #[test]
    fn burden_domain_is_checked() {
        let mut v = [Some(0.0); 17];
        v[3] = Some(1.2);
        assert!(Bullseye17::new(Quantity::LgeBurden, Statistic::Mean, "ccw", v).validate().is_err());
        v[3] = Some(1.0);
        v[16] = None;
        assert!(Bullseye17::new(Quantity::LgeBurden, Statistic::Mean, "ccw", v).validate().is_ok());
    }
}
