use serde::{Deserialize, Serialize};

use super::{assign_segments, lge_burden, locate_rv_insertions, segment_wall_thickness, AhaError, AxisSplit, InsertionSource, Insertions, LgeBurden, SegmentLabeling, WallThickness};
use crate::volume::LabelMask;

/// Wall thickness of an end-diastolic SAX mask and, optionally, LGE burden
/// of an LGE mask labelled with the cine's insertion points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnalysis {
    pub insertions: Insertions,
    pub thickness: WallThickness,
    pub lge: Option<LgeBurden>,
}

pub fn analyze_segments(ed_mask: &LabelMask, lge_mask: Option<&LabelMask>, landmark_deg: Option<f64>) -> Result<SegmentAnalysis, AhaError> {
    let insertions = locate_rv_insertions(ed_mask, landmark_deg)?;
    let labeling = assign_segments(ed_mask, &insertions, AxisSplit::Auto)?;
    let thickness = segment_wall_thickness(&labeling, ed_mask)?;
    let lge = lge_mask.map(|m| lge_on_cine_frame(m, &labeling)).transpose()?;
    Ok(SegmentAnalysis { insertions, thickness, lge })
}

/// LGE stacks carry no RV label; reuse the cine's insertion angles.
fn lge_on_cine_frame(lge_mask: &LabelMask, cine: &SegmentLabeling) -> Result<LgeBurden, AhaError> {
    let ins = Insertions {
        anterior_deg: cine.anterior_deg,
        inferior_deg: cine.inferior_deg,
        source: InsertionSource::Landmark,
    };
    let labeling = assign_segments(lge_mask, &ins, AxisSplit::Auto)?;
    lge_burden(lge_mask, &labeling)
}
