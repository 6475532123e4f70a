use serde::{Deserialize, Serialize};

use super::{AhaError, Bullseye17, Quantity, SegmentLabeling, Statistic};
use crate::volume::{LabelMask, Structure};

/// LGE burden per segment with the underlying voxel counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgeBurden {
    /// Fraction of enhanced myocardium per segment; absent for segments
    /// without myocardium.
    pub bullseye: Bullseye17,
    pub lge_voxels: [usize; 17],
    pub myocardial_voxels: [usize; 17],
    pub lge_volume_ml: f64,
}

impl LgeBurden {
    pub fn total_lge_voxels(&self) -> usize {
        self.lge_voxels.iter().sum()
    }
}

/// Fraction of LGE voxels among the myocardial (myocardium or LGE) voxels
/// of each segment. The labeling must come from the same frame.
pub fn lge_burden(lge_mask: &LabelMask, labeling: &SegmentLabeling) -> Result<LgeBurden, AhaError> {
    if lge_mask.dims() != labeling.dims() {
        return Err(AhaError::Mismatch(format!("mask dims {:?} vs labeling {:?}", lge_mask.dims(), labeling.dims())));
    }
    let lge = lge_mask
        .label_of(Structure::Lge)
        .ok_or_else(|| AhaError::Mismatch(format!("{} masks carry no LGE label", lge_mask.kind())))?;
    let myo = lge_mask.schema().myocardial_labels();
    let mut lge_n = [0usize; 17];
    let mut myo_n = [0usize; 17];
    for (l, &seg) in lge_mask.labels().iter().zip(labeling.segments.iter()) {
        let is_myo = myo.contains(l);
        if is_myo != (seg > 0) {
            return Err(AhaError::Mismatch("labeling was computed on a different myocardium".into()));
        }
        if is_myo {
            let i = usize::from(seg) - 1;
            myo_n[i] += 1;
            if *l == lge {
                lge_n[i] += 1;
            }
        }
    }
    let mut values = [None; 17];
    for i in 0..17 {
        if myo_n[i] > 0 {
            values[i] = Some(lge_n[i] as f64 / myo_n[i] as f64);
        }
    }
    let total: usize = lge_n.iter().sum();
    Ok(LgeBurden {
        bullseye: Bullseye17::new(Quantity::LgeBurden, Statistic::Mean, labeling.orientation.clone(), values),
        lge_voxels: lge_n,
        myocardial_voxels: myo_n,
        lge_volume_ml: total as f64 * lge_mask.spacing().voxel_volume() / 1000.0,
    })
}
