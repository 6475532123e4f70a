use serde::{Deserialize, Serialize};

use super::{QuantError, QuantFlag};
use crate::volume::LabelMask;

/// Myocardial tissue density used for LV mass.
pub const MYOCARDIAL_DENSITY_G_PER_ML: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityVolume {
    pub ml: f64,
    pub voxels: usize,
    pub flags: Vec<QuantFlag>,
}

/// Voxel count times voxel volume, in mL. An absent label gives 0 mL with a
/// flag.
pub fn cavity_volume(mask: &LabelMask, label: u8) -> CavityVolume {
    let voxels = mask.count(label);
    CavityVolume {
        ml: voxels as f64 * mask.spacing().voxel_volume() / 1000.0,
        voxels,
        flags: if voxels == 0 { vec![QuantFlag::LabelAbsent] } else { vec![] },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub ed_phase: usize,
    pub es_phase: usize,
    pub volumes_by_phase: Vec<f64>,
    /// Volume constant across phases; ED/ES fall back to first/last.
    pub tie: bool,
}

/// ED = first maximum, ES = first minimum of a per-phase volume curve.
pub fn detect_ed_es_volumes(volumes: &[f64]) -> Result<PhasePair, QuantError> {
    if volumes.len() < 2 {
        return Err(QuantError::TooFewPhases {
            needed: 2,
            found: volumes.len(),
        });
    }
    let mut ed = 0;
    let mut es = 0;
    for (i, &v) in volumes.iter().enumerate() {
        if v > volumes[ed] {
            ed = i;
        }
        if v < volumes[es] {
            es = i;
        }
    }
    let tie = volumes[ed] == volumes[es];
    if tie {
        ed = 0;
        es = volumes.len() - 1;
    }
    Ok(PhasePair {
        ed_phase: ed,
        es_phase: es,
        volumes_by_phase: volumes.to_vec(),
        tie,
    })
}

pub fn detect_ed_es(masks: &[LabelMask], cavity_label: u8) -> Result<PhasePair, QuantError> {
    let volumes: Vec<f64> = masks.iter().map(|m| cavity_volume(m, cavity_label).ml).collect();
    detect_ed_es_volumes(&volumes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionParams {
    pub ef_percent: f64,
    pub sv_ml: f64,
    /// Present only when a heart rate was supplied.
    pub co_l_per_min: Option<f64>,
    pub flags: Vec<QuantFlag>,
}

/// SV, LVEF and (given a heart rate) CO. ESV above EDV is reported with a
/// negative EF and a flag, never clamped.
pub fn function_params(edv: f64, esv: f64, heart_rate_bpm: Option<f64>) -> Result<FunctionParams, QuantError> {
    if !(edv > 0.0) || !edv.is_finite() {
        return Err(QuantError::InvalidInput(format!("EDV must be positive, got {edv}")));
    }
    if !(esv >= 0.0) || !esv.is_finite() {
        return Err(QuantError::InvalidInput(format!("ESV must be non-negative, got {esv}")));
    }
    if let Some(hr) = heart_rate_bpm {
        if !(hr > 0.0) || !hr.is_finite() {
            return Err(QuantError::InvalidInput(format!("heart rate must be positive, got {hr}")));
        }
    }
    let sv = edv - esv;
    Ok(FunctionParams {
        ef_percent: 100.0 * (sv / edv),
        sv_ml: sv,
        co_l_per_min: heart_rate_bpm.map(|hr| sv * hr / 1000.0),
        flags: if sv < 0.0 { vec![QuantFlag::NegativeEf] } else { vec![] },
    })
}

/// Myocardial volume times density, in grams. Myocardium is every label the
/// schema counts as LV myocardium.
pub fn lv_mass(myo_mask: &LabelMask, density_g_per_ml: f64) -> Result<f64, QuantError> {
    if !(density_g_per_ml > 0.0) {
        return Err(QuantError::InvalidInput(format!("density must be positive, got {density_g_per_ml}")));
    }
    let labels = myo_mask.schema().myocardial_labels();
    let voxels: usize = labels.iter().map(|&l| myo_mask.count(l)).sum();
    if voxels == 0 {
        return Err(QuantError::MissingStructure("LV myocardium".into()));
    }
    Ok(voxels as f64 * myo_mask.spacing().voxel_volume() / 1000.0 * density_g_per_ml)
}
