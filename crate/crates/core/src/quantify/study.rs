use super::geometry::{apex_thickness, atrial_diameters, lvedd, rvedd};
use super::volumes::{cavity_volume, detect_ed_es, function_params, lv_mass, MYOCARDIAL_DENSITY_G_PER_ML};
use super::{MeasurementSet, ParamName, PhaseTag, QuantError, QuantFlag, Source};
use crate::volume::{LabelMask, Structure};

/// Per-phase segmentation masks of one study.
#[derive(Debug, Clone)]
pub struct StudyMasks {
    pub sax: Vec<LabelMask>,
    pub ch4: Vec<LabelMask>,
    pub heart_rate_bpm: Option<f64>,
    pub density_g_per_ml: f64,
}

impl Default for StudyMasks {
    fn default() -> Self {
        StudyMasks {
            sax: Vec::new(),
            ch4: Vec::new(),
            heart_rate_bpm: None,
            density_g_per_ml: MYOCARDIAL_DENSITY_G_PER_ML,
        }
    }
}

fn cavity_label(m: &LabelMask) -> Result<u8, QuantError> {
    m.label_of(Structure::LvCavity)
        .ok_or_else(|| QuantError::MissingStructure("LV cavity".into()))
}

/// Every parameter computable from the given masks. Parameters whose inputs
/// are missing are left out rather than estimated.
pub fn quantify_study(study: &StudyMasks) -> Result<MeasurementSet, QuantError> {
    if study.sax.is_empty() && study.ch4.is_empty() {
        return Err(QuantError::InvalidInput("no SAX or 4CH masks supplied".into()));
    }
    let mut out = MeasurementSet::new();
    if let Some(first) = study.sax.first() {
        let cav = cavity_label(first)?;
        let (ed, es, mut flags) = if study.sax.len() >= 2 {
            let pp = detect_ed_es(&study.sax, cav)?;
            let flags = if pp.tie { vec![QuantFlag::EdEsTie] } else { vec![] };
            (pp.ed_phase, Some(pp.es_phase), flags)
        } else {
            (0, None, vec![])
        };
        let ed_mask = &study.sax[ed];
        let edv = cavity_volume(ed_mask, cav);
        if edv.voxels == 0 {
            return Err(QuantError::MissingStructure("LV cavity".into()));
        }
        out.insert(ParamName::Lvedv, edv.ml, Source::Sax, PhaseTag::Ed, flags.clone());
        if let Some(es) = es {
            let esv = cavity_volume(&study.sax[es], cav).ml;
            out.insert(ParamName::Lvesv, esv, Source::Sax, PhaseTag::Es, flags.clone());
            let f = function_params(edv.ml, esv, study.heart_rate_bpm)?;
            flags.extend(f.flags.iter().copied());
            out.insert(ParamName::Lvef, f.ef_percent, Source::Sax, PhaseTag::Static, flags.clone());
            out.insert(ParamName::Sv, f.sv_ml, Source::Sax, PhaseTag::Static, flags.clone());
            if let Some(co) = f.co_l_per_min {
                out.insert(ParamName::Co, co, Source::Sax, PhaseTag::Static, flags.clone());
            }
        }
        if let Ok(g) = lv_mass(ed_mask, study.density_g_per_ml) {
            out.insert(ParamName::Lvm, g, Source::Sax, PhaseTag::Ed, vec![]);
        }
        let d = lvedd(ed_mask)?;
        out.insert(ParamName::Lvedd, d.mm, Source::Sax, PhaseTag::Ed, d.flags);
        if let Ok(d) = rvedd(ed_mask) {
            out.insert(ParamName::Rvedd, d.mm, Source::Sax, PhaseTag::Ed, d.flags);
        }
    }
    if let Some(first) = study.ch4.first() {
        let cav = cavity_label(first)?;
        let (ed, es, ed_tag, es_tag) = if study.ch4.len() >= 2 {
            let pp = detect_ed_es(&study.ch4, cav)?;
            (pp.ed_phase, pp.es_phase, PhaseTag::Ed, PhaseTag::Es)
        } else {
            (0, 0, PhaseTag::Static, PhaseTag::Static)
        };
        if let Ok(a) = apex_thickness(&study.ch4[ed]) {
            out.insert(ParamName::ApexThickness, a.mm, Source::Ch4, ed_tag, a.flags);
        }
        // Atria are largest at ventricular end-systole.
        let atria = atrial_diameters(&study.ch4[es]);
        if let Some(d) = atria.la {
            out.insert(ParamName::Lat4chd, d.mm, Source::Ch4, es_tag, d.flags);
        }
        if let Some(d) = atria.ra {
            out.insert(ParamName::Rat4chd, d.mm, Source::Ch4, es_tag, d.flags);
        }
    }
    Ok(out)
}
