//! Structured reports: assembly from artifacts, text rendering and rubric
//! scoring.

mod render;
mod rubric;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use render::{render_report, TEMPLATES};
pub use rubric::{quant_deduction, score_report, HallucinationGrade, ReferenceFindings, RubricScore, Subscores};

use crate::aha17::{segment_name, segment_ring, Bullseye17, Quantity, Ring};
use crate::backends::{DiagnosisResult, Stage};
use crate::quantify::{MeasurementSet, ParamName};
use crate::volume::SequenceKind;

pub type ArtifactId = String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no artifacts to report")]
    NoArtifacts,
    #[error("a report needs a measurement set")]
    MissingMeasurements,
    #[error("artifact `{0}` supplied twice")]
    DuplicateArtifact(ArtifactId),
    #[error("section `{0}` supplied twice")]
    DuplicateSection(String),
    #[error("bullseye does not fit its section: {0}")]
    InvalidBullseye(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("relative error must be non-negative, got {0}")]
    NegativeError(f64),
    #[error("malformed reference findings: {0}")]
    MalformedReference(String),
}

/// An artifact as the report sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportItem {
    Study {
        kind: SequenceKind,
        phases: usize,
        slices: usize,
        heart_rate_bpm: Option<f64>,
    },
    Measurements(MeasurementSet),
    WallThickness(Bullseye17),
    LgeBurden(Bullseye17),
    Diagnosis(DiagnosisResult),
    OtherFindings(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sourced<T> {
    pub artifact: ArtifactId,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub artifact: ArtifactId,
    pub kind: SequenceKind,
    pub phases: usize,
    pub slices: usize,
    pub heart_rate_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgeFindings {
    pub artifact: ArtifactId,
    pub bullseye: Bullseye17,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisSection {
    pub screening: Option<Sourced<DiagnosisResult>>,
    pub subtyping: Option<Sourced<DiagnosisResult>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSections {
    pub patient_context: Option<Vec<StudySummary>>,
    pub function_quantification: Option<Sourced<MeasurementSet>>,
    pub wall_assessment: Option<Sourced<Bullseye17>>,
    pub lge_findings: Option<LgeFindings>,
    pub diagnosis: Option<DiagnosisSection>,
    pub other_findings: Option<Sourced<Vec<String>>>,
    pub impression: String,
}

/// Itemised findings used by the rubric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Findings {
    pub wall: Vec<String>,
    pub lge: Vec<String>,
    pub other: Vec<String>,
    pub key_indicators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub sections: ReportSections,
    pub findings: Findings,
    /// Datum name → artifact it came from.
    pub provenance: BTreeMap<String, ArtifactId>,
}

impl StructuredReport {
    /// Final diagnosis: the subtype when present, else the screening class.
    pub fn diagnosis(&self) -> Option<&DiagnosisResult> {
        let d = self.sections.diagnosis.as_ref()?;
        d.subtyping.as_ref().or(d.screening.as_ref()).map(|s| &s.data)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Short segment label such as `basal AW` or `apex`.
pub fn segment_label(id: u8) -> String {
    match (segment_ring(id), segment_name(id)) {
        (Some(Ring::Apex), _) => "apex".into(),
        (Some(r), Some(n)) => format!("{} {n}", serde_json::to_value(r).unwrap().as_str().unwrap()),
        _ => format!("segment {id}"),
    }
}

pub const HYPERTROPHY_MM: f64 = 15.0;
pub const THINNING_MM: f64 = 6.0;

fn subtype_name(label: &str) -> &'static str {
    match label {
        "HCM" => "hypertrophic cardiomyopathy",
        "DCM" => "dilated cardiomyopathy",
        "RCM" => "restrictive cardiomyopathy",
        "ACM" => "arrhythmogenic cardiomyopathy",
        "Myocarditis" => "myocarditis",
        "NH" => "normal heart",
        "IHD" => "ischemic heart disease",
        "NICM" => "non-ischemic cardiomyopathy",
        _ => "unlisted class",
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, name: &str) -> Result<(), ReportError> {
    if slot.is_some() {
        return Err(ReportError::DuplicateSection(name.into()));
    }
    *slot = Some(value);
    Ok(())
}

/// Places each artifact in its section. Sections without an artifact stay
/// absent; two artifacts for one section are an error.
pub fn assemble_report(items: &[(ArtifactId, ReportItem)]) -> Result<StructuredReport, ReportError> {
    if items.is_empty() {
        return Err(ReportError::NoArtifacts);
    }
    let mut ids = BTreeSet::new();
    let mut s = ReportSections::default();
    let mut studies: Vec<StudySummary> = Vec::new();
    let mut dx = DiagnosisSection::default();
    let mut prov = BTreeMap::new();
    for (id, item) in items {
        if !ids.insert(id) {
            return Err(ReportError::DuplicateArtifact(id.clone()));
        }
        match item {
            ReportItem::Study {
                kind,
                phases,
                slices,
                heart_rate_bpm,
            } => {
                if studies.iter().any(|st| st.kind == *kind) {
                    return Err(ReportError::DuplicateSection(format!("study {kind}")));
                }
                prov.insert(format!("study.{kind}"), id.clone());
                studies.push(StudySummary {
                    artifact: id.clone(),
                    kind: *kind,
                    phases: *phases,
                    slices: *slices,
                    heart_rate_bpm: *heart_rate_bpm,
                });
            }
            ReportItem::Measurements(m) => {
                for (name, _) in m.iter() {
                    prov.insert(name.as_str().to_string(), id.clone());
                }
                set_once(&mut s.function_quantification, Sourced { artifact: id.clone(), data: m.clone() }, "function_quantification")?;
            }
            ReportItem::WallThickness(b) => {
                if b.quantity != Quantity::Lvedwt {
                    return Err(ReportError::InvalidBullseye("wall section needs a thickness bullseye".into()));
                }
                b.validate().map_err(|e| ReportError::InvalidBullseye(e.to_string()))?;
                prov.insert("wall_thickness".into(), id.clone());
                set_once(&mut s.wall_assessment, Sourced { artifact: id.clone(), data: b.clone() }, "wall_assessment")?;
            }
            ReportItem::LgeBurden(b) => {
                if b.quantity != Quantity::LgeBurden {
                    return Err(ReportError::InvalidBullseye("LGE section needs a burden bullseye".into()));
                }
                b.validate().map_err(|e| ReportError::InvalidBullseye(e.to_string()))?;
                prov.insert("lge_burden".into(), id.clone());
                let f = LgeFindings {
                    artifact: id.clone(),
                    text: lge_text(b),
                    bullseye: b.clone(),
                };
                set_once(&mut s.lge_findings, f, "lge_findings")?;
            }
            ReportItem::Diagnosis(d) => {
                let (slot, name) = match d.stage {
                    Stage::Screening => (&mut dx.screening, "diagnosis.screening"),
                    Stage::Subtyping => (&mut dx.subtyping, "diagnosis.subtyping"),
                };
                prov.insert(name.into(), id.clone());
                set_once(slot, Sourced { artifact: id.clone(), data: d.clone() }, name)?;
            }
            ReportItem::OtherFindings(v) => {
                prov.insert("other_findings".into(), id.clone());
                set_once(&mut s.other_findings, Sourced { artifact: id.clone(), data: v.clone() }, "other_findings")?;
            }
        }
    }
    if s.function_quantification.is_none() {
        return Err(ReportError::MissingMeasurements);
    }
    if !studies.is_empty() {
        studies.sort_by_key(|st| st.kind);
        s.patient_context = Some(studies);
    }
    if dx.screening.is_some() || dx.subtyping.is_some() {
        s.diagnosis = Some(dx);
    }
    let findings = findings(&s);
    s.impression = impression(&s, &findings);
    Ok(StructuredReport {
        sections: s,
        findings,
        provenance: prov,
    })
}

fn lge_text(b: &Bullseye17) -> String {
    let hit: Vec<String> = (1..=17u8).filter(|&i| b.get(i).is_some_and(|v| v > 0.0)).map(segment_label).collect();
    if hit.is_empty() {
        "No late gadolinium enhancement detected.".into()
    } else {
        format!("Late gadolinium enhancement in {}.", hit.join(", "))
    }
}

fn findings(s: &ReportSections) -> Findings {
    let mut f = Findings::default();
    if let Some(w) = &s.wall_assessment {
        for id in 1..=17u8 {
            match w.data.get(id) {
                Some(v) if v >= HYPERTROPHY_MM => f.wall.push(format!("hypertrophy {}", segment_label(id))),
                Some(v) if v < THINNING_MM && id < 17 => f.wall.push(format!("thinning {}", segment_label(id))),
                _ => {}
            }
        }
        if f.wall.is_empty() {
            f.wall.push("normal wall thickness".into());
        }
        f.key_indicators.push("wall thickness".into());
    }
    if let Some(l) = &s.lge_findings {
        for id in 1..=17u8 {
            if l.bullseye.get(id).is_some_and(|v| v > 0.0) {
                f.lge.push(format!("enhancement {}", segment_label(id)));
            }
        }
        if f.lge.is_empty() {
            f.lge.push("no enhancement".into());
        }
        f.key_indicators.push("LGE".into());
    }
    if let Some(m) = &s.function_quantification {
        if m.data.value(ParamName::Lvef).is_some_and(|v| v < 50.0) {
            f.other.push("reduced LVEF".into());
        }
        if m.data.value(ParamName::Lvedd).is_some_and(|v| v > 58.0) {
            f.other.push("LV dilation".into());
        }
        for (name, _) in m.data.iter() {
            f.key_indicators.push(name.as_str().into());
        }
    }
    if let Some(o) = &s.other_findings {
        f.other.extend(o.data.iter().cloned());
    }
    if s.diagnosis.is_some() {
        f.key_indicators.push("diagnosis".into());
    }
    f.key_indicators.push("impression".into());
    f
}

fn impression(s: &ReportSections, f: &Findings) -> String {
    let mut parts = Vec::new();
    match &s.diagnosis {
        Some(DiagnosisSection {
            subtyping: Some(sub), ..
        }) => parts.push(format!(
            "Findings are most consistent with {} ({}).",
            subtype_name(&sub.data.predicted),
            sub.data.predicted
        )),
        Some(DiagnosisSection {
            screening: Some(scr), ..
        }) => {
            parts.push(format!(
                "Screening classification: {} ({}).",
                subtype_name(&scr.data.predicted),
                scr.data.predicted
            ));
            if scr.data.predicted == "NICM" {
                parts.push("Cardiomyopathy subtyping was not performed.".into());
            }
        }
        _ => parts.push("No diagnostic classification was requested.".into()),
    }
    let abnormal: Vec<&str> = f
        .wall
        .iter()
        .chain(&f.lge)
        .chain(&f.other)
        .filter(|x| !matches!(x.as_str(), "normal wall thickness" | "no enhancement"))
        .map(String::as_str)
        .collect();
    if abnormal.is_empty() {
        parts.push("No structural abnormality identified.".into());
    } else {
        parts.push(format!("Notable: {}.", abnormal.join("; ")));
    }
    parts.join(" ")
}
