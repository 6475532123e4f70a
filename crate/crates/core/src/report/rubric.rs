//! 100-point report rubric.
//!
//! Clinical accuracy (70): diagnosis 20, quantification 15, wall 10, LGE 15,
//! other features 10. Technical quality: completeness 30. A hallucination
//! penalty of up to 10 points comes off the sum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ReportError, StructuredReport};
use crate::quantify::ParamName;

/// Parameters whose relative error sets the quantification score.
pub const SCORED_PARAMS: [ParamName; 3] = [ParamName::Lvedv, ParamName::Lvesv, ParamName::Lvef];

/// Points deducted from the quantification score for a relative error:
/// below 5 % none, 5–10 % three, 10–20 % five, above 20 % seven. 5 % and
/// 10 % open the harsher band; 20 % stays in the 10–20 % band.
pub fn quant_deduction(relative_error: f64) -> Result<u32, ReportError> {
    if !(relative_error >= 0.0) {
        return Err(ReportError::NegativeError(relative_error));
    }
    Ok(if relative_error < 0.05 {
        0
    } else if relative_error < 0.10 {
        3
    } else if relative_error <= 0.20 {
        5
    } else {
        7
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationGrade {
    #[default]
    None,
    LogicalConflict,
    Mild,
    Major,
}

impl HallucinationGrade {
    pub fn penalty(self) -> i32 {
        match self {
            HallucinationGrade::None => 0,
            HallucinationGrade::LogicalConflict => -3,
            HallucinationGrade::Mild => -6,
            HallucinationGrade::Major => -10,
        }
    }
}

/// Reviewer checklist for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFindings {
    pub diagnosis: String,
    /// Reference values; must cover LVEDV, LVESV and LVEF.
    pub quantities: BTreeMap<ParamName, f64>,
    #[serde(default)]
    pub wall_items: Vec<String>,
    #[serde(default)]
    pub lge_items: Vec<String>,
    #[serde(default)]
    pub other_items: Vec<String>,
    #[serde(default)]
    pub key_indicators: Vec<String>,
    /// Reviewer's grading of unsupported statements in the candidate.
    #[serde(default)]
    pub hallucination: HallucinationGrade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscores {
    pub clinical_diagnosis: u32,
    pub quantification: u32,
    pub wall: u32,
    pub lge: u32,
    pub other_features: u32,
    pub completeness: u32,
}

impl Subscores {
    pub const MAX: Subscores = Subscores {
        clinical_diagnosis: 20,
        quantification: 15,
        wall: 10,
        lge: 15,
        other_features: 10,
        completeness: 30,
    };

    pub fn sum(&self) -> u32 {
        self.clinical_diagnosis + self.quantification + self.wall + self.lge + self.other_features + self.completeness
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricScore {
    pub subscores: Subscores,
    pub hallucination_penalty: i32,
    pub total: u32,
    /// One line per deduction.
    pub notes: Vec<String>,
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

fn contains(list: &[String], item: &str) -> bool {
    list.iter().any(|x| norm(x) == norm(item))
}

fn missing<'a>(expected: &'a [String], got: &[String]) -> Vec<&'a String> {
    expected.iter().filter(|e| !contains(got, e)).collect()
}

pub fn score_report(candidate: &StructuredReport, reference: &ReferenceFindings) -> Result<RubricScore, ReportError> {
    if reference.diagnosis.trim().is_empty() {
        return Err(ReportError::MalformedReference("empty diagnosis".into()));
    }
    for p in SCORED_PARAMS {
        match reference.quantities.get(&p) {
            Some(v) if v.is_finite() && *v != 0.0 => {}
            _ => return Err(ReportError::MalformedReference(format!("needs a nonzero {p}"))),
        }
    }
    let mut notes = Vec::new();
    let f = &candidate.findings;

    let predicted = candidate.diagnosis().map(|d| d.predicted.as_str());
    let clinical_diagnosis = if predicted.is_some_and(|p| norm(p) == norm(&reference.diagnosis)) {
        20
    } else {
        notes.push(format!("diagnosis {} vs expected {}", predicted.unwrap_or("absent"), reference.diagnosis));
        0
    };

    let measured = candidate.sections.function_quantification.as_ref().map(|q| &q.data);
    let mut worst = 0;
    for p in SCORED_PARAMS {
        let r = reference.quantities[&p];
        let d = match measured.and_then(|m| m.value(p)) {
            Some(c) => quant_deduction((c - r).abs() / r.abs())?,
            None => 7,
        };
        if d > 0 {
            notes.push(format!("{p}: -{d}"));
        }
        worst = worst.max(d);
    }
    let quantification = 15 - worst;

    let mut itemised = |max: u32, expected: &[String], got: &[String], what: &str| {
        let miss = missing(expected, got);
        for m in &miss {
            notes.push(format!("missing {what} item `{m}`"));
        }
        max.saturating_sub(miss.len() as u32)
    };
    let wall = itemised(10, &reference.wall_items, &f.wall, "wall");
    let lge = itemised(15, &reference.lge_items, &f.lge, "LGE");
    let other_features = itemised(10, &reference.other_items, &f.other, "other");

    let mut redundant = 0u32;
    for (got, expected) in [(&f.wall, &reference.wall_items), (&f.lge, &reference.lge_items), (&f.other, &reference.other_items)] {
        for g in got.iter().filter(|g| !contains(expected, g)) {
            notes.push(format!("redundant item `{g}`"));
            redundant += 1;
        }
    }
    let missing_keys = missing(&reference.key_indicators, &f.key_indicators);
    for k in &missing_keys {
        notes.push(format!("missing key indicator `{k}`"));
    }
    let completeness = 30u32.saturating_sub(2 * redundant + 2 * missing_keys.len() as u32);

    let subscores = Subscores {
        clinical_diagnosis,
        quantification,
        wall,
        lge,
        other_features,
        completeness,
    };
    let hallucination_penalty = reference.hallucination.penalty();
    if hallucination_penalty != 0 {
        notes.push(format!("hallucination {hallucination_penalty}"));
    }
    let total = (subscores.sum() as i32 + hallucination_penalty).clamp(0, 100) as u32;
    Ok(RubricScore {
        subscores,
        hallucination_penalty,
        total,
        notes,
    })
}
