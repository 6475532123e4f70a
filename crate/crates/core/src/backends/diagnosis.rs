//! Two-stage diagnosis results and the rule-based reference diagnoser.

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::BackendError;
use crate::aha17::Bullseye17;
use crate::quantify::{MeasurementSet, ParamName};

pub const STAGE1_LABELS: [&str; 3] = ["NH", "IHD", "NICM"];
pub const STAGE2_LABELS: [&str; 5] = ["HCM", "DCM", "RCM", "ACM", "Myocarditis"];

/// Probability given to the rule outcome; the rest is spread uniformly.
pub const RULE_CONFIDENCE: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Screening,
    Subtyping,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Screening => 1,
            Stage::Subtyping => 2,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Stage::Screening => &STAGE1_LABELS,
            Stage::Subtyping => &STAGE2_LABELS,
        }
    }
}

/// Class probabilities in listed label order with the arg-max label.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisResult {
    pub stage: Stage,
    pub probabilities: Vec<f64>,
    pub predicted: String,
    pub evidence: Vec<String>,
}

impl DiagnosisResult {
    /// Validates the distribution and picks the arg-max, lowest listed index
    /// on ties.
    pub fn from_probabilities(stage: Stage, probabilities: Vec<f64>, evidence: Vec<String>) -> Result<Self, BackendError> {
        let labels = stage.labels();
        if probabilities.len() != labels.len() {
            return Err(BackendError::Protocol(format!(
                "stage {} needs {} probabilities, got {}",
                stage.number(),
                labels.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(BackendError::Protocol("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(BackendError::Protocol(format!("probabilities sum to {sum}")));
        }
        let mut best = 0;
        for (i, p) in probabilities.iter().enumerate() {
            if *p > probabilities[best] {
                best = i;
            }
        }
        Ok(DiagnosisResult {
            stage,
            predicted: labels[best].to_string(),
            probabilities,
            evidence,
        })
    }

    /// Softened one-hot on `label`.
    pub fn softened(stage: Stage, label: &str, evidence: Vec<String>) -> Self {
        let labels = stage.labels();
        let rest = (1.0 - RULE_CONFIDENCE) / (labels.len() - 1) as f64;
        let probs = labels.iter().map(|l| if *l == label { RULE_CONFIDENCE } else { rest }).collect();
        DiagnosisResult::from_probabilities(stage, probs, evidence).expect("softened one-hot is a distribution")
    }

    fn uniform(stage: Stage, evidence: Vec<String>) -> Self {
        let n = stage.labels().len();
        DiagnosisResult::from_probabilities(stage, vec![1.0 / n as f64; n], evidence).expect("uniform is a distribution")
    }

    pub fn probability(&self, label: &str) -> Option<f64> {
        let i = self.stage.labels().iter().position(|l| *l == label)?;
        self.probabilities.get(i).copied()
    }

    pub fn confidence(&self) -> f64 {
        self.probability(&self.predicted).unwrap_or(0.0)
    }
}

struct Probs<'a>(Stage, &'a [f64]);

impl Serialize for Probs<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.1.len()))?;
        for (l, p) in self.0.labels().iter().zip(self.1) {
            m.serialize_entry(l, p)?;
        }
        m.end()
    }
}

impl Serialize for DiagnosisResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            stage: u8,
            probabilities: Probs<'a>,
            predicted: &'a str,
            evidence: &'a [String],
        }
        Wire {
            stage: self.stage.number(),
            probabilities: Probs(self.stage, &self.probabilities),
            predicted: &self.predicted,
            evidence: &self.evidence,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiagnosisResult {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            stage: u8,
            probabilities: std::collections::BTreeMap<String, f64>,
            #[serde(default)]
            evidence: Vec<String>,
        }
        let w = Wire::deserialize(d)?;
        let stage = match w.stage {
            1 => Stage::Screening,
            2 => Stage::Subtyping,
            n => return Err(D::Error::custom(format!("unknown stage {n}"))),
        };
        let labels = stage.labels();
        if w.probabilities.len() != labels.len() {
            return Err(D::Error::custom("probability labels do not match the stage"));
        }
        let probs = labels
            .iter()
            .map(|l| w.probabilities.get(*l).copied().ok_or_else(|| D::Error::custom(format!("missing `{l}`"))))
            .collect::<Result<Vec<f64>, _>>()?;
        DiagnosisResult::from_probabilities(stage, probs, w.evidence).map_err(D::Error::custom)
    }
}

/// Phenotype flags the geometric features cannot derive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    #[serde(default)]
    pub restrictive: bool,
    #[serde(default)]
    pub arrhythmogenic: bool,
}

/// Coefficient of variation (population SD over mean) of the present
/// ring-segment values.
pub fn thickness_cv(thickness: &Bullseye17) -> Option<f64> {
    let v: Vec<f64> = thickness.values[..16].iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return None;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

fn required(m: &MeasurementSet, name: ParamName) -> Result<f64, BackendError> {
    m.value(name)
        .ok_or_else(|| BackendError::MissingInput(format!("measurement {}", name.as_str())))
}

/// Deterministic threshold rules over measurements and segment bullseyes.
///
/// Screening: LVEF < 40 with LVEDD > 58 mm, or a segment mean wall ≥ 15 mm,
/// gives NICM; LVEF < 50 with thickness CV > 0.25 gives IHD; LVEF ≥ 55 with
/// every wall ≤ 12 mm gives NH. Subtyping: wall ≥ 15 mm → HCM; LVEDD > 58
/// and LVEF < 40 → DCM; explicit flags → RCM / ACM; any LGE with normal
/// geometry → myocarditis. Matching rules give a softened one-hot; when none
/// matches the output is uniform.
pub fn rule_diagnoser(
    stage: Stage,
    measurements: &MeasurementSet,
    thickness: &Bullseye17,
    lge: Option<&Bullseye17>,
    flags: FeatureFlags,
) -> Result<DiagnosisResult, BackendError> {
    let ef = required(measurements, ParamName::Lvef)?;
    let edd = required(measurements, ParamName::Lvedd)?;
    let wall = thickness
        .max_wall()
        .ok_or_else(|| BackendError::MissingInput("segment wall thickness".into()))?;
    let mut ev = vec![format!("LVEF {ef:.1} %"), format!("LVEDD {edd:.1} mm"), format!("max segment wall {wall:.1} mm")];
    let label = match stage {
        Stage::Screening => {
            let cv = thickness_cv(thickness).unwrap_or(0.0);
            ev.push(format!("wall thickness CV {cv:.3}"));
            if (ef < 40.0 && edd > 58.0) || wall >= 15.0 {
                Some("NICM")
            } else if ef < 50.0 && cv > 0.25 {
                Some("IHD")
            } else if ef >= 55.0 && wall <= 12.0 {
                Some("NH")
            } else {
                None
            }
        }
        Stage::Subtyping => {
            let burden = lge.and_then(|b| b.values.iter().flatten().copied().reduce(f64::max)).unwrap_or(0.0);
            ev.push(format!("max segment LGE burden {burden:.3}"));
            let normal_geometry = edd <= 58.0 && wall <= 12.0;
            if wall >= 15.0 {
                Some("HCM")
            } else if edd > 58.0 && ef < 40.0 {
                Some("DCM")
            } else if flags.restrictive {
                Some("RCM")
            } else if flags.arrhythmogenic {
                Some("ACM")
            } else if burden > 0.0 && normal_geometry {
                Some("Myocarditis")
            } else {
                None
            }
        }
    };
    Ok(match label {
        Some(l) => DiagnosisResult::softened(stage, l, ev),
        None => {
            ev.push("no rule matched; low confidence".into());
            DiagnosisResult::uniform(stage, ev)
        }
    })
}
