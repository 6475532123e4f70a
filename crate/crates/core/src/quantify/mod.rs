//! Cardiac structural and functional parameters from segmentation masks.

mod geometry;
mod study;
mod volumes;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use geometry::{apex_thickness, atrial_diameters, lvedd, max_chord_through_centroid, rvedd, ApexReading, AtrialDiameters, Diameter};
pub use study::{quantify_study, StudyMasks};
pub use volumes::{
    cavity_volume, detect_ed_es, detect_ed_es_volumes, function_params, lv_mass, CavityVolume, FunctionParams,
    PhasePair, MYOCARDIAL_DENSITY_G_PER_ML,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("missing structure: {0}")]
    MissingStructure(String),
    #[error("need at least {needed} phases, got {found}")]
    TooFewPhases { needed: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mL")]
    Ml,
    #[serde(rename = "L/min")]
    LPerMin,
    #[serde(rename = "g")]
    G,
    #[serde(rename = "mm")]
    Mm,
    #[serde(rename = "%")]
    Percent,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Ml => "mL",
            Unit::LPerMin => "L/min",
            Unit::G => "g",
            Unit::Mm => "mm",
            Unit::Percent => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Sax,
    Ch2,
    Ch4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseTag {
    #[serde(rename = "ED")]
    Ed,
    #[serde(rename = "ES")]
    Es,
    #[serde(rename = "static")]
    Static,
}

/// Parameter names, declared in report order: the six headline parameters
/// first, then the supplementary ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParamName {
    Lvedv,
    Lvesv,
    Lvef,
    Sv,
    Lvm,
    Lvedd,
    Co,
    Rvedd,
    #[serde(rename = "LAT4CHD")]
    Lat4chd,
    #[serde(rename = "RAT4CHD")]
    Rat4chd,
    ApexThickness,
}

impl ParamName {
    pub const ALL: [ParamName; 11] = [
        ParamName::Lvedv,
        ParamName::Lvesv,
        ParamName::Lvef,
        ParamName::Sv,
        ParamName::Lvm,
        ParamName::Lvedd,
        ParamName::Co,
        ParamName::Rvedd,
        ParamName::Lat4chd,
        ParamName::Rat4chd,
        ParamName::ApexThickness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Lvedv => "LVEDV",
            ParamName::Lvesv => "LVESV",
            ParamName::Lvef => "LVEF",
            ParamName::Sv => "SV",
            ParamName::Lvm => "LVM",
            ParamName::Lvedd => "LVEDD",
            ParamName::Co => "CO",
            ParamName::Rvedd => "RVEDD",
            ParamName::Lat4chd => "LAT4CHD",
            ParamName::Rat4chd => "RAT4CHD",
            ParamName::ApexThickness => "APEX_THICKNESS",
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            ParamName::Lvedv | ParamName::Lvesv | ParamName::Sv => Unit::Ml,
            ParamName::Lvef => Unit::Percent,
            ParamName::Co => Unit::LPerMin,
            ParamName::Lvm => Unit::G,
            _ => Unit::Mm,
        }
    }

    pub fn parse(s: &str) -> Option<ParamName> {
        ParamName::ALL.into_iter().find(|p| p.as_str().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantFlag {
    LabelAbsent,
    EdEsTie,
    NegativeEf,
    Experimental,
    ThinApex,
    FewSlices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub unit: Unit,
    pub source: Source,
    pub phase: PhaseTag,
    #[serde(default)]
    pub flags: Vec<QuantFlag>,
}

/// Named measurements; serializes as `{name: {value, unit, source, phase, flags}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementSet {
    entries: BTreeMap<ParamName, Measurement>,
}

impl MeasurementSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts with the parameter's fixed unit.
    pub fn insert(&mut self, name: ParamName, value: f64, source: Source, phase: PhaseTag, flags: Vec<QuantFlag>) {
        self.entries.insert(
            name,
            Measurement {
                value,
                unit: name.unit(),
                source,
                phase,
                flags,
            },
        );
    }

    pub fn get(&self, name: ParamName) -> Option<&Measurement> {
        self.entries.get(&name)
    }

    pub fn value(&self, name: ParamName) -> Option<f64> {
        self.get(name).map(|m| m.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamName, &Measurement)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Plain-text table in report order, one decimal place.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16}{:>10}  {:<6}{:<7}{:<7}flags", "parameter", "value", "unit", "source", "phase");
        for (name, m) in self.iter() {
            let source = match m.source {
                Source::Sax => "SAX",
                Source::Ch2 => "CH2",
                Source::Ch4 => "CH4",
            };
            let phase = match m.phase {
                PhaseTag::Ed => "ED",
                PhaseTag::Es => "ES",
                PhaseTag::Static => "static",
            };
            let flags: Vec<String> = m
                .flags
                .iter()
                .map(|f| serde_json::to_value(f).unwrap().as_str().unwrap().to_string())
                .collect();
            let _ = writeln!(
                out,
                "{:<16}{:>10.1}  {:<6}{:<7}{:<7}{}",
                name.as_str(),
                m.value,
                m.unit.as_str(),
                source,
                phase,
                flags.join(",")
            );
        }
        out
    }
}
