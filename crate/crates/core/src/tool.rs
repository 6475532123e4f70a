//! Identifiers of the nine agent tools.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::volume::SequenceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolId {
    #[serde(rename = "SAXCS")]
    Saxcs,
    #[serde(rename = "2CHCS")]
    Ch2cs,
    #[serde(rename = "4CHCS")]
    Ch4cs,
    #[serde(rename = "SAXLGES")]
    Saxlges,
    #[serde(rename = "QUANT")]
    Quant,
    #[serde(rename = "CDS")]
    Cds,
    #[serde(rename = "NICMS")]
    Nicms,
    #[serde(rename = "RAG")]
    Rag,
    #[serde(rename = "MRG")]
    Mrg,
}

impl ToolId {
    /// Pipeline order; plans list their actions in this order.
    pub const ALL: [ToolId; 9] = [
        ToolId::Saxcs,
        ToolId::Ch2cs,
        ToolId::Ch4cs,
        ToolId::Saxlges,
        ToolId::Quant,
        ToolId::Cds,
        ToolId::Nicms,
        ToolId::Rag,
        ToolId::Mrg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolId::Saxcs => "SAXCS",
            ToolId::Ch2cs => "2CHCS",
            ToolId::Ch4cs => "4CHCS",
            ToolId::Saxlges => "SAXLGES",
            ToolId::Quant => "QUANT",
            ToolId::Cds => "CDS",
            ToolId::Nicms => "NICMS",
            ToolId::Rag => "RAG",
            ToolId::Mrg => "MRG",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ToolId::Saxcs => "short-axis cine segmentation",
            ToolId::Ch2cs => "two-chamber cine segmentation",
            ToolId::Ch4cs => "four-chamber cine segmentation",
            ToolId::Saxlges => "short-axis LGE segmentation",
            ToolId::Quant => "cardiac function and structure quantification",
            ToolId::Cds => "cardiovascular disease screening (NH / IHD / NICM)",
            ToolId::Nicms => "non-ischemic cardiomyopathy subtyping",
            ToolId::Rag => "guideline retrieval",
            ToolId::Mrg => "medical report generation",
        }
    }

    /// Sequence kinds a study must provide before the tool can run.
    pub fn required_sequences(self) -> &'static [SequenceKind] {
        use SequenceKind::*;
        match self {
            ToolId::Saxcs | ToolId::Quant => &[SaxCine],
            ToolId::Ch2cs => &[Ch2Cine],
            ToolId::Ch4cs => &[Ch4Cine],
            ToolId::Saxlges => &[SaxLge],
            ToolId::Cds => &[SaxCine, Ch2Cine, Ch4Cine],
            ToolId::Nicms => &[SaxCine, Ch4Cine, SaxLge],
            ToolId::Rag | ToolId::Mrg => &[],
        }
    }

    /// Sequence kind segmented by a segmentation tool.
    pub fn segmentation_kind(self) -> Option<SequenceKind> {
        match self {
            ToolId::Saxcs => Some(SequenceKind::SaxCine),
            ToolId::Ch2cs => Some(SequenceKind::Ch2Cine),
            ToolId::Ch4cs => Some(SequenceKind::Ch4Cine),
            ToolId::Saxlges => Some(SequenceKind::SaxLge),
            _ => None,
        }
    }

    pub fn segmentation_tool(kind: SequenceKind) -> Option<ToolId> {
        ToolId::ALL.into_iter().find(|t| t.segmentation_kind() == Some(kind))
    }

    /// Tools served by expert-model backends.
    pub fn is_backend_task(self) -> bool {
        self.segmentation_kind().is_some() || matches!(self, ToolId::Cds | ToolId::Nicms)
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown tool `{0}`")]
pub struct UnknownTool(pub String);

impl FromStr for ToolId {
    type Err = UnknownTool;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolId::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownTool(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for t in ToolId::ALL {
            assert_eq!(t.as_str().parse::<ToolId>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.as_str()));
        }
        assert!("XYZ".parse::<ToolId>().is_err());
    }

    #[test]
    fn segmentation_tools_cover_four_kinds() {
        let seg: Vec<_> = ToolId::ALL.into_iter().filter(|t| t.segmentation_kind().is_some()).collect();
        assert_eq!(seg, vec![ToolId::Saxcs, ToolId::Ch2cs, ToolId::Ch4cs, ToolId::Saxlges]);
        assert_eq!(ToolId::segmentation_tool(SequenceKind::SaxLge), Some(ToolId::Saxlges));
        assert_eq!(ToolId::segmentation_tool(SequenceKind::RestMpi), None);
    }
}
