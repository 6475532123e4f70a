//! Planners turn an instruction into a [`ToolUseCommand`].
//!
//! The reference planner is rule-based: keyword intents, the sequences
//! present in the session and the artifacts already produced decide the
//! actions. Segmentations a later tool needs are added when their masks do
//! not exist yet. Actions are listed in pipeline order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::protocol::{Action, ToolUseCommand};
use super::registry::Registry;
use super::AgentError;
use crate::tool::ToolId;
use crate::volume::SequenceKind;

/// What a planner sees of the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRequest {
    pub instruction: String,
    pub available_sequences: Vec<SequenceKind>,
    /// `<artifact id>: <summary>` lines, oldest first.
    pub artifact_summary: Vec<String>,
}

impl PlannerRequest {
    fn has_masks(&self, kind: SequenceKind) -> bool {
        let tag = format!(": masks {}", kind.as_str());
        self.artifact_summary.iter().any(|s| s.ends_with(&tag))
    }

    fn has_measurements(&self) -> bool {
        self.artifact_summary.iter().any(|s| s.ends_with(": measurements"))
    }

    fn available(&self, kind: SequenceKind) -> bool {
        self.available_sequences.contains(&kind)
    }
}

pub trait Planner: Send + Sync {
    fn plan(&self, request: &PlannerRequest, registry: &Registry) -> Result<ToolUseCommand, AgentError>;
}

fn any(text: &str, keys: &[&str]) -> bool {
    keys.iter().any(|k| text.contains(k))
}

const FULL: &[&str] = &["full", "complete", "comprehensive", "entire", "whole", "end-to-end", "all findings"];
const SEGMENT: &[&str] = &["segment", "contour", "delineate", "outline", "mask"];
const LGE: &[&str] = &["lge", "late gadolinium", "late enhancement", "scar"];
const SAX: &[&str] = &["short-axis", "short axis", "sax"];
const CH2: &[&str] = &["2ch", "two-chamber", "two chamber", "2-chamber"];
const CH4: &[&str] = &["4ch", "four-chamber", "four chamber", "4-chamber"];
const QUANT: &[&str] = &[
    "quantif", "measure", "ejection fraction", "lvef", "volume", "mass", "function", "thickness", "diameter", "stroke",
];
const SCREEN: &[&str] = &["diagnos", "screen", "classif", "disease", "normal heart", "ischemi", "ischaemi"];
const SUBTYPE: &[&str] = &["subtype", "subtyping", "which cardiomyopathy", "type of cardiomyopathy", "cardiomyopathy type", "nicm"];
const OVERRIDE: &[&str] = &["override", "regardless", "force", "bypass"];
const RAG: &[&str] = &["guideline", "recommend", "literature", "evidence", "criteria", "explain", "what does", "what is known"];
const RESTRICTIVE: &[&str] = &["restrictive"];
const ARRHYTHMOGENIC: &[&str] = &["arrhythmogenic"];

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferencePlanner;

struct Plan<'a> {
    req: &'a PlannerRequest,
    tools: BTreeSet<ToolId>,
    missing: BTreeSet<SequenceKind>,
}

impl Plan<'_> {
    /// Adds `t` after checking its sequences; for tools that consume masks,
    /// adds the segmentations that have not run yet.
    fn need(&mut self, t: ToolId) {
        for k in t.required_sequences() {
            if !self.req.available(*k) {
                self.missing.insert(*k);
            } else if t.segmentation_kind().is_none() && !self.req.has_masks(*k) {
                self.tools.insert(ToolId::segmentation_tool(*k).expect("required sequences are segmentable"));
            }
        }
        self.tools.insert(t);
    }
}

fn clarify(thoughts: String, value: String) -> ToolUseCommand {
    ToolUseCommand {
        thoughts,
        actions: Vec::new(),
        value,
    }
}

impl ReferencePlanner {
    pub fn plan_request(&self, req: &PlannerRequest) -> ToolUseCommand {
        let raw = req.instruction.trim();
        let t = raw.to_lowercase();
        let seqs: Vec<&str> = req.available_sequences.iter().map(|k| k.as_str()).collect();
        let seq_note = if seqs.is_empty() { "none".to_string() } else { seqs.join(", ") };
        if t.is_empty() {
            return clarify(
                "Empty instruction.".into(),
                "Please tell me what to do, for example \"segment the SAX cine\" or \"generate the full report\".".into(),
            );
        }
        let mut intents = Vec::new();
        let mut plan = Plan {
            req,
            tools: BTreeSet::new(),
            missing: BTreeSet::new(),
        };
        let mut nicms_pipeline = false;

        if t.contains("report") && any(&t, FULL) || any(&t, &["full analysis", "complete analysis", "full workup", "full work-up"]) {
            intents.push("full report");
            if !req.available(SequenceKind::SaxCine) {
                plan.missing.insert(SequenceKind::SaxCine);
            }
            for k in [SequenceKind::SaxCine, SequenceKind::Ch2Cine, SequenceKind::Ch4Cine, SequenceKind::SaxLge] {
                if req.available(k) && !req.has_masks(k) {
                    plan.tools.insert(ToolId::segmentation_tool(k).unwrap());
                }
            }
            plan.tools.insert(ToolId::Quant);
            if [SequenceKind::Ch2Cine, SequenceKind::Ch4Cine].iter().all(|k| req.available(*k)) {
                plan.tools.insert(ToolId::Cds);
                if req.available(SequenceKind::Ch4Cine) && req.available(SequenceKind::SaxLge) {
                    plan.tools.insert(ToolId::Nicms);
                    nicms_pipeline = true;
                }
            }
            plan.tools.insert(ToolId::Mrg);
        } else {
            if any(&t, SEGMENT) {
                intents.push("segmentation");
                let lge = any(&t, LGE);
                let sax = any(&t, SAX) && (!lge || t.contains("cine"));
                let ch2 = any(&t, CH2);
                let ch4 = any(&t, CH4);
                let mut kinds = Vec::new();
                if sax {
                    kinds.push(SequenceKind::SaxCine);
                }
                if ch2 {
                    kinds.push(SequenceKind::Ch2Cine);
                }
                if ch4 {
                    kinds.push(SequenceKind::Ch4Cine);
                }
                if lge {
                    kinds.push(SequenceKind::SaxLge);
                }
                if kinds.is_empty() {
                    kinds = req
                        .available_sequences
                        .iter()
                        .copied()
                        .filter(|k| ToolId::segmentation_tool(*k).is_some())
                        .collect();
                    if kinds.is_empty() {
                        plan.missing.insert(SequenceKind::SaxCine);
                    }
                }
                for k in kinds {
                    plan.need(ToolId::segmentation_tool(k).unwrap());
                }
            }
            if any(&t, QUANT) {
                intents.push("quantification");
                plan.need(ToolId::Quant);
                if req.available(SequenceKind::Ch4Cine) && !req.has_masks(SequenceKind::Ch4Cine) {
                    plan.tools.insert(ToolId::Ch4cs);
                }
            }
            let subtype = any(&t, SUBTYPE);
            // "subtype regardless of screening" names screening without asking for it
            if any(&t, SCREEN) && !(subtype && (any(&t, OVERRIDE) || !t.contains("screen"))) {
                intents.push("screening");
                plan.need(ToolId::Cds);
            }
            if subtype {
                intents.push("subtyping");
                plan.need(ToolId::Nicms);
            }
            if any(&t, RAG) {
                intents.push("guideline retrieval");
                plan.tools.insert(ToolId::Rag);
            }
            if t.contains("report") {
                intents.push("report");
                if !req.has_measurements() && !plan.tools.contains(&ToolId::Quant) {
                    plan.need(ToolId::Quant);
                }
                plan.tools.insert(ToolId::Mrg);
            }
        }

        if intents.is_empty() {
            return clarify(
                format!("No known intent in the instruction. Available sequences: {seq_note}."),
                "I can segment cine and LGE studies, quantify cardiac function, screen for and subtype cardiomyopathy, look up guidelines and write a report. Which of these do you need?".into(),
            );
        }
        if !plan.missing.is_empty() {
            let names: Vec<&str> = plan.missing.iter().map(|k| k.display_name()).collect();
            return clarify(
                format!("Intents: {}. Missing sequences: {}.", intents.join(", "), names.join(", ")),
                format!("This request needs the {} study, which has not been uploaded. Please upload it and ask again.", names.join(" and ")),
            );
        }

        let actions: Vec<Action> = plan
            .tools
            .iter()
            .map(|&tool| {
                let a = Action::new(tool);
                match tool {
                    ToolId::Nicms => {
                        let mut a = a;
                        if nicms_pipeline {
                            a = a.with("in_pipeline", true);
                        }
                        if any(&t, OVERRIDE) {
                            a = a.with("override", true);
                        }
                        if any(&t, RESTRICTIVE) {
                            a = a.with("restrictive", true);
                        }
                        if any(&t, ARRHYTHMOGENIC) {
                            a = a.with("arrhythmogenic", true);
                        }
                        a
                    }
                    ToolId::Rag => a.with("query", raw),
                    _ => a,
                }
            })
            .collect();
        let names: Vec<&str> = actions.iter().map(|a| a.api_name.as_str()).collect();
        ToolUseCommand {
            thoughts: format!("Intents: {}. Available sequences: {seq_note}. Plan: {}.", intents.join(", "), names.join(", ")),
            value: format!("Running {}.", names.join(", ")),
            actions,
        }
    }
}

impl Planner for ReferencePlanner {
    fn plan(&self, request: &PlannerRequest, registry: &Registry) -> Result<ToolUseCommand, AgentError> {
        let cmd = self.plan_request(request);
        registry.validate(&cmd)?;
        Ok(cmd)
    }
}

type Transport = dyn Fn(&str) -> Result<String, String> + Send + Sync;

/// Delegates planning to an external service: the request JSON goes out,
/// a command JSON comes back and is checked against the registry.
pub struct RemotePlanner {
    transport: Box<Transport>,
}

impl RemotePlanner {
    pub fn new(transport: impl Fn(&str) -> Result<String, String> + Send + Sync + 'static) -> Self {
        RemotePlanner {
            transport: Box::new(transport),
        }
    }
}

impl Planner for RemotePlanner {
    fn plan(&self, request: &PlannerRequest, registry: &Registry) -> Result<ToolUseCommand, AgentError> {
        let body = serde_json::to_string(request).expect("planner request serializes");
        let reply = (self.transport)(&body).map_err(AgentError::Planner)?;
        let cmd = ToolUseCommand::from_json(&reply).map_err(|e| AgentError::ProtocolViolation(format!("invalid command: {e}")))?;
        registry.validate(&cmd).map_err(|e| AgentError::ProtocolViolation(e.to_string()))?;
        Ok(cmd)
    }
}
