//! Conversational agent: planning, tool execution, answers and session
//! persistence.

pub mod corpus;
mod executor;
pub mod planner;
pub mod protocol;
pub mod registry;
pub mod session;
pub mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use executor::{synthesize, ungrounded_numbers, Agent};
pub use planner::{Planner, PlannerRequest, ReferencePlanner, RemotePlanner};
pub use protocol::{Action, AgentMessage, Event, Payload, Role, ToolResult, ToolStatus, ToolUseCommand, TranscriptRecord};
pub use registry::{ParamKind, ParamSpec, Registry, ToolDescriptor};
pub use session::{Artifact, ReportArtifact, SessionState};
pub use store::{SessionStore, Watermark};

use crate::tool::ToolId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("tool {0} is already registered")]
    DuplicateTool(ToolId),
    #[error("tool {0} is not registered")]
    UnregisteredTool(ToolId),
    #[error("invalid parameters for {tool}: {reason}")]
    InvalidParams { tool: ToolId, reason: String },
    #[error("planner protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("planner unavailable: {0}")]
    Planner(String),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("storage: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvocationRate {
    pub attempts: usize,
    pub successes: usize,
    pub rate: f64,
}

impl InvocationRate {
    fn record(&mut self, ok: bool) {
        self.attempts += 1;
        self.successes += usize::from(ok);
        self.rate = self.successes as f64 / self.attempts as f64;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvocationReport {
    pub tools: BTreeMap<ToolId, InvocationRate>,
    /// Absent when no tool was attempted.
    pub overall: Option<InvocationRate>,
}

/// Success rate of tool calls over transcripts. Aborted and skipped calls
/// were never attempted and are not counted.
pub fn invocation_report<'a>(transcripts: impl IntoIterator<Item = &'a [TranscriptRecord]>) -> InvocationReport {
    let mut report = InvocationReport::default();
    for t in transcripts {
        for r in t {
            let Event::ToolResult { result } = &r.event else { continue };
            let ok = match result.status {
                ToolStatus::Ok => true,
                ToolStatus::Error => false,
                ToolStatus::Aborted | ToolStatus::Skipped => continue,
            };
            report.tools.entry(result.api_name).or_default().record(ok);
            report.overall.get_or_insert_with(InvocationRate::default).record(ok);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tool: ToolId, status: ToolStatus) -> TranscriptRecord {
        let result = match status {
            ToolStatus::Ok => ToolResult::ok(tool, Payload::Report { artifact: "report-0".into() }, 0),
            s => ToolResult::failed(tool, s, "x", 0),
        };
        TranscriptRecord {
            seq: 0,
            turn: 0,
            at_ms: 0,
            event: Event::ToolResult { result },
        }
    }

    #[test]
    fn invocation_rates() {
        let a = vec![rec(ToolId::Saxcs, ToolStatus::Ok), rec(ToolId::Quant, ToolStatus::Error), rec(ToolId::Mrg, ToolStatus::Aborted)];
        let b = vec![rec(ToolId::Saxcs, ToolStatus::Ok), rec(ToolId::Nicms, ToolStatus::Skipped)];
        let r = invocation_report([a.as_slice(), b.as_slice()]);
        assert_eq!(r.tools.len(), 2);
        assert_eq!(r.tools[&ToolId::Saxcs].rate, 1.0);
        assert_eq!(r.tools[&ToolId::Quant].rate, 0.0);
        let o = r.overall.unwrap();
        assert_eq!((o.attempts, o.successes), (3, 2));
        assert!(invocation_report(std::iter::empty::<&[TranscriptRecord]>()).overall.is_none());
    }
}
