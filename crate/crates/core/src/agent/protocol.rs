//! Dialogue records: user and agent messages, tool-use commands, tool
//! results and the transcript that orders them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::knowledge::Snippet;
use crate::backends::DiagnosisResult;
use crate::quantify::MeasurementSet;
use crate::report::ArtifactId;
use crate::tool::ToolId;
use crate::volume::SequenceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub role: Role,
    /// Study artifacts attached to a user message.
    #[serde(default)]
    pub image_refs: Vec<ArtifactId>,
    pub text: String,
    /// End-of-sequence marker.
    #[serde(default)]
    pub stop: bool,
}

impl AgentMessage {
    pub fn user(text: impl Into<String>) -> Self {
        AgentMessage {
            role: Role::User,
            image_refs: Vec::new(),
            text: text.into(),
            stop: true,
        }
    }

    pub fn with_images(mut self, refs: Vec<ArtifactId>) -> Self {
        self.image_refs = refs;
        self
    }

    pub fn agent(text: impl Into<String>) -> Self {
        AgentMessage {
            role: Role::Agent,
            image_refs: Vec::new(),
            text: text.into(),
            stop: true,
        }
    }

    /// Only user messages may carry images.
    pub fn is_valid(&self) -> bool {
        self.role == Role::User || self.image_refs.is_empty()
    }
}

pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub api_name: ToolId,
    #[serde(default)]
    pub params: Params,
}

impl Action {
    pub fn new(api_name: ToolId) -> Self {
        Action {
            api_name,
            params: Params::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn bool_param(&self, key: &str) -> bool {
        self.params.get(key).and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn str_param(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(Value::as_str)
    }

    pub fn uint_param(&self, key: &str) -> Option<u64> {
        self.params.get(key).and_then(Value::as_u64)
    }
}

/// Planner output. Serializes with exactly the keys `thoughts`, `actions`
/// and `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolUseCommand {
    pub thoughts: String,
    pub actions: Vec<Action>,
    pub value: String,
}

impl ToolUseCommand {
    /// The closing turn: no actions, the answer as `value`.
    pub fn synthesis(answer: impl Into<String>) -> Self {
        ToolUseCommand {
            thoughts: "All requested tools have run; summarising their results.".into(),
            actions: Vec::new(),
            value: answer.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("command serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn tools(&self) -> Vec<ToolId> {
        self.actions.iter().map(|a| a.api_name).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolStatus {
    Ok,
    Error,
    /// Not run because an earlier action failed.
    Aborted,
    /// Not run because a pipeline gate was closed.
    Skipped,
}

/// Typed result of a successful tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Mask {
        artifact: ArtifactId,
        kind: SequenceKind,
        phases: usize,
    },
    Measurements {
        artifact: ArtifactId,
        measurements: MeasurementSet,
        thickness: ArtifactId,
        lge: Option<ArtifactId>,
    },
    Diagnosis {
        artifact: ArtifactId,
        result: DiagnosisResult,
    },
    Snippets {
        artifact: ArtifactId,
        snippets: Vec<Snippet>,
    },
    Report {
        artifact: ArtifactId,
    },
}

impl Payload {
    pub fn artifact(&self) -> &ArtifactId {
        match self {
            Payload::Mask { artifact, .. }
            | Payload::Measurements { artifact, .. }
            | Payload::Diagnosis { artifact, .. }
            | Payload::Snippets { artifact, .. }
            | Payload::Report { artifact } => artifact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub api_name: ToolId,
    pub status: ToolStatus,
    #[serde(default)]
    pub payload: Option<Payload>,
    /// Reason for an error, abort or skip.
    #[serde(default)]
    pub message: Option<String>,
    pub latency_ms: u64,
}

impl ToolResult {
    pub fn ok(api_name: ToolId, payload: Payload, latency_ms: u64) -> Self {
        ToolResult {
            api_name,
            status: ToolStatus::Ok,
            payload: Some(payload),
            message: None,
            latency_ms,
        }
    }

    pub fn failed(api_name: ToolId, status: ToolStatus, message: impl Into<String>, latency_ms: u64) -> Self {
        ToolResult {
            api_name,
            status,
            payload: None,
            message: Some(message.into()),
            latency_ms,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status != ToolStatus::Ok || self.payload.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    User { message: AgentMessage },
    ToolUse { command: ToolUseCommand },
    ToolResult { result: ToolResult },
    Answer { message: AgentMessage },
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub turn: u64,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl TranscriptRecord {
    /// Same record with the clock and latencies zeroed, for comparisons.
    pub fn timeless(&self) -> TranscriptRecord {
        let mut r = self.clone();
        r.at_ms = 0;
        if let Event::ToolResult { result } = &mut r.event {
            result.latency_ms = 0;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_round_trip_is_byte_stable() {
        let cmd = ToolUseCommand {
            thoughts: "t".into(),
            actions: vec![Action::new(ToolId::Saxcs), Action::new(ToolId::Nicms).with("in_pipeline", true)],
            value: "v".into(),
        };
        let json = cmd.to_json();
        assert_eq!(
            json,
            r#"{"thoughts":"t","actions":[{"api_name":"SAXCS","params":{}},{"api_name":"NICMS","params":{"in_pipeline":true}}],"value":"v"}"#
        );
        let back = ToolUseCommand::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert!(ToolUseCommand::from_json(r#"{"thoughts":"","actions":[{"api_name":"XRAY"}],"value":""}"#).is_err());
        assert!(ToolUseCommand::from_json(r#"{"thoughts":"","actions":[],"value":"","extra":1}"#).is_err());
    }

    #[test]
    fn record_flattens_event() {
        let r = TranscriptRecord {
            seq: 3,
            turn: 1,
            at_ms: 5,
            event: Event::Answer {
                message: AgentMessage::agent("done"),
            },
        };
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["event"], "answer");
        assert_eq!(serde_json::from_value::<TranscriptRecord>(v).unwrap(), r);
        assert!(!AgentMessage::agent("x").with_images(vec!["s".into()]).is_valid());
    }
}
