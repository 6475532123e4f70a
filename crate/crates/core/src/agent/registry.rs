use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::ToolUseCommand;
use super::AgentError;
use crate::tool::ToolId;
use crate::volume::SequenceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Bool,
    Integer,
    String,
}

impl ParamKind {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ParamKind::Bool => v.is_boolean(),
            ParamKind::Integer => v.is_u64(),
            ParamKind::String => v.is_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub kind: ParamKind,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub api_name: ToolId,
    pub description: String,
    pub required_sequences: Vec<SequenceKind>,
    pub param_schema: BTreeMap<String, ParamSpec>,
}

impl ToolDescriptor {
    pub fn standard(api_name: ToolId) -> Self {
        let opt = |kind| ParamSpec { kind, required: false };
        let params: Vec<(&str, ParamSpec)> = match api_name {
            ToolId::Nicms => vec![
                ("in_pipeline", opt(ParamKind::Bool)),
                ("override", opt(ParamKind::Bool)),
                ("restrictive", opt(ParamKind::Bool)),
                ("arrhythmogenic", opt(ParamKind::Bool)),
            ],
            ToolId::Rag => vec![
                (
                    "query",
                    ParamSpec {
                        kind: ParamKind::String,
                        required: true,
                    },
                ),
                ("k", opt(ParamKind::Integer)),
            ],
            ToolId::Mrg => vec![("template", opt(ParamKind::String))],
            _ => vec![],
        };
        ToolDescriptor {
            api_name,
            description: api_name.description().to_string(),
            required_sequences: api_name.required_sequences().to_vec(),
            param_schema: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    tools: BTreeMap<ToolId, ToolDescriptor>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// The nine standard tools.
    pub fn standard() -> Self {
        let mut r = Registry::new();
        for t in ToolId::ALL {
            r.register(ToolDescriptor::standard(t)).expect("standard tools are distinct");
        }
        r
    }

    pub fn register(&mut self, d: ToolDescriptor) -> Result<(), AgentError> {
        if self.tools.contains_key(&d.api_name) {
            return Err(AgentError::DuplicateTool(d.api_name));
        }
        self.tools.insert(d.api_name, d);
        Ok(())
    }

    pub fn get(&self, t: ToolId) -> Option<&ToolDescriptor> {
        self.tools.get(&t)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.values()
    }

    /// Every action must name a registered tool and match its parameters.
    pub fn validate(&self, cmd: &ToolUseCommand) -> Result<(), AgentError> {
        for a in &cmd.actions {
            let d = self.get(a.api_name).ok_or(AgentError::UnregisteredTool(a.api_name))?;
            for (k, v) in &a.params {
                let spec = d.param_schema.get(k).ok_or_else(|| AgentError::InvalidParams {
                    tool: a.api_name,
                    reason: format!("unknown parameter `{k}`"),
                })?;
                if !spec.kind.accepts(v) {
                    return Err(AgentError::InvalidParams {
                        tool: a.api_name,
                        reason: format!("`{k}` must be {:?}", spec.kind),
                    });
                }
            }
            for (k, spec) in &d.param_schema {
                if spec.required && !a.params.contains_key(k) {
                    return Err(AgentError::InvalidParams {
                        tool: a.api_name,
                        reason: format!("missing `{k}`"),
                    });
                }
            }
        }
        Ok(())
    }
}
