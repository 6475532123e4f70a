//! Scripted dialogues with hand-labelled expected actions, replayed against
//! phantom studies.

use serde::{Deserialize, Serialize};

use super::executor::Agent;
use super::protocol::{AgentMessage, Event, Payload, ToolStatus, TranscriptRecord};
use super::session::SessionState;
use crate::backends::phantom::{phantom_generate, Phantom, PhantomSpec};
use crate::tool::ToolId;
use crate::volume::{CineVolume, SequenceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    pub text: String,
    /// Actions the planner must emit, in order.
    pub expect: Vec<ToolId>,
    /// Actions expected to be skipped by a closed gate; every other action
    /// must succeed.
    #[serde(default)]
    pub skipped: Vec<ToolId>,
    /// Predicted label of the last diagnosis produced in the turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    /// Overrides on the default phantom.
    #[serde(default)]
    pub phantom: PhantomSpec,
    /// Studies uploaded before the first turn.
    pub upload: Vec<SequenceKind>,
    pub turns: Vec<ScriptedTurn>,
}

pub fn parse_corpus(text: &str) -> Result<Vec<Dialogue>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// The bundled fifty-dialogue corpus.
pub fn builtin_corpus() -> Vec<Dialogue> {
    parse_corpus(include_str!("../../data/dialogues.jsonl")).expect("bundled corpus parses")
}

pub fn phantom_volume(p: &Phantom, kind: SequenceKind) -> Option<&CineVolume> {
    match kind {
        SequenceKind::SaxCine => Some(&p.sax),
        SequenceKind::Ch2Cine => p.ch2.as_ref().map(|(v, _)| v),
        SequenceKind::Ch4Cine => p.ch4.as_ref().map(|(v, _)| v),
        SequenceKind::SaxLge => p.lge.as_ref().map(|(v, _)| v),
        SequenceKind::RestMpi => None,
    }
}

/// A session holding the dialogue's phantom studies.
pub fn dialogue_session(d: &Dialogue) -> Result<SessionState, String> {
    let p = phantom_generate(&d.phantom).map_err(|e| format!("{}: {e}", d.id))?;
    let mut s = SessionState::new(d.id.clone());
    for &k in &d.upload {
        let v = phantom_volume(&p, k).ok_or_else(|| format!("{}: phantom has no {k} view", d.id))?;
        s.add_study(v.clone()).map_err(|e| format!("{}: {e}", d.id))?;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub expected: ScriptedTurn,
    pub actions: Vec<ToolId>,
    pub statuses: Vec<(ToolId, ToolStatus)>,
    pub diagnosis: Option<String>,
    pub answer: String,
    pub records: Vec<TranscriptRecord>,
}

impl TurnOutcome {
    pub fn routed(&self) -> bool {
        self.actions == self.expected.expect
    }

    pub fn statuses_match(&self) -> bool {
        self.statuses.iter().all(|(t, s)| match s {
            ToolStatus::Skipped => self.expected.skipped.contains(t),
            ToolStatus::Ok => !self.expected.skipped.contains(t),
            _ => false,
        })
    }

    /// True when the turn names no expected diagnosis or produced it.
    pub fn diagnosis_matches(&self) -> bool {
        self.expected.diagnosis.is_none() || self.expected.diagnosis == self.diagnosis
    }
}

pub fn outcome(expected: &ScriptedTurn, records: Vec<TranscriptRecord>) -> TurnOutcome {
    let mut actions = Vec::new();
    let mut statuses = Vec::new();
    let mut answer = String::new();
    let mut diagnosis = None;
    for r in &records {
        match &r.event {
            Event::ToolUse { command } => actions = command.tools(),
            Event::ToolResult { result } => {
                statuses.push((result.api_name, result.status));
                if let Some(Payload::Diagnosis { result, .. }) = &result.payload {
                    diagnosis = Some(result.predicted.clone());
                }
            }
            Event::Answer { message } => answer = message.text.clone(),
            Event::User { .. } => {}
        }
    }
    TurnOutcome {
        expected: expected.clone(),
        actions,
        statuses,
        diagnosis,
        answer,
        records,
    }
}

/// Plays every scripted turn on a fresh session.
pub fn replay(agent: &Agent, d: &Dialogue) -> Result<(SessionState, Vec<TurnOutcome>), String> {
    let mut s = dialogue_session(d)?;
    let mut out = Vec::new();
    for t in &d.turns {
        let records = agent.run_turn(&mut s, AgentMessage::user(t.text.clone())).map_err(|e| format!("{}: {e}", d.id))?;
        out.push(outcome(t, records));
    }
    Ok((s, out))
}
